//! Discrimination and calibration metrics over score/label vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation scenario tag carried through reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Clean,
    Fgsm,
    Pgd,
    Custom,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::Fgsm => "fgsm",
            Scenario::Pgd => "pgd",
            Scenario::Custom => "custom",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Probabilities with ground-truth labels for one scenario.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub scenario: Scenario,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, scenario: Scenario) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Data(format!("score {bad} outside [0, 1]")));
        }
        Ok(ScoredSet {
            scores,
            labels,
            scenario,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (pos, labels.len() - pos)
}

/// Rank-based Mann-Whitney AUROC with ties counted as one half.
pub fn auroc_from(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Shape("scores and labels must align".into()));
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(
            "AUROC undefined: only one class present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average ranks over tied groups, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn auroc(s: &ScoredSet) -> Result<f64> {
    auroc_from(&s.scores, &s.labels)
}

/// Kolmogorov-Smirnov statistic: the largest gap between the class-conditional
/// empirical CDFs, scanned over every distinct score.
pub fn ks_stat(s: &ScoredSet) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(&s.labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("KS undefined: only one class present".into()));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].partial_cmp(&s.scores[b]).unwrap());

    let mut best: f64 = 0.0;
    let mut c_pos = 0usize;
    let mut c_neg = 0usize;
    let mut i = 0;
    while i < order.len() {
        let v = s.scores[order[i]];
        while i < order.len() && s.scores[order[i]] == v {
            if s.labels[order[i]] == 1 {
                c_pos += 1;
            } else {
                c_neg += 1;
            }
            i += 1;
        }
        let gap = (c_pos as f64 / n_pos as f64 - c_neg as f64 / n_neg as f64).abs();
        best = best.max(gap);
    }
    Ok(best)
}

/// Gini coefficient, defined as 2*AUC - 1.
pub fn gini(s: &ScoredSet) -> Result<f64> {
    Ok(2.0 * auroc(s)? - 1.0)
}

/// Fraction of rows where the thresholded decision matches the label;
/// decision rule is `score >= tau` predicts positive.
pub fn accuracy(s: &ScoredSet, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Parameter(format!("tau = {tau} outside [0, 1]")));
    }
    if s.is_empty() {
        return Err(Error::Metric("accuracy of empty set".into()));
    }
    let hits = s
        .scores
        .iter()
        .zip(&s.labels)
        .filter(|&(&sc, &l)| u8::from(sc >= tau) == l)
        .count();
    Ok(hits as f64 / s.len() as f64)
}

/// Brier score: mean squared error of the probabilities.
pub fn brier(s: &ScoredSet) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Metric("brier of empty set".into()));
    }
    let total: f64 = s
        .scores
        .iter()
        .zip(&s.labels)
        .map(|(&p, &y)| (p - f64::from(y)).powi(2))
        .sum();
    Ok(total / s.len() as f64)
}

/// Binning strategy for ECE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStrategy {
    EqualWidth,
    EqualMass,
}

/// Reliability-diagram bins: right-closed partition of [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReliabilityBins {
    /// m + 1 edges; bin k covers (edges[k], edges[k+1]], except bin 0 which
    /// also takes score 0.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean_confidence: Vec<f64>,
    pub accuracy: Vec<f64>,
}

/// Expected Calibration Error with `m` equal-width bins. Empty bins
/// contribute zero. Scores exactly on a boundary fall to the lower bin;
/// score 0 falls in the first bin.
pub fn ece(s: &ScoredSet, m: usize) -> Result<(f64, ReliabilityBins)> {
    ece_with(s, m, BinStrategy::EqualWidth)
}

pub fn ece_with(s: &ScoredSet, m: usize, strategy: BinStrategy) -> Result<(f64, ReliabilityBins)> {
    if m == 0 {
        return Err(Error::Parameter("ECE needs at least one bin".into()));
    }
    if s.is_empty() {
        return Err(Error::Metric("ECE of empty set".into()));
    }
    let edges: Vec<f64> = match strategy {
        BinStrategy::EqualWidth => (0..=m).map(|k| k as f64 / m as f64).collect(),
        BinStrategy::EqualMass => {
            let mut sorted = s.scores.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut e = vec![0.0];
            for k in 1..m {
                e.push(crate::dataio::percentile(&sorted, k as f64 / m as f64));
            }
            e.push(1.0);
            e
        }
    };

    // Right-closed assignment: bin k is (edges[k], edges[k+1]]; boundary
    // scores go to the lower bin, score 0 to the first.
    let assign = |score: f64| -> usize {
        edges[1..m].partition_point(|e| score > *e).min(m - 1)
    };

    let mut counts = vec![0usize; m];
    let mut conf_sum = vec![0.0; m];
    let mut acc_sum = vec![0.0; m];
    for (&p, &y) in s.scores.iter().zip(&s.labels) {
        let k = assign(p);
        counts[k] += 1;
        conf_sum[k] += p;
        acc_sum[k] += f64::from(y);
    }
    let n = s.len() as f64;
    let mut total = 0.0;
    let mut mean_confidence = vec![0.0; m];
    let mut accuracy = vec![0.0; m];
    for k in 0..m {
        if counts[k] > 0 {
            let c = counts[k] as f64;
            mean_confidence[k] = conf_sum[k] / c;
            accuracy[k] = acc_sum[k] / c;
            total += (c / n) * (accuracy[k] - mean_confidence[k]).abs();
        }
    }
    Ok((
        total,
        ReliabilityBins {
            edges,
            counts,
            mean_confidence,
            accuracy,
        },
    ))
}

/// Cumulative accuracy profile: population share scanned in descending score
/// order against the share of positives captured, exported as plot-ready
/// coordinates. Standard construction.
pub fn cap_curve(s: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    let (n_pos, _) = class_counts(&s.labels);
    if n_pos == 0 {
        return Err(Error::Metric("CAP undefined without positives".into()));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        s.scores[b]
            .partial_cmp(&s.scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let n = s.len() as f64;
    let mut captured = 0usize;
    let mut pts = Vec::with_capacity(s.len() + 1);
    pts.push((0.0, 0.0));
    for (i, &idx) in order.iter().enumerate() {
        if s.labels[idx] == 1 {
            captured += 1;
        }
        pts.push(((i + 1) as f64 / n, captured as f64 / n_pos as f64));
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: Vec<f64>, labels: Vec<u8>) -> ScoredSet {
        ScoredSet::new(scores, labels, Scenario::Custom).unwrap()
    }

    /// O(n^2) pair-counting oracle: (concordant + ties/2) / (n_pos * n_neg).
    fn auroc_pair_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, (&si, &yi)) in scores.iter().zip(labels).enumerate() {
            for (&sj, &yj) in scores.iter().zip(labels).skip(i + 1) {
                let (sp, sn) = match (yi, yj) {
                    (1, 0) => (si, sj),
                    (0, 1) => (sj, si),
                    _ => continue,
                };
                pairs += 1.0;
                if sp > sn {
                    num += 1.0;
                } else if sp == sn {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    fn pseudo_random_set(n: usize, seed: u64) -> ScoredSet {
        use rand::RngExt;
        let mut rng = crate::seed::rng_from(seed);
        // Coarse grid keeps plenty of ties for the tie-handling paths.
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random::<f64>() * 20.0).round() / 20.0)
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.4)).collect();
        set(scores, labels)
    }

    #[test]
    fn perfect_separation_is_one() {
        let s = set(vec![0.9, 0.9, 0.1, 0.1], vec![1, 1, 0, 0]);
        assert_eq!(auroc(&s).unwrap(), 1.0);
        assert_eq!(ks_stat(&s).unwrap(), 1.0);
        assert_eq!(gini(&s).unwrap(), 1.0);
    }

    #[test]
    fn constant_scores_are_chance() {
        let s = set(vec![0.5; 6], vec![1, 0, 1, 0, 1, 0]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
        assert_eq!(ks_stat(&s).unwrap(), 0.0);
        assert!((gini(&s).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn auroc_matches_pair_oracle() {
        let s = pseudo_random_set(200, 17);
        let fast = auroc(&s).unwrap();
        let slow = auroc_pair_oracle(&s.scores, &s.labels);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn ks_matches_exhaustive_threshold_scan() {
        let s = pseudo_random_set(20, 5);
        let fast = ks_stat(&s).unwrap();
        let n1 = s.labels.iter().filter(|&&l| l == 1).count() as f64;
        let n0 = s.len() as f64 - n1;
        let mut slow: f64 = 0.0;
        for &t in &s.scores {
            let f1 = s
                .scores
                .iter()
                .zip(&s.labels)
                .filter(|&(&sc, &l)| l == 1 && sc <= t)
                .count() as f64
                / n1;
            let f0 = s
                .scores
                .iter()
                .zip(&s.labels)
                .filter(|&(&sc, &l)| l == 0 && sc <= t)
                .count() as f64
                / n0;
            slow = slow.max((f1 - f0).abs());
        }
        assert_eq!(fast, slow);
    }

    #[test]
    fn gini_identity_holds_tightly() {
        for seed in [1, 2, 3] {
            let s = pseudo_random_set(150, seed);
            let a = auroc(&s).unwrap();
            let g = gini(&s).unwrap();
            assert!((g - (2.0 * a - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn paper_fixture_gini() {
        let auc = 0.7350_f64;
        assert!((2.0 * auc - 1.0 - 0.470).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_metric_error() {
        let s = set(vec![0.2, 0.4], vec![1, 1]);
        assert!(matches!(auroc(&s), Err(Error::Metric(_))));
        assert!(matches!(ks_stat(&s), Err(Error::Metric(_))));
    }

    #[test]
    fn auroc_invariant_under_monotone_transform() {
        let s = pseudo_random_set(120, 23);
        let base = auroc(&s).unwrap();
        let cubed = set(
            s.scores.iter().map(|&p| p.powi(3)).collect(),
            s.labels.clone(),
        );
        let squashed = set(
            s.scores
                .iter()
                .map(|&p| crate::nn::sigmoid(5.0 * p - 2.5))
                .collect(),
            s.labels.clone(),
        );
        assert!((auroc(&cubed).unwrap() - base).abs() < 1e-12);
        assert!((auroc(&squashed).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn accuracy_cases() {
        let perfect = set(vec![0.9, 0.8, 0.1], vec![1, 1, 0]);
        assert_eq!(accuracy(&perfect, 0.5).unwrap(), 1.0);
        let wrong = set(vec![0.4, 0.4], vec![1, 1]);
        assert_eq!(accuracy(&wrong, 0.5).unwrap(), 0.0);
        // 10-row hand case: correct decisions at tau = 0.5 are rows
        // 1, 2, 4, 7, 8, 10 -> 6/10.
        let s = set(
            vec![0.9, 0.8, 0.7, 0.6, 0.55, 0.45, 0.3, 0.2, 0.1, 0.05],
            vec![1, 1, 0, 1, 0, 1, 0, 0, 1, 0],
        );
        assert_eq!(accuracy(&s, 0.5).unwrap(), 0.6);
    }

    #[test]
    fn brier_cases() {
        let perfect = set(vec![1.0, 0.0], vec![1, 0]);
        assert_eq!(brier(&perfect).unwrap(), 0.0);
        let half = set(vec![0.5; 4], vec![1, 0, 1, 0]);
        assert_eq!(brier(&half).unwrap(), 0.25);
        let hand = set(vec![0.8, 0.3, 0.6, 0.2, 0.9], vec![1, 0, 1, 0, 0]);
        assert!((brier(&hand).unwrap() - 0.228).abs() < 1e-12);
    }

    #[test]
    fn ece_perfectly_calibrated_is_zero() {
        let s = set(
            vec![0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75],
            vec![0, 0, 1, 0, 1, 1, 1, 0],
        );
        let (e, _) = ece(&s, 2).unwrap();
        assert!(e.abs() < 1e-15);
    }

    #[test]
    fn ece_maximal_miscalibration() {
        let s = set(vec![1.0; 5], vec![0; 5]);
        let (e, _) = ece(&s, 10).unwrap();
        assert_eq!(e, 1.0);
    }

    #[test]
    fn ece_matches_bin_by_bin_oracle() {
        let s = pseudo_random_set(100, 31);
        let m = 10;
        let (fast, bins) = ece(&s, m).unwrap();
        // Oracle: test each score against explicit interval bounds.
        let mut by_bin: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (i, &p) in s.scores.iter().enumerate() {
            let mut assigned = None;
            for cand in 0..m {
                let lo = cand as f64 / m as f64;
                let hi = (cand + 1) as f64 / m as f64;
                let inside = if cand == 0 {
                    (0.0..=hi).contains(&p)
                } else {
                    p > lo && p <= hi
                };
                if inside {
                    assigned = Some(cand);
                    break;
                }
            }
            by_bin[assigned.expect("score must land in a bin")].push(i);
        }
        let mut slow = 0.0;
        for (k, members) in by_bin.iter().enumerate() {
            assert_eq!(bins.counts[k], members.len());
            if members.is_empty() {
                continue;
            }
            let c = members.len() as f64;
            let conf = members.iter().map(|&i| s.scores[i]).sum::<f64>() / c;
            let acc = members.iter().map(|&i| f64::from(s.labels[i])).sum::<f64>() / c;
            slow += c / s.len() as f64 * (acc - conf).abs();
        }
        assert!((fast - slow).abs() < 1e-12);
    }

    #[test]
    fn ece_single_bin_is_mean_gap() {
        let s = pseudo_random_set(80, 41);
        let (e, _) = ece(&s, 1).unwrap();
        let mean_s = s.scores.iter().sum::<f64>() / s.len() as f64;
        let mean_y = s.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / s.len() as f64;
        assert!((e - (mean_s - mean_y).abs()).abs() < 1e-15);
    }

    #[test]
    fn equal_mass_bins_cover_everything() {
        let s = pseudo_random_set(100, 51);
        let (_, bins) = ece_with(&s, 5, BinStrategy::EqualMass).unwrap();
        assert_eq!(bins.counts.iter().sum::<usize>(), 100);
    }

    #[test]
    fn cap_curve_ends_at_one_one() {
        let s = pseudo_random_set(60, 61);
        let pts = cap_curve(&s).unwrap();
        assert_eq!(pts.first().unwrap(), &(0.0, 0.0));
        let last = pts.last().unwrap();
        assert!((last.0 - 1.0).abs() < 1e-12 && (last.1 - 1.0).abs() < 1e-12);
        for w in pts.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }
}
