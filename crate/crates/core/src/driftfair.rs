//! Distributional drift (PSI, KS, Wasserstein-1) and two-group fairness
//! deltas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::percentile;
use crate::error::{Error, Result};

/// Floor applied to bin probabilities before the PSI log; the raw formula is
/// undefined on empty bins.
pub const PSI_EPS: f64 = 1e-6;

/// Interior bin edges from baseline quantiles; duplicates collapse so the
/// construction degrades gracefully when the baseline has few distinct values.
pub fn psi_edges(baseline: &[f64], bins: usize) -> Result<Vec<f64>> {
    if baseline.is_empty() {
        return Err(Error::Data("PSI baseline is empty".into()));
    }
    if bins < 2 {
        return Err(Error::Parameter("PSI needs at least two bins".into()));
    }
    let mut sorted = baseline.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut edges = Vec::new();
    for k in 1..bins {
        let q = percentile(&sorted, k as f64 / bins as f64);
        if edges.last() != Some(&q) {
            edges.push(q);
        }
    }
    Ok(edges)
}

fn bin_proportions(values: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![0usize; edges.len() + 1];
    for &v in values {
        let k = edges.partition_point(|e| v > *e);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / values.len() as f64)
        .collect()
}

/// Population Stability Index between two samples on shared bin edges.
/// Probabilities are floored at [`PSI_EPS`] on both sides, which keeps the
/// formula symmetric and finite.
pub fn psi_with_edges(baseline: &[f64], shifted: &[f64], edges: &[f64]) -> Result<f64> {
    if baseline.is_empty() || shifted.is_empty() {
        return Err(Error::Data("PSI inputs must be nonempty".into()));
    }
    let p = bin_proportions(baseline, edges);
    let q = bin_proportions(shifted, edges);
    Ok(p
        .iter()
        .zip(&q)
        .map(|(&pk, &qk)| {
            let pf = pk.max(PSI_EPS);
            let qf = qk.max(PSI_EPS);
            (pf - qf) * (pf / qf).ln()
        })
        .sum())
}

/// PSI with edges taken from baseline quantiles (`bins` deciles by default in
/// the pipeline).
pub fn psi(baseline: &[f64], shifted: &[f64], bins: usize) -> Result<f64> {
    let edges = psi_edges(baseline, bins)?;
    psi_with_edges(baseline, shifted, &edges)
}

/// Two-sample Kolmogorov-Smirnov distance: sup-norm gap of empirical CDFs.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("KS inputs must be nonempty".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: f64 = 0.0;
    while i < sa.len() || j < sb.len() {
        let v = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// Wasserstein-1 distance: for equal sizes the mean absolute difference of
/// sorted samples, in general the integral of |CDF_a - CDF_b| over the merged
/// breakpoints.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("Wasserstein inputs must be nonempty".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    if sa.len() == sb.len() {
        let n = sa.len() as f64;
        return Ok(sa
            .iter()
            .zip(&sb)
            .map(|(&x, &y)| (x - y).abs())
            .sum::<f64>()
            / n);
    }
    // Merged breakpoints: between consecutive values the CDF gap is constant.
    let mut points: Vec<f64> = sa.iter().chain(sb.iter()).copied().collect();
    points.sort_by(|x, y| x.partial_cmp(y).unwrap());
    points.dedup();
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let mut total = 0.0;
    for w in points.windows(2) {
        let fa = sa.partition_point(|&v| v <= w[0]) as f64 / na;
        let fb = sb.partition_point(|&v| v <= w[0]) as f64 / nb;
        total += (fa - fb).abs() * (w[1] - w[0]);
    }
    Ok(total)
}

fn group_labels(groups: &[String]) -> Result<(String, String)> {
    let mut distinct: Vec<&String> = Vec::new();
    for g in groups {
        if !distinct.contains(&g) {
            distinct.push(g);
        }
    }
    distinct.sort();
    if distinct.len() != 2 {
        return Err(Error::Metric(format!(
            "fairness deltas need exactly two groups, found {}: {:?}",
            distinct.len(),
            distinct.iter().take(4).collect::<Vec<_>>()
        )));
    }
    Ok((distinct[0].clone(), distinct[1].clone()))
}

/// Demographic parity difference P(pred=1 | A) - P(pred=1 | B) with the two
/// groups ordered lexicographically; decision rule `score >= tau`.
pub fn demographic_parity_diff(scores: &[f64], groups: &[String], tau: f64) -> Result<f64> {
    if scores.len() != groups.len() || scores.is_empty() {
        return Err(Error::Shape("scores and groups must align".into()));
    }
    let (ga, gb) = group_labels(groups)?;
    let rate = |g: &str| -> f64 {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        members.iter().filter(|&&i| scores[i] >= tau).count() as f64 / members.len() as f64
    };
    Ok(rate(&ga) - rate(&gb))
}

/// Equal opportunity difference TPR(A) - TPR(B); every group must contain at
/// least one positive-label row.
pub fn equal_opportunity_diff(
    scores: &[f64],
    labels: &[u8],
    groups: &[String],
    tau: f64,
) -> Result<f64> {
    if scores.len() != labels.len() || scores.len() != groups.len() || scores.is_empty() {
        return Err(Error::Shape("scores, labels and groups must align".into()));
    }
    let (ga, gb) = group_labels(groups)?;
    let tpr = |g: &str| -> Result<f64> {
        let pos: Vec<usize> = (0..groups.len())
            .filter(|&i| groups[i] == g && labels[i] == 1)
            .collect();
        if pos.is_empty() {
            return Err(Error::Metric(format!(
                "group `{g}` has no positive-label rows"
            )));
        }
        Ok(pos.iter().filter(|&&i| scores[i] >= tau).count() as f64 / pos.len() as f64)
    };
    Ok(tpr(&ga)? - tpr(&gb)?)
}

/// Per-group positive rates and TPRs for the fairness report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub count: usize,
    pub positive_rate: f64,
    pub tpr: Option<f64>,
}

pub fn per_group_stats(scores: &[f64], labels: &[u8], groups: &[String], tau: f64) -> Vec<GroupStats> {
    let mut by_group: BTreeMap<&String, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    by_group
        .into_iter()
        .map(|(g, idx)| {
            let flagged = idx.iter().filter(|&&i| scores[i] >= tau).count();
            let pos: Vec<usize> = idx.iter().copied().filter(|&i| labels[i] == 1).collect();
            let tpr = if pos.is_empty() {
                None
            } else {
                Some(pos.iter().filter(|&&i| scores[i] >= tau).count() as f64 / pos.len() as f64)
            };
            GroupStats {
                group: g.clone(),
                count: idx.len(),
                positive_rate: flagged as f64 / idx.len() as f64,
                tpr,
            }
        })
        .collect()
}
