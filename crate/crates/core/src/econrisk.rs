//! Economic risk quantification: expected loss, Monte-Carlo VaR/ES,
//! cost-aware decision thresholds and economic confusion matrices.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ScoredSet;
use crate::parallel::{map_indexed, map_indexed_seq};
use crate::seed::{derive_stream, rng_from};

pub const DEFAULT_LGD: f64 = 0.45;
pub const DEFAULT_EAD: f64 = 1.0;

/// Per-instance loss-given-default and exposure-at-default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExposureBook {
    pub lgd: Vec<f64>,
    pub ead: Vec<f64>,
}

impl ExposureBook {
    /// Regulatory-convention defaults (LGD 0.45, EAD 1.0) for datasets that
    /// carry no exposure columns.
    pub fn with_defaults(n: usize) -> Self {
        ExposureBook {
            lgd: vec![DEFAULT_LGD; n],
            ead: vec![DEFAULT_EAD; n],
        }
    }

    pub fn new(lgd: Vec<f64>, ead: Vec<f64>) -> Result<Self> {
        if lgd.len() != ead.len() {
            return Err(Error::Data(format!(
                "{} LGD values vs {} EAD values",
                lgd.len(),
                ead.len()
            )));
        }
        if lgd.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data("LGD values must lie in [0, 1]".into()));
        }
        if ead.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data("EAD values must be finite and >= 0".into()));
        }
        Ok(ExposureBook { lgd, ead })
    }

    pub fn len(&self) -> usize {
        self.lgd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lgd.is_empty()
    }
}

/// Simulated portfolio loss sample with a cached sorted copy for quantiles.
#[derive(Debug, Clone)]
pub struct LossDistribution {
    pub losses: Vec<f64>,
    sorted: Vec<f64>,
    pub seed: u64,
    pub n_sims: usize,
}

impl LossDistribution {
    pub fn from_losses(losses: Vec<f64>, seed: u64) -> Self {
        let mut sorted = losses.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n_sims = losses.len();
        LossDistribution {
            losses,
            sorted,
            seed,
            n_sims,
        }
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

/// Per-instance and portfolio expected loss: EL_i = PD_i * LGD_i * EAD_i.
pub fn expected_loss(pd: &[f64], book: &ExposureBook) -> Result<(Vec<f64>, f64)> {
    if pd.len() != book.len() {
        return Err(Error::Data(format!(
            "{} PDs vs {} exposures",
            pd.len(),
            book.len()
        )));
    }
    if let Some(bad) = pd.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Data(format!("PD {bad} outside [0, 1]")));
    }
    let per: Vec<f64> = pd
        .iter()
        .zip(book.lgd.iter().zip(&book.ead))
        .map(|(&p, (&l, &e))| p * l * e)
        .collect();
    let total = per.iter().sum();
    Ok((per, total))
}

fn simulate_one(pd: &[f64], book: &ExposureBook, sim_seed: u64) -> f64 {
    let mut rng = rng_from(sim_seed);
    let mut loss = 0.0;
    for (i, &p) in pd.iter().enumerate() {
        if rng.random::<f64>() < p {
            loss += book.lgd[i] * book.ead[i];
        }
    }
    loss
}

/// Monte-Carlo portfolio losses under independent Bernoulli(PD_i) defaults.
/// Each simulation derives its own seed, so the sample is independent of
/// shard count.
pub fn simulate_losses(
    pd: &[f64],
    book: &ExposureBook,
    n_sims: usize,
    seed: u64,
) -> Result<LossDistribution> {
    check_sim_inputs(pd, book, n_sims)?;
    let losses = map_indexed(n_sims, |s| simulate_one(pd, book, derive_stream(seed, s as u64)));
    Ok(LossDistribution::from_losses(losses, seed))
}

/// Sequential twin of [`simulate_losses`] for equivalence tests and benches.
pub fn simulate_losses_seq(
    pd: &[f64],
    book: &ExposureBook,
    n_sims: usize,
    seed: u64,
) -> Result<LossDistribution> {
    check_sim_inputs(pd, book, n_sims)?;
    let losses =
        map_indexed_seq(n_sims, |s| simulate_one(pd, book, derive_stream(seed, s as u64)));
    Ok(LossDistribution::from_losses(losses, seed))
}

fn check_sim_inputs(pd: &[f64], book: &ExposureBook, n_sims: usize) -> Result<()> {
    if n_sims < 1000 {
        return Err(Error::Parameter(format!(
            "n_sims = {n_sims} too small; need at least 1000"
        )));
    }
    if pd.len() != book.len() {
        return Err(Error::Data(format!(
            "{} PDs vs {} exposures",
            pd.len(),
            book.len()
        )));
    }
    Ok(())
}

/// Value-at-risk as the empirical generalized inverse: the smallest simulated
/// loss whose CDF reaches `alpha`.
pub fn var(dist: &LossDistribution, alpha: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha = {alpha} outside (0, 1)")));
    }
    if dist.sorted.is_empty() {
        return Err(Error::Data("empty loss distribution".into()));
    }
    Ok(crate::dataio::percentile(&dist.sorted, alpha))
}

/// Expected shortfall: mean of every simulated loss at or above VaR.
pub fn es(dist: &LossDistribution, alpha: f64) -> Result<f64> {
    let v = var(dist, alpha)?;
    let tail: Vec<f64> = dist.sorted.iter().filter(|&&l| l >= v).copied().collect();
    // Nonempty by construction: VaR is itself one of the losses.
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Per-error costs for the decision layer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostSpec {
    pub cost_fp: f64,
    pub cost_fn: f64,
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cost_fp < 0.0 || self.cost_fn < 0.0 {
            return Err(Error::Parameter("costs must be non-negative".into()));
        }
        if self.cost_fp == 0.0 && self.cost_fn == 0.0 {
            return Err(Error::Parameter("costs must not both be zero".into()));
        }
        Ok(())
    }
}

/// One point of the threshold-cost curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostPoint {
    pub tau: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub cost: f64,
}

/// Empirical cost curve over an inclusive [0, 1] threshold grid, plus the
/// cost-minimizing threshold (ties break toward the smaller tau).
/// Decision rule: `score >= tau` predicts positive.
pub fn cost_curve(s: &ScoredSet, cost: &CostSpec, grid_size: usize) -> Result<(Vec<CostPoint>, f64)> {
    cost.validate()?;
    if grid_size < 2 {
        return Err(Error::Parameter("grid needs at least two points".into()));
    }
    let mut curve = Vec::with_capacity(grid_size);
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..grid_size {
        let tau = k as f64 / (grid_size - 1) as f64;
        let mut fp = 0usize;
        let mut fnn = 0usize;
        for (&sc, &y) in s.scores.iter().zip(&s.labels) {
            let pred = sc >= tau;
            match (pred, y) {
                (true, 0) => fp += 1,
                (false, 1) => fnn += 1,
                _ => {}
            }
        }
        let c = cost.cost_fp * fp as f64 + cost.cost_fn * fnn as f64;
        if c < best.0 {
            best = (c, tau);
        }
        curve.push(CostPoint {
            tau,
            false_positives: fp,
            false_negatives: fnn,
            cost: c,
        });
    }
    Ok((curve, best.1))
}

/// Analytical Bayes-optimal threshold c_FN / (c_FN + c_FP).
pub fn bayes_threshold(cost: &CostSpec) -> Result<f64> {
    cost.validate()?;
    Ok(cost.cost_fn / (cost.cost_fn + cost.cost_fp))
}

/// Confusion counts with economic weighting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EconomicConfusion {
    pub tau: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// c_FP * FP + c_FN * FN.
    pub misclassification_cost: f64,
    /// Expected loss slipping past the screen: sum of PD*LGD*EAD over false
    /// negatives.
    pub fn_expected_loss: f64,
}

/// Confusion counts at `tau` plus cost-weighted totals and the expected loss
/// attributable to false-negative exposures.
pub fn economic_confusion(
    s: &ScoredSet,
    tau: f64,
    cost: &CostSpec,
    book: &ExposureBook,
) -> Result<EconomicConfusion> {
    cost.validate()?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Parameter(format!("tau = {tau} outside [0, 1]")));
    }
    if s.len() != book.len() {
        return Err(Error::Data(format!(
            "{} scored rows vs {} exposures",
            s.len(),
            book.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    let mut fn_el = 0.0;
    for (i, (&sc, &y)) in s.scores.iter().zip(&s.labels).enumerate() {
        match (sc >= tau, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => {
                fn_ += 1;
                fn_el += sc * book.lgd[i] * book.ead[i];
            }
        }
    }
    Ok(EconomicConfusion {
        tau,
        tp,
        fp,
        tn,
        fn_,
        misclassification_cost: cost.cost_fp * fp as f64 + cost.cost_fn * fn_ as f64,
        fn_expected_loss: fn_el,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Scenario;
    use rand::RngExt;

    fn set(scores: Vec<f64>, labels: Vec<u8>) -> ScoredSet {
        ScoredSet::new(scores, labels, Scenario::Custom).unwrap()
    }

    #[test]
    fn expected_loss_formula() {
        let book = ExposureBook::new(vec![0.5], vec![1000.0]).unwrap();
        let (per, total) = expected_loss(&[0.1], &book).unwrap();
        assert_eq!(per, vec![50.0]);
        assert_eq!(total, 50.0);
    }

    #[test]
    fn expected_loss_zero_pd() {
        let book = ExposureBook::with_defaults(4);
        let (_, total) = expected_loss(&[0.0; 4], &book).unwrap();
        assert_eq!(total, 0.0);
    }

    #[test]
    fn expected_loss_matches_manual_three_instance_case() {
        let book = ExposureBook::new(vec![0.4, 0.6, 0.9], vec![100.0, 50.0, 10.0]).unwrap();
        let pd = [0.2, 0.5, 0.05];
        let (per, total) = expected_loss(&pd, &book).unwrap();
        let manual = [0.2 * 0.4 * 100.0, 0.5 * 0.6 * 50.0, 0.05 * 0.9 * 10.0];
        for (a, b) in per.iter().zip(&manual) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((total - manual.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn expected_loss_scales_linearly_in_ead() {
        let book = ExposureBook::new(vec![0.3, 0.7], vec![10.0, 20.0]).unwrap();
        let scaled = ExposureBook::new(vec![0.3, 0.7], vec![30.0, 60.0]).unwrap();
        let pd = [0.1, 0.4];
        let (_, a) = expected_loss(&pd, &book).unwrap();
        let (_, b) = expected_loss(&pd, &scaled).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-12);
    }

    #[test]
    fn degenerate_bernoulli_simulations() {
        let book = ExposureBook::new(vec![0.5, 0.5], vec![10.0, 30.0]).unwrap();
        let all_one = simulate_losses(&[1.0, 1.0], &book, 1000, 7).unwrap();
        let expected = 0.5 * 10.0 + 0.5 * 30.0;
        assert!(all_one.losses.iter().all(|&l| l == expected));
        let all_zero = simulate_losses(&[0.0, 0.0], &book, 1000, 7).unwrap();
        assert!(all_zero.losses.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn simulation_mean_matches_portfolio_el() {
        let mut rng = crate::seed::rng_from(3);
        let pd: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 0.3).collect();
        let book = ExposureBook::with_defaults(50);
        let (_, el) = expected_loss(&pd, &book).unwrap();
        let dist = simulate_losses(&pd, &book, 100_000, 11).unwrap();
        let mean = dist.losses.iter().sum::<f64>() / dist.losses.len() as f64;
        let sd = (dist
            .losses
            .iter()
            .map(|l| (l - mean).powi(2))
            .sum::<f64>()
            / dist.losses.len() as f64)
            .sqrt();
        let tol = 3.0 * sd / (dist.losses.len() as f64).sqrt();
        assert!((mean - el).abs() < tol, "mean {mean} vs EL {el} (tol {tol})");
    }

    #[test]
    fn parallel_simulation_matches_sequential() {
        let pd = vec![0.1, 0.4, 0.8];
        let book = ExposureBook::with_defaults(3);
        let a = simulate_losses(&pd, &book, 2000, 5).unwrap();
        let b = simulate_losses_seq(&pd, &book, 2000, 5).unwrap();
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn var_on_1_to_100_fixture() {
        let dist = LossDistribution::from_losses((1..=100).map(f64::from).collect(), 0);
        assert_eq!(var(&dist, 0.95).unwrap(), 95.0);
        // Sort-and-scan oracle across a grid of alphas.
        for alpha in [0.01, 0.25, 0.5, 0.75, 0.95, 0.99] {
            let oracle = dist
                .sorted()
                .iter()
                .enumerate()
                .find(|(i, _)| (i + 1) as f64 / 100.0 >= alpha)
                .map(|(_, &v)| v)
                .unwrap();
            assert_eq!(var(&dist, alpha).unwrap(), oracle, "alpha {alpha}");
        }
    }

    #[test]
    fn var_constant_distribution() {
        let dist = LossDistribution::from_losses(vec![7.0; 1000], 0);
        for alpha in [0.05, 0.5, 0.95] {
            assert_eq!(var(&dist, alpha).unwrap(), 7.0);
        }
    }

    #[test]
    fn es_on_1_to_100_fixture() {
        let dist = LossDistribution::from_losses((1..=100).map(f64::from).collect(), 0);
        // Tail {95..100} averages to 97.5.
        assert_eq!(es(&dist, 0.95).unwrap(), 97.5);
        let c = LossDistribution::from_losses(vec![3.0; 1000], 0);
        assert_eq!(es(&c, 0.9).unwrap(), 3.0);
    }

    #[test]
    fn es_dominates_var_on_random_distributions() {
        let mut rng = crate::seed::rng_from(17);
        for _ in 0..1000 {
            let n = 50 + (rng.random::<f64>() * 200.0) as usize;
            let losses: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 100.0).collect();
            let dist = LossDistribution::from_losses(losses, 0);
            let alpha = 0.5 + rng.random::<f64>() * 0.45;
            assert!(es(&dist, alpha).unwrap() >= var(&dist, alpha).unwrap());
        }
    }

    #[test]
    fn var_es_monotone_in_alpha() {
        let mut rng = crate::seed::rng_from(23);
        let losses: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 50.0).collect();
        let dist = LossDistribution::from_losses(losses, 0);
        let alphas = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];
        for pair in alphas.windows(2) {
            assert!(var(&dist, pair[1]).unwrap() >= var(&dist, pair[0]).unwrap());
            assert!(es(&dist, pair[1]).unwrap() >= es(&dist, pair[0]).unwrap());
        }
    }

    #[test]
    fn cost_curve_zero_fn_cost_prefers_first_fp_free_tau() {
        let s = set(
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.65, 0.7, 0.75, 0.8],
            vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1],
        );
        let cost = CostSpec {
            cost_fp: 1.0,
            cost_fn: 0.0,
        };
        let (curve, tau_star) = cost_curve(&s, &cost, 101).unwrap();
        // Oracle: smallest grid tau with zero false positives.
        let first_fp_free = curve
            .iter()
            .find(|p| p.false_positives == 0)
            .map(|p| p.tau)
            .unwrap();
        assert_eq!(tau_star, first_fp_free);
        // max negative score is 0.5; the 101-point grid hits it exactly, and
        // score >= tau counts 0.5 as positive, so tau* must be just above.
        assert!(tau_star > 0.5 && tau_star <= 0.52);
    }

    #[test]
    fn cost_curve_perfect_scores_reach_zero_cost() {
        let s = set(
            vec![0.9, 0.85, 0.8, 0.2, 0.15, 0.1, 0.05, 0.25, 0.95, 0.75],
            vec![1, 1, 1, 0, 0, 0, 0, 0, 1, 1],
        );
        let cost = CostSpec {
            cost_fp: 2.0,
            cost_fn: 3.0,
        };
        let (curve, tau_star) = cost_curve(&s, &cost, 101).unwrap();
        let best = curve.iter().find(|p| p.tau == tau_star).unwrap();
        assert_eq!(best.cost, 0.0);
        assert!(tau_star > 0.25 && tau_star <= 0.75);
    }

    #[test]
    fn cost_curve_at_zero_flags_everyone() {
        let s = set(vec![0.3, 0.6, 0.8, 0.1], vec![1, 0, 1, 0]);
        let cost = CostSpec {
            cost_fp: 5.0,
            cost_fn: 1.0,
        };
        let (curve, _) = cost_curve(&s, &cost, 11).unwrap();
        assert_eq!(curve[0].tau, 0.0);
        assert_eq!(curve[0].false_positives, 2);
        assert_eq!(curve[0].cost, 10.0);
    }

    #[test]
    fn cost_curve_matches_independent_confusion_pass() {
        let mut rng = crate::seed::rng_from(29);
        let scores: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..200).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
        let s = set(scores, labels);
        let cost = CostSpec {
            cost_fp: 1.5,
            cost_fn: 4.0,
        };
        let book = ExposureBook::with_defaults(200);
        let (curve, _) = cost_curve(&s, &cost, 51).unwrap();
        for p in &curve {
            let conf = economic_confusion(&s, p.tau, &cost, &book).unwrap();
            assert_eq!(conf.fp, p.false_positives);
            assert_eq!(conf.fn_, p.false_negatives);
            assert!((conf.misclassification_cost - p.cost).abs() < 1e-12);
        }
    }

    #[test]
    fn bayes_threshold_cases() {
        let sym = CostSpec {
            cost_fp: 2.0,
            cost_fn: 2.0,
        };
        assert_eq!(bayes_threshold(&sym).unwrap(), 0.5);
        let skew = CostSpec {
            cost_fp: 1.0,
            cost_fn: 5.0,
        };
        assert!((bayes_threshold(&skew).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let zero_fn = CostSpec {
            cost_fp: 1.0,
            cost_fn: 0.0,
        };
        assert_eq!(bayes_threshold(&zero_fn).unwrap(), 0.0);
        let both_zero = CostSpec {
            cost_fp: 0.0,
            cost_fn: 0.0,
        };
        assert!(matches!(
            bayes_threshold(&both_zero),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn economic_confusion_cases() {
        let cost = CostSpec {
            cost_fp: 1.0,
            cost_fn: 2.0,
        };
        let perfect = set(vec![0.9, 0.8, 0.1, 0.2], vec![1, 1, 0, 0]);
        let book = ExposureBook::with_defaults(4);
        let conf = economic_confusion(&perfect, 0.5, &cost, &book).unwrap();
        assert_eq!((conf.fp, conf.fn_, conf.misclassification_cost), (0, 0, 0.0));

        let at_zero = economic_confusion(&perfect, 0.0, &cost, &book).unwrap();
        assert_eq!(at_zero.fn_, 0);
        assert_eq!(at_zero.fp, 2);
    }

    #[test]
    fn economic_confusion_six_row_hand_case() {
        let s = set(
            vec![0.9, 0.6, 0.4, 0.3, 0.8, 0.2],
            vec![1, 0, 1, 0, 0, 1],
        );
        let cost = CostSpec {
            cost_fp: 1.0,
            cost_fn: 10.0,
        };
        let book = ExposureBook::new(vec![0.5; 6], vec![100.0; 6]).unwrap();
        let conf = economic_confusion(&s, 0.5, &cost, &book).unwrap();
        // Predictions at 0.5: [1,1,0,0,1,0]; labels [1,0,1,0,0,1]
        // TP row0; FP rows 1,4; TN row3; FN rows 2,5.
        assert_eq!((conf.tp, conf.fp, conf.tn, conf.fn_), (1, 2, 1, 2));
        assert_eq!(conf.misclassification_cost, 2.0 + 20.0);
        let manual_fn_el = 0.4 * 0.5 * 100.0 + 0.2 * 0.5 * 100.0;
        assert!((conf.fn_expected_loss - manual_fn_el).abs() < 1e-12);
    }

    #[test]
    fn small_simulation_count_rejected() {
        let book = ExposureBook::with_defaults(2);
        assert!(matches!(
            simulate_losses(&[0.5, 0.5], &book, 10, 1),
            Err(Error::Parameter(_))
        ));
    }
}
