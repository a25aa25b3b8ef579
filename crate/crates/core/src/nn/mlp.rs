//! MLP parameters, forward pass, and exact backpropagation to the input.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::sigmoid;
use crate::parallel::{map_indexed, map_indexed_seq};

/// Dense parameters of the two-hidden-layer network, stored row-major in
/// normalized feature space. Hidden widths are construction parameters so
/// tiny closed-form surrogates can be built in tests; (128, 64) is the
/// production default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub d: usize,
    pub h1: usize,
    pub h2: usize,
    /// h1 x d
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// h2 x h1
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// h2
    pub w3: Vec<f64>,
    pub b3: f64,
}

impl MlpParams {
    pub const DEFAULT_HIDDEN: (usize, usize) = (128, 64);

    /// All-zero network of the given dimensions.
    pub fn zeros(d: usize, h1: usize, h2: usize) -> Self {
        MlpParams {
            d,
            h1,
            h2,
            w1: vec![0.0; h1 * d],
            b1: vec![0.0; h1],
            w2: vec![0.0; h2 * h1],
            b2: vec![0.0; h2],
            w3: vec![0.0; h2],
            b3: 0.0,
        }
    }

    /// He-style uniform fan-in initialization: U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
    /// zero biases.
    pub fn init(d: usize, h1: usize, h2: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(d, h1, h2);
        let mut fill = |v: &mut [f64], fan_in: usize| {
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in v {
                *w = (rng.random::<f64>() * 2.0 - 1.0) * limit;
            }
        };
        fill(&mut p.w1, d);
        fill(&mut p.w2, h1);
        fill(&mut p.w3, h2);
        p
    }

    /// Check dimensional consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.w1.len() != self.h1 * self.d
            || self.b1.len() != self.h1
            || self.w2.len() != self.h2 * self.h1
            || self.b2.len() != self.h2
            || self.w3.len() != self.h2
        {
            return Err(Error::Shape("parameter dimensions inconsistent".into()));
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .chain(&self.w3)
            .chain(std::iter::once(&self.b3))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data("non-finite parameter value".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + 1
    }
}

/// Gradient accumulator with the same layout as [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: f64,
}

impl MlpGrads {
    pub fn zeros(p: &MlpParams) -> Self {
        MlpGrads {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
            w3: vec![0.0; p.w3.len()],
            b3: 0.0,
        }
    }
}

/// Forward activations for one row, kept for backprop.
///
/// `a1`/`a2` are post-ReLU, post-dropout activations; `z1`/`z2` the
/// pre-activations; `m1`/`m2` the inverted-dropout scale masks (empty in eval
/// mode, entries 0 or 1/(1-p) in train mode).
#[derive(Debug, Clone)]
pub struct RowCache {
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub logit: f64,
}

/// Logits plus per-row activation caches for a batch.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub logits: Vec<f64>,
    pub caches: Vec<RowCache>,
}

fn check_row(p: &MlpParams, x: &[f64]) -> Result<()> {
    if x.len() != p.d {
        return Err(Error::Shape(format!(
            "input has {} features, network expects {}",
            x.len(),
            p.d
        )));
    }
    Ok(())
}

/// Forward one row, optionally drawing dropout masks from `dropout = (p, rng)`.
fn forward_row(
    params: &MlpParams,
    x: &[f64],
    mut dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> RowCache {
    let (h1, h2, d) = (params.h1, params.h2, params.d);
    let mut z1 = vec![0.0; h1];
    for i in 0..h1 {
        let row = &params.w1[i * d..(i + 1) * d];
        let mut acc = params.b1[i];
        for (w, xv) in row.iter().zip(x) {
            acc += w * xv;
        }
        z1[i] = acc;
    }
    let mut a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
    let m1 = match &mut dropout {
        Some((p, rng)) => {
            let keep = 1.0 - *p;
            let mask: Vec<f64> = (0..h1)
                .map(|_| {
                    if rng.random::<f64>() < *p {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
                .collect();
            for (a, m) in a1.iter_mut().zip(&mask) {
                *a *= m;
            }
            mask
        }
        None => Vec::new(),
    };

    let mut z2 = vec![0.0; h2];
    for i in 0..h2 {
        let row = &params.w2[i * h1..(i + 1) * h1];
        let mut acc = params.b2[i];
        for (w, av) in row.iter().zip(&a1) {
            acc += w * av;
        }
        z2[i] = acc;
    }
    let mut a2: Vec<f64> = z2.iter().map(|&z| z.max(0.0)).collect();
    let m2 = match &mut dropout {
        Some((p, rng)) => {
            let keep = 1.0 - *p;
            let mask: Vec<f64> = (0..h2)
                .map(|_| {
                    if rng.random::<f64>() < *p {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
                .collect();
            for (a, m) in a2.iter_mut().zip(&mask) {
                *a *= m;
            }
            mask
        }
        None => Vec::new(),
    };

    let logit = params.w3.iter().zip(&a2).map(|(w, a)| w * a).sum::<f64>() + params.b3;
    RowCache {
        z1,
        a1,
        z2,
        a2,
        m1,
        m2,
        logit,
    }
}

/// Eval-mode logit for one row.
pub fn logit_row(params: &MlpParams, x: &[f64]) -> f64 {
    forward_row(params, x, None).logit
}

/// Batch forward pass. In train mode (`dropout = Some((p, rng))`) inverted
/// dropout masks are drawn row by row from the given stream; eval mode is a
/// pure function of the inputs.
pub fn forward(
    params: &MlpParams,
    xs: &[Vec<f64>],
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<BatchForward> {
    for x in xs {
        check_row(params, x)?;
    }
    match dropout {
        Some((p, rng)) => {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Parameter(format!("dropout_p = {p} outside [0, 1)")));
            }
            // Sequential: the mask stream must not depend on thread count.
            let caches: Vec<RowCache> = xs
                .iter()
                .map(|x| forward_row(params, x, Some((p, rng))))
                .collect();
            Ok(BatchForward {
                logits: caches.iter().map(|c| c.logit).collect(),
                caches,
            })
        }
        None => {
            let caches: Vec<RowCache> =
                map_indexed(xs.len(), |i| forward_row(params, &xs[i], None));
            Ok(BatchForward {
                logits: caches.iter().map(|c| c.logit).collect(),
                caches,
            })
        }
    }
}

/// Eval-mode probabilities, sharded over rows.
pub fn predict_proba(params: &MlpParams, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    for x in xs {
        check_row(params, x)?;
    }
    Ok(map_indexed(xs.len(), |i| sigmoid(logit_row(params, &xs[i]))))
}

/// Sequential twin of [`predict_proba`] for equivalence tests and benches.
pub fn predict_proba_seq(params: &MlpParams, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    for x in xs {
        check_row(params, x)?;
    }
    Ok(map_indexed_seq(xs.len(), |i| {
        sigmoid(logit_row(params, &xs[i]))
    }))
}

/// Gradient of the per-sample BCE loss with respect to one input row,
/// eval mode (no dropout).
pub fn input_gradient_row(params: &MlpParams, x: &[f64], y: u8) -> Vec<f64> {
    let cache = forward_row(params, x, None);
    let dlogit = sigmoid(cache.logit) - f64::from(y);
    let (h1, h2, d) = (params.h1, params.h2, params.d);

    // dz2 = dlogit * w3 ⊙ relu'(z2)
    let mut dz2 = vec![0.0; h2];
    for i in 0..h2 {
        if cache.z2[i] > 0.0 {
            dz2[i] = dlogit * params.w3[i];
        }
    }
    // dz1 = (W2^T dz2) ⊙ relu'(z1)
    let mut dz1 = vec![0.0; h1];
    for i in 0..h2 {
        if dz2[i] != 0.0 {
            let row = &params.w2[i * h1..(i + 1) * h1];
            for (j, w) in row.iter().enumerate() {
                dz1[j] += dz2[i] * w;
            }
        }
    }
    for j in 0..h1 {
        if cache.z1[j] <= 0.0 {
            dz1[j] = 0.0;
        }
    }
    // dx = W1^T dz1
    let mut dx = vec![0.0; d];
    for j in 0..h1 {
        if dz1[j] != 0.0 {
            let row = &params.w1[j * d..(j + 1) * d];
            for (k, w) in row.iter().enumerate() {
                dx[k] += dz1[j] * w;
            }
        }
    }
    dx
}

/// Per-row input gradients for a batch; rows never average into each other,
/// so sharding cannot change the result.
pub fn input_gradient(params: &MlpParams, xs: &[Vec<f64>], ys: &[u8]) -> Result<Vec<Vec<f64>>> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} labels",
            xs.len(),
            ys.len()
        )));
    }
    for x in xs {
        check_row(params, x)?;
    }
    Ok(map_indexed(xs.len(), |i| {
        input_gradient_row(params, &xs[i], ys[i])
    }))
}

/// Mean-loss parameter gradients over a batch plus the mean loss itself.
/// Dropout masks (train mode) come from the given stream in row order.
pub(crate) fn batch_gradients(
    params: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[u8],
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<(MlpGrads, f64)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Shape("batch rows and labels must align".into()));
    }
    let fwd = forward(params, xs, dropout)?;
    let n = xs.len() as f64;
    let (h1, h2, d) = (params.h1, params.h2, params.d);
    let train_mode = !fwd.caches[0].m1.is_empty();
    let mut g = MlpGrads::zeros(params);
    let mut loss = 0.0;

    for (i, cache) in fwd.caches.iter().enumerate() {
        let x = &xs[i];
        let y = ys[i];
        loss += crate::nn::loss::bce_with_logits_row(cache.logit, y);
        // Mean loss: scale each sample's contribution by 1/n.
        let dlogit = (sigmoid(cache.logit) - f64::from(y)) / n;

        for j in 0..h2 {
            g.w3[j] += dlogit * cache.a2[j];
        }
        g.b3 += dlogit;

        // Through dropout scale and ReLU of layer 2.
        let mut dz2 = vec![0.0; h2];
        for j in 0..h2 {
            if cache.z2[j] > 0.0 {
                let scale = if train_mode { cache.m2[j] } else { 1.0 };
                dz2[j] = dlogit * params.w3[j] * scale;
            }
        }
        for j in 0..h2 {
            if dz2[j] != 0.0 {
                let w2_row = &mut g.w2[j * h1..(j + 1) * h1];
                for (k, gw) in w2_row.iter_mut().enumerate() {
                    *gw += dz2[j] * cache.a1[k];
                }
                g.b2[j] += dz2[j];
            }
        }

        let mut dz1 = vec![0.0; h1];
        for j in 0..h2 {
            if dz2[j] != 0.0 {
                let row = &params.w2[j * h1..(j + 1) * h1];
                for (k, w) in row.iter().enumerate() {
                    dz1[k] += dz2[j] * w;
                }
            }
        }
        for k in 0..h1 {
            if cache.z1[k] <= 0.0 {
                dz1[k] = 0.0;
            } else if train_mode {
                dz1[k] *= cache.m1[k];
            }
        }
        for k in 0..h1 {
            if dz1[k] != 0.0 {
                let w1_row = &mut g.w1[k * d..(k + 1) * d];
                for (c, gw) in w1_row.iter_mut().enumerate() {
                    *gw += dz1[k] * x[c];
                }
                g.b1[k] += dz1[k];
            }
        }
    }
    Ok((g, loss / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::bce_with_logits_row;
    use crate::seed::rng_from;

    /// d=1 single-unit surrogate: f(x) = sigma(w * x) for positive
    /// pre-activations (ReLU passes through).
    fn one_unit(w: f64) -> MlpParams {
        let mut p = MlpParams::zeros(1, 1, 1);
        p.w1 = vec![w];
        p.w2 = vec![1.0];
        p.w3 = vec![1.0];
        p
    }

    fn random_params(d: usize, h1: usize, h2: usize, seed: u64) -> MlpParams {
        let mut rng = rng_from(seed);
        MlpParams::init(d, h1, h2, &mut rng)
    }

    fn random_row(d: usize, seed: u64) -> Vec<f64> {
        use rand::RngExt;
        let mut rng = rng_from(seed);
        (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()
    }

    /// True when every pre-activation is far enough from the ReLU kink for
    /// central differences with h = 1e-5 to be valid.
    fn away_from_kinks(p: &MlpParams, x: &[f64], margin: f64) -> bool {
        let c = forward_row(p, x, None);
        c.z1.iter().chain(&c.z2).all(|z| z.abs() > margin)
    }

    fn loss_at(p: &MlpParams, x: &[f64], y: u8) -> f64 {
        bce_with_logits_row(logit_row(p, x), y)
    }

    #[test]
    fn zero_network_zero_logit_zero_gradient() {
        let p = MlpParams::zeros(4, 3, 2);
        let x = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(logit_row(&p, &x), 0.0);
        let g = input_gradient_row(&p, &x, 1);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_surrogate_passes_positive_input() {
        let p = one_unit(1.0);
        assert_eq!(logit_row(&p, &[2.0]), 2.0);
    }

    #[test]
    fn dropout_p_zero_equals_eval() {
        let p = random_params(5, 8, 4, 3);
        let xs: Vec<Vec<f64>> = (0..6).map(|i| random_row(5, 100 + i)).collect();
        let eval = forward(&p, &xs, None).unwrap();
        let mut rng = rng_from(9);
        let train = forward(&p, &xs, Some((0.0, &mut rng))).unwrap();
        assert_eq!(eval.logits, train.logits);
    }

    #[test]
    fn dropout_masks_scale_by_keep_probability() {
        let p = random_params(3, 32, 16, 5);
        let xs = vec![random_row(3, 7)];
        let mut rng = rng_from(11);
        let fwd = forward(&p, &xs, Some((0.5, &mut rng))).unwrap();
        let cache = &fwd.caches[0];
        assert!(cache.m1.iter().all(|&m| m == 0.0 || m == 2.0));
        assert!(cache.m2.iter().all(|&m| m == 0.0 || m == 2.0));
        // With p = 0.5 and 32 units, both mask values should appear.
        assert!(cache.m1.iter().any(|&m| m == 0.0));
        assert!(cache.m1.iter().any(|&m| m == 2.0));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let p = MlpParams::zeros(4, 3, 2);
        assert!(matches!(
            predict_proba(&p, &[vec![1.0, 2.0]]),
            Err(crate::error::Error::Shape(_))
        ));
    }

    #[test]
    fn surrogate_gradient_sign_is_minus_sign_w() {
        // f(x) = sigma(w x), y = 1: dL/dx = (sigma(w x) - 1) * w, so the
        // gradient sign is -sign(w) while the unit is active.
        for (w, x) in [(0.8, 1.5), (2.0, 0.3)] {
            let p = one_unit(w);
            let g = input_gradient_row(&p, &[x], 1);
            assert!(g[0] < 0.0, "w={w}");
            let closed = (crate::nn::sigmoid(w * x) - 1.0) * w;
            assert!((g[0] - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut cases = 0;
        let mut seed = 0u64;
        while cases < 30 {
            seed += 1;
            let p = random_params(8, 6, 4, 1000 + seed);
            let x = random_row(8, 2000 + seed);
            if !away_from_kinks(&p, &x, 1e-3) {
                continue;
            }
            let y = u8::from(seed % 2 == 0);
            let analytic = input_gradient_row(&p, &x, y);
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (loss_at(&p, &xp, y) - loss_at(&p, &xm, y)) / (2.0 * h);
                let rel = (analytic[i] - fd).abs() / fd.abs().max(analytic[i].abs()).max(1e-8);
                worst = worst.max(rel);
            }
            cases += 1;
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn parameter_gradients_match_central_differences() {
        let h = 1e-5;
        let p = random_params(5, 4, 3, 77);
        let xs: Vec<Vec<f64>> = (0..4).map(|i| random_row(5, 300 + i)).collect();
        let ys = vec![1, 0, 1, 1];
        let (g, _) = batch_gradients(&p, &xs, &ys, None).unwrap();

        let batch_loss = |p: &MlpParams| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(x, &y)| loss_at(p, x, y))
                .sum::<f64>()
                / xs.len() as f64
        };

        let mut check = |get: &dyn Fn(&MlpParams) -> f64,
                         set: &dyn Fn(&mut MlpParams, f64),
                         analytic: f64| {
            let base = get(&p);
            let mut pp = p.clone();
            set(&mut pp, base + h);
            let up = batch_loss(&pp);
            set(&mut pp, base - h);
            let down = batch_loss(&pp);
            let fd = (up - down) / (2.0 * h);
            let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs()).max(1e-8);
            assert!(rel < 1e-4, "analytic {analytic} vs fd {fd}");
        };

        for i in 0..p.w1.len() {
            check(&|q| q.w1[i], &|q, v| q.w1[i] = v, g.w1[i]);
        }
        for i in 0..p.b1.len() {
            check(&|q| q.b1[i], &|q, v| q.b1[i] = v, g.b1[i]);
        }
        for i in 0..p.w2.len() {
            check(&|q| q.w2[i], &|q, v| q.w2[i] = v, g.w2[i]);
        }
        for i in 0..p.b2.len() {
            check(&|q| q.b2[i], &|q, v| q.b2[i] = v, g.b2[i]);
        }
        for i in 0..p.w3.len() {
            check(&|q| q.w3[i], &|q, v| q.w3[i] = v, g.w3[i]);
        }
        check(&|q| q.b3, &|q, v| q.b3 = v, g.b3);
    }

    #[test]
    fn parallel_predict_matches_sequential() {
        let p = random_params(7, 16, 8, 21);
        let xs: Vec<Vec<f64>> = (0..64).map(|i| random_row(7, 500 + i)).collect();
        let a = predict_proba(&p, &xs).unwrap();
        let b = predict_proba_seq(&p, &xs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_forward_is_pure() {
        let p = random_params(6, 10, 5, 31);
        let xs: Vec<Vec<f64>> = (0..16).map(|i| random_row(6, 700 + i)).collect();
        let a = predict_proba(&p, &xs).unwrap();
        let b = predict_proba(&p, &xs).unwrap();
        assert_eq!(a, b);
    }
}
