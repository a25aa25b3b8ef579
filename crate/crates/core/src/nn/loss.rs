//! Numerically stable sigmoid and binary cross-entropy with logits.

/// Stable logistic function; never overflows and saturates cleanly.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// softplus(t) = ln(1 + e^t) in log-sum-exp form.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Per-sample BCE with logits: ln(1 + exp(-(2y-1) * logit)).
pub fn bce_with_logits_row(logit: f64, y: u8) -> f64 {
    let sign = if y == 1 { 1.0 } else { -1.0 };
    softplus(-sign * logit)
}

/// Mean BCE over a batch.
pub fn loss_bce(logits: &[f64], labels: &[u8]) -> f64 {
    debug_assert_eq!(logits.len(), labels.len());
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| bce_with_logits_row(z, y))
        .sum();
    total / logits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logit_positive_label_is_ln2() {
        assert!((bce_with_logits_row(0.0, 1) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn large_logit_matches_high_precision_value() {
        // ln(1 + e^-10), frozen from a 30-digit evaluation.
        let expected = 4.5398899216864646769e-5;
        assert!((bce_with_logits_row(10.0, 1) - expected).abs() < 1e-18);
    }

    #[test]
    fn label_flip_symmetry() {
        for z in [0.1, 1.0, 5.0, -3.0, 42.0] {
            let a = bce_with_logits_row(z, 1);
            let b = bce_with_logits_row(-z, 0);
            assert!((a - b).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(1e3) >= 1.0 - 1e-12);
        assert!(sigmoid(1e3).is_finite());
        assert!(sigmoid(-1e3) <= 1e-12);
    }

    #[test]
    fn sigmoid_antisymmetry() {
        for z in [0.1, 1.0, 5.0] {
            assert!((sigmoid(-z) - (1.0 - sigmoid(z))).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_loss_over_batch() {
        let l = loss_bce(&[0.0, 0.0], &[1, 0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
