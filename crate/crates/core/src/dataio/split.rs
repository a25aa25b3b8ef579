//! Stratified train/validation/test splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Index partition of `[0, n)` preserving class proportions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

/// Shuffle each class with the seeded RNG, then apportion it across the three
/// splits by largest remainder so counts sum exactly and every split keeps
/// the class mix of the full data.
pub fn stratified_split(labels: &[u8], ratios: [f64; 3], seed: u64) -> Result<Splits> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }
    if ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::Parameter("split ratios must be non-negative".into()));
    }
    let mut rng = rng_from(seed);
    let mut buckets: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];

    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 3 {
            return Err(Error::Data(format!(
                "class {class} has {} members; need at least 3 to stratify",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), &ratios);
        let mut offset = 0;
        for (b, &c) in counts.iter().enumerate() {
            buckets[b].extend_from_slice(&members[offset..offset + c]);
            offset += c;
        }
    }

    let [mut train, mut validation, mut test] = buckets;
    // Sorted index lists keep downstream iteration order independent of the
    // class interleaving above.
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(Splits {
        train,
        validation,
        test,
        ratios,
        seed,
    })
}

/// Largest-remainder apportionment of `n` items over the ratio vector.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[order[i % 3]] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_with_rate(n: usize, positives: usize) -> Vec<u8> {
        (0..n).map(|i| u8::from(i < positives)).collect()
    }

    fn positive_rate(labels: &[u8], idx: &[usize]) -> f64 {
        idx.iter().map(|&i| labels[i] as usize).sum::<usize>() as f64 / idx.len() as f64
    }

    #[test]
    fn splits_partition_all_indices() {
        let labels = labels_with_rate(100, 20);
        let s = stratified_split(&labels, [0.6, 0.2, 0.2], 7).unwrap();
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.validation)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn stratification_within_one_point() {
        let labels = labels_with_rate(100, 20);
        let s = stratified_split(&labels, [0.6, 0.2, 0.2], 11).unwrap();
        for part in [&s.train, &s.validation, &s.test] {
            let rate = positive_rate(&labels, part);
            assert!((rate - 0.20).abs() <= 0.01, "rate {rate}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let labels = labels_with_rate(250, 70);
        let a = stratified_split(&labels, [0.6, 0.2, 0.2], 42).unwrap();
        let b = stratified_split(&labels, [0.6, 0.2, 0.2], 42).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn different_seeds_permute_but_stratify() {
        let labels = labels_with_rate(250, 70);
        let a = stratified_split(&labels, [0.6, 0.2, 0.2], 1).unwrap();
        let b = stratified_split(&labels, [0.6, 0.2, 0.2], 2).unwrap();
        assert_ne!(a.train, b.train);
        // Both remain stratified.
        for s in [&a, &b] {
            for part in [&s.train, &s.validation, &s.test] {
                let rate = positive_rate(&labels, part);
                assert!((rate - 0.28).abs() <= 0.01, "rate {rate}");
            }
        }
    }

    #[test]
    fn tiny_class_rejected() {
        let labels = labels_with_rate(50, 2);
        assert!(matches!(
            stratified_split(&labels, [0.6, 0.2, 0.2], 3),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn bad_ratios_rejected() {
        let labels = labels_with_rate(50, 10);
        assert!(matches!(
            stratified_split(&labels, [0.5, 0.2, 0.2], 3),
            Err(Error::Parameter(_))
        ));
    }
}
