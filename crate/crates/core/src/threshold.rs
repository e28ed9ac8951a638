//! Order-statistic threshold calibration with high-probability type I error
//! control, plus the naive and cross-validation baseline thresholds it is
//! compared against.
//!
//! The central quantity is the violation rate v(k): the probability, over the
//! randomness of a left-out class 0 sample of size n, that the classifier
//! thresholded at the k-th smallest score has population type I error above
//! alpha. v(k) is a binomial tail that depends only on n, k and alpha, so the
//! smallest order k* with v(k*) <= delta can be found exactly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::regularized_incomplete_beta;

/// The (n, alpha, delta) triple governing violation-rate computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationParams {
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
}

impl ViolationParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        check_open_unit(self.alpha, "alpha")?;
        check_open_unit(self.delta, "delta")?;
        Ok(())
    }
}

fn check_open_unit(x: f64, name: &str) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must lie strictly between 0 and 1 (got {x})"
        )));
    }
    Ok(())
}

/// Result of calibrating a threshold on a left-out class 0 score sample.
/// The induced classifier predicts class 1 iff a score strictly exceeds
/// `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpThreshold {
    /// Selected order statistic index, 1-based, minimal with v(k) <= delta.
    pub k_star: usize,
    /// The k*-th smallest left-out class 0 score.
    pub threshold: f64,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    /// Achieved violation bound v(k*).
    pub violation_bound: f64,
}

impl NpThreshold {
    pub fn predicts_one(&self, score: f64) -> bool {
        score > self.threshold
    }
}

/// Upper binomial tail P[Bin(n, p) >= k], computed through the regularized
/// incomplete beta identity so it stays exact for n in the thousands.
pub fn binomial_tail(n: usize, k: usize, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "order k = {k} out of range for n = {n}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "p must lie in [0, 1] (got {p})"
        )));
    }
    if k == 0 {
        return Ok(1.0);
    }
    regularized_incomplete_beta(k as f64, (n - k + 1) as f64, p)
}

/// Violation rate v(k) = P[Bin(n, 1 - alpha) >= k]: the probability that the
/// classifier thresholded at the k-th order statistic has population type I
/// error above alpha.
pub fn violation_rate(n: usize, k: usize, alpha: f64) -> Result<f64> {
    ViolationParams { n, alpha, delta: 0.5 }.validate()?;
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!(
            "order k = {k} out of range {{1..{n}}}"
        )));
    }
    binomial_tail(n, k, 1.0 - alpha)
}

/// Smallest left-out class 0 sample size for which any order statistic can
/// satisfy v(k) <= delta, i.e. ceil(log delta / log(1 - alpha)) with the
/// boundary checked against the exact tail.
pub fn min_class0_size(alpha: f64, delta: f64) -> Result<usize> {
    check_open_unit(alpha, "alpha")?;
    check_open_unit(delta, "delta")?;
    let mut n = (delta.ln() / (1.0 - alpha).ln()).ceil() as usize;
    n = n.max(1);
    // Guard against rounding at the boundary: v(n) = (1-alpha)^n must be
    // <= delta at n and > delta at n - 1.
    while violation_rate(n, n, alpha)? > delta {
        n += 1;
    }
    while n > 1 && violation_rate(n - 1, n - 1, alpha)? <= delta {
        n -= 1;
    }
    Ok(n)
}

/// The selected order k* = min{k in {1..n}: v(k) <= delta}. v(k) is strictly
/// decreasing in k, so binary search applies.
pub fn min_order_index(n: usize, alpha: f64, delta: f64) -> Result<usize> {
    ViolationParams { n, alpha, delta }.validate()?;
    if violation_rate(n, n, alpha)? > delta {
        return Err(Error::InsufficientSample {
            n,
            n_min: min_class0_size(alpha, delta)?,
            alpha,
            delta,
        });
    }
    if violation_rate(n, 1, alpha)? <= delta {
        return Ok(1);
    }
    let mut lo = 1usize; // v(lo) > delta
    let mut hi = n; // v(hi) <= delta
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if violation_rate(n, mid, alpha)? <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("score list must be nonempty".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(
            "scores must be finite (found NaN or infinity)".into(),
        ));
    }
    Ok(())
}

fn sorted_ascending(scores: &[f64]) -> Vec<f64> {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Calibrate an NP threshold on left-out class 0 scores. The caller must
/// guarantee the scores come from class 0 points not used to fit the scorer.
pub fn select_threshold(class0_scores: &[f64], alpha: f64, delta: f64) -> Result<NpThreshold> {
    check_scores(class0_scores)?;
    let sorted = sorted_ascending(class0_scores);
    let n = sorted.len();
    let k_star = min_order_index(n, alpha, delta)?;
    Ok(NpThreshold {
        k_star,
        threshold: sorted[k_star - 1],
        n,
        alpha,
        delta,
        violation_bound: violation_rate(n, k_star, alpha)?,
    })
}

fn count_above(sorted: &[f64], c: f64) -> usize {
    sorted.len() - sorted.partition_point(|&x| x <= c)
}

/// Baseline: smallest observed score c with empirical type I error
/// #{scores > c}/n <= alpha. No probabilistic guarantee.
pub fn naive_threshold(class0_scores: &[f64], alpha: f64) -> Result<f64> {
    check_scores(class0_scores)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1] (got {alpha})"
        )));
    }
    let sorted = sorted_ascending(class0_scores);
    let n = sorted.len() as f64;
    for &c in &sorted {
        if count_above(&sorted, c) as f64 / n <= alpha {
            return Ok(c);
        }
    }
    unreachable!("the largest score always satisfies the constraint")
}

/// Baseline: smallest observed score whose cross-validated empirical type I
/// error (mean of per-fold empirical errors under a seeded random fold
/// assignment) is <= alpha. No probabilistic guarantee.
pub fn cv_threshold(class0_scores: &[f64], alpha: f64, folds: usize, seed: u64) -> Result<f64> {
    check_scores(class0_scores)?;
    if folds < 2 {
        return Err(Error::InvalidArgument("folds must be >= 2".into()));
    }
    let n = class0_scores.len();
    if n < folds {
        return Err(Error::InvalidArgument(format!(
            "too few points: n = {n} < folds = {folds}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut fold_scores: Vec<Vec<f64>> = vec![Vec::new(); folds];
    for (pos, &idx) in order.iter().enumerate() {
        fold_scores[pos % folds].push(class0_scores[idx]);
    }
    for f in &mut fold_scores {
        f.sort_by(f64::total_cmp);
    }

    let sorted = sorted_ascending(class0_scores);
    for &c in &sorted {
        let cv_err = fold_scores
            .iter()
            .map(|f| count_above(f, c) as f64 / f.len() as f64)
            .sum::<f64>()
            / folds as f64;
        if cv_err <= alpha {
            return Ok(c);
        }
    }
    unreachable!("the largest score always satisfies the constraint")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    /// Direct-summation oracle for P[Bin(n, p) >= k], exact for small n.
    fn tail_oracle(n: usize, k: usize, p: f64) -> f64 {
        (k..=n)
            .map(|j| {
                let ln_c = libm::lgamma((n + 1) as f64)
                    - libm::lgamma((j + 1) as f64)
                    - libm::lgamma((n - j + 1) as f64);
                let ln_term = ln_c
                    + if j > 0 { j as f64 * p.ln() } else { 0.0 }
                    + if n > j { (n - j) as f64 * (1.0 - p).ln() } else { 0.0 };
                ln_term.exp()
            })
            .sum()
    }

    #[test]
    fn binomial_tail_examples() {
        assert!((binomial_tail(2, 1, 0.5).unwrap() - 0.75).abs() < 1e-14);
        assert!((binomial_tail(10, 10, 0.5).unwrap() - 0.5f64.powi(10)).abs() < 1e-14);
        let got = binomial_tail(10, 5, 0.3).unwrap();
        assert!((got - tail_oracle(10, 5, 0.3)).abs() < 1e-12);
        assert!((got - 0.1503).abs() < 5e-5);
        assert_eq!(binomial_tail(7, 0, 0.4).unwrap(), 1.0);
    }

    #[test]
    fn binomial_tail_rejects_out_of_range() {
        assert!(binomial_tail(5, 6, 0.5).is_err());
        assert!(binomial_tail(5, 2, 1.5).is_err());
        assert!(binomial_tail(5, 2, -0.1).is_err());
    }

    #[test]
    fn violation_rate_examples() {
        assert!((violation_rate(1, 1, 0.3).unwrap() - 0.7).abs() < 1e-14);
        assert!((violation_rate(59, 59, 0.05).unwrap() - 0.95f64.powi(59)).abs() < 1e-13);
        let got = violation_rate(10, 8, 0.1).unwrap();
        assert!((got - tail_oracle(10, 8, 0.9)).abs() < 1e-12);
        assert!((got - 0.9298).abs() < 5e-5);
    }

    #[test]
    fn violation_rate_matches_oracle_on_grid() {
        for n in 1..=30 {
            for k in 1..=n {
                for &alpha in &[0.01, 0.05, 0.1, 0.5, 0.9] {
                    let got = violation_rate(n, k, alpha).unwrap();
                    let want = tail_oracle(n, k, 1.0 - alpha);
                    assert!(
                        (got - want).abs() < 1e-10,
                        "n={n} k={k} alpha={alpha}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn violation_rate_strictly_decreasing_in_k() {
        for &(n, alpha) in &[(10usize, 0.1), (59, 0.05), (200, 0.3)] {
            for k in 1..n {
                let a = violation_rate(n, k, alpha).unwrap();
                let b = violation_rate(n, k + 1, alpha).unwrap();
                assert!(a >= b, "n={n} k={k}: v(k)={a} < v(k+1)={b}");
                // strictness is only observable once v drops below f64
                // saturation at 1
                if a < 1.0 {
                    assert!(a > b, "n={n} k={k}: v(k)={a} !> v(k+1)={b}");
                }
            }
        }
    }

    #[test]
    fn min_class0_size_reference_values() {
        assert_eq!(min_class0_size(0.05, 0.05).unwrap(), 59);
        assert_eq!(min_class0_size(0.05, 0.1).unwrap(), 45);
        assert_eq!(min_class0_size(0.1, 0.05).unwrap(), 29);
    }

    #[test]
    fn min_class0_size_is_boundary_exact() {
        for &alpha in &[0.01, 0.05, 0.1, 0.3] {
            for &delta in &[0.01, 0.05, 0.1, 0.2] {
                let n_min = min_class0_size(alpha, delta).unwrap();
                assert!(violation_rate(n_min, n_min, alpha).unwrap() <= delta);
                if n_min > 1 {
                    assert!(violation_rate(n_min - 1, n_min - 1, alpha).unwrap() > delta);
                }
            }
        }
    }

    #[test]
    fn min_order_index_examples() {
        assert_eq!(min_order_index(59, 0.05, 0.05).unwrap(), 59);
        match min_order_index(58, 0.05, 0.05) {
            Err(Error::InsufficientSample { n, n_min, .. }) => {
                assert_eq!(n, 58);
                assert_eq!(n_min, 59);
            }
            other => panic!("expected InsufficientSample, got {other:?}"),
        }
        // Brute-force check: P[Bin(5, 0.5) >= 4] = 6/32 <= 0.2, k = 3 fails.
        assert_eq!(min_order_index(5, 0.5, 0.2).unwrap(), 4);
    }

    #[test]
    fn min_order_index_matches_linear_scan() {
        for n in [1usize, 7, 30, 123, 500] {
            for &alpha in &[0.05, 0.2, 0.5] {
                for &delta in &[0.05, 0.3, 0.9] {
                    let scan = (1..=n)
                        .find(|&k| violation_rate(n, k, alpha).unwrap() <= delta);
                    match (scan, min_order_index(n, alpha, delta)) {
                        (Some(k), Ok(k2)) => assert_eq!(k, k2, "n={n} a={alpha} d={delta}"),
                        (None, Err(Error::InsufficientSample { .. })) => {}
                        (s, r) => panic!("mismatch n={n}: scan={s:?} result={r:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn select_threshold_example() {
        let t = select_threshold(&[0.1, 0.4, 0.2, 0.9, 0.5], 0.5, 0.2).unwrap();
        assert_eq!(t.k_star, 4);
        assert_eq!(t.threshold, 0.5);
        assert!(t.violation_bound <= 0.2);
    }

    #[test]
    fn select_threshold_insufficient_sample() {
        let scores: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let err = select_threshold(&scores, 0.05, 0.05).unwrap_err();
        assert!(err.to_string().contains("n_min = 59"));
    }

    #[test]
    fn select_threshold_all_tied() {
        let t = select_threshold(&[3.0, 3.0, 3.0], 0.5, 0.9).unwrap();
        assert_eq!(t.threshold, 3.0);
        assert!(!t.predicts_one(3.0));
        assert!(t.predicts_one(3.0001));
    }

    #[test]
    fn naive_threshold_examples() {
        assert_eq!(naive_threshold(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap(), 3.0);
        assert_eq!(naive_threshold(&[1.0, 2.0, 3.0, 4.0], 0.0).unwrap(), 4.0);
        assert_eq!(naive_threshold(&[5.0], 0.5).unwrap(), 5.0);
    }

    #[test]
    fn cv_threshold_loo_equals_naive() {
        let scores: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        for &alpha in &[0.0, 0.1, 0.25, 0.5] {
            let cv = cv_threshold(&scores, alpha, scores.len(), 7).unwrap();
            let naive = naive_threshold(&scores, alpha).unwrap();
            assert_eq!(cv, naive, "alpha = {alpha}");
        }
    }

    #[test]
    fn cv_threshold_seeded_determinism() {
        let scores: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let a = cv_threshold(&scores, 0.05, 5, 42).unwrap();
        let b = cv_threshold(&scores, 0.05, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cv_threshold_too_few_points() {
        assert!(cv_threshold(&[1.0, 2.0], 0.1, 5, 0).is_err());
    }

    #[test]
    fn monte_carlo_violation_guarantee() {
        // Continuous scores, n i.i.d. draws, threshold at T_(k*): the
        // fraction of trials whose population type I error 1 - Phi(T_(k*))
        // exceeds alpha must stay below delta plus 3 binomial s.e.
        let (alpha, delta) = (0.05, 0.05);
        let trials = 2000;
        let n = 100;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1234);
        let mut violations = 0usize;
        for _ in 0..trials {
            let scores: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let t = select_threshold(&scores, alpha, delta).unwrap();
            let type1 = 1.0 - crate::special::standard_normal_cdf(t.threshold);
            if type1 > alpha {
                violations += 1;
            }
        }
        let rate = violations as f64 / trials as f64;
        let bound = delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
        assert!(rate <= bound, "violation rate {rate} > {bound}");
    }

    proptest! {
        #[test]
        fn select_threshold_permutation_invariant(
            mut scores in proptest::collection::vec(-100.0f64..100.0, 59..120),
            seed in 0u64..1000,
        ) {
            let before = select_threshold(&scores, 0.05, 0.1).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            scores.shuffle(&mut rng);
            let after = select_threshold(&scores, 0.05, 0.1).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn violation_rate_monotone_prop(
            n in 2usize..200,
            alpha in 0.01f64..0.99,
        ) {
            let k = 1 + n / 2;
            let a = violation_rate(n, k - 1, alpha).unwrap();
            let b = violation_rate(n, k, alpha).unwrap();
            prop_assert!(a >= b);
            // strict once below f64 saturation at 1
            if a < 1.0 {
                prop_assert!(a > b);
            }
        }
    }
}
