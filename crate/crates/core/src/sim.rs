//! Monte Carlo studies of threshold calibration and the umbrella ensemble,
//! run against Gaussian generative models with analytic error oracles.
//!
//! Everything here is single-threaded and fully determined by the master
//! seed; replicate r always draws from stream indices derived from r, so
//! reports are bit-reproducible across runs.

use serde::Serialize;

use crate::band::{
    alpha_upper_bound, beta_upper_bound, choose_alpha, compare_bands, rank_bounds,
    DominanceReport, NpRocBand, Scenario,
};
use crate::data::{
    derive_seed, gaussian_type1, gaussian_type2, simulate, simulate_s2, stratified_half_split,
    GaussianSpec, S2Model, ScaleConvention,
};
use crate::ensemble::{fit_band, fit_np, SplitPlan};
use crate::error::{Error, Result};
use crate::scorer::{learner_by_name, LdaLearner};
use crate::threshold::{cv_threshold, naive_threshold, select_threshold};

/// Violation rates of three threshold rules on the one-dimensional Gaussian
/// model, all scoring with the raw feature.
#[derive(Debug, Clone, Serialize)]
pub struct Sim1Report {
    pub replicates: usize,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    /// Fraction of replicates whose population type I error exceeds alpha.
    pub naive_violation: f64,
    pub cv_violation: f64,
    pub np_violation: f64,
    pub naive_mean_type1: f64,
    pub cv_mean_type1: f64,
    pub np_mean_type1: f64,
}

pub fn run_sim1(
    replicates: usize,
    n: usize,
    alpha: f64,
    delta: f64,
    seed: u64,
) -> Result<Sim1Report> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be >= 1".into()));
    }
    let spec = GaussianSpec::sim1();
    let mut viol = [0usize; 3];
    let mut type1_sum = [0.0f64; 3];
    for r in 0..replicates {
        let data = simulate(&spec, n, derive_seed(seed, 2 * r as u64))?;
        let c0: Vec<f64> = data
            .class_indices(0)
            .iter()
            .map(|&i| data.features[i][0])
            .collect();
        let thresholds = [
            naive_threshold(&c0, alpha)?,
            cv_threshold(&c0, alpha, 5, derive_seed(seed, 2 * r as u64 + 1))?,
            select_threshold(&c0, alpha, delta)?.threshold,
        ];
        for (j, &t) in thresholds.iter().enumerate() {
            let type1 = gaussian_type1(t, 0.0, 1.0);
            type1_sum[j] += type1;
            if type1 > alpha {
                viol[j] += 1;
            }
        }
    }
    let d = replicates as f64;
    Ok(Sim1Report {
        replicates,
        n,
        alpha,
        delta,
        naive_violation: viol[0] as f64 / d,
        cv_violation: viol[1] as f64 / d,
        np_violation: viol[2] as f64 / d,
        naive_mean_type1: type1_sum[0] / d,
        cv_mean_type1: type1_sum[1] / d,
        np_mean_type1: type1_sum[2] / d,
    })
}

/// Picking an operating point from the empirical ROC versus from the band's
/// lower curve, on the one-dimensional Gaussian model.
#[derive(Debug, Clone, Serialize)]
pub struct S1Report {
    pub replicates: usize,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    /// Violation rate of the classifier read off the empirical ROC curve.
    pub roc_violation: f64,
    /// Violation rate of the classifier picked through the band's lower
    /// curve at the same alpha.
    pub np_violation: f64,
    /// Fraction of replicates where the band point sits weakly below-right
    /// of the true ROC point (alpha bound >= true type I and lower curve
    /// <= true power).
    pub conservative_rate: f64,
}

pub fn run_s1(replicates: usize, n: usize, alpha: f64, delta: f64, seed: u64) -> Result<S1Report> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be >= 1".into()));
    }
    let spec = GaussianSpec::sim1();
    let mut roc_viol = 0usize;
    let mut np_viol = 0usize;
    let mut conservative = 0usize;
    for r in 0..replicates {
        let data = simulate(&spec, n, derive_seed(seed, 3 * r as u64))?;
        let test = simulate(&spec, n, derive_seed(seed, 3 * r as u64 + 1))?;

        // Empirical-ROC pick: candidate thresholds are all points of the
        // training draw; their type I errors are estimated on the class 0
        // points of an independent test draw. The plotted curve's vertices
        // are the distinct empirical type I values; the vertical line at
        // alpha crosses inside the step of the largest value <= alpha, and
        // the pick is the first vertex strictly left of that step,
        // represented by its largest (most conservative) threshold.
        let mut test0: Vec<f64> = test
            .class_indices(0)
            .iter()
            .map(|&i| test.features[i][0])
            .collect();
        test0.sort_by(f64::total_cmp);
        let mut candidates: Vec<f64> = data.features.iter().map(|row| row[0]).collect();
        candidates.sort_by(f64::total_cmp);
        let n0 = test0.len() as f64;
        // test type I error of I(x > c); non-increasing in c
        let emp = |c: f64| (test0.len() - test0.partition_point(|&x| x <= c)) as f64 / n0;
        let at_step = candidates.partition_point(|&c| emp(c) > alpha);
        let step_value = emp(candidates[at_step.min(candidates.len() - 1)]);
        let past_step = candidates.partition_point(|&c| emp(c) >= step_value);
        let next_value = emp(candidates[past_step.min(candidates.len() - 1)]);
        let last_at_next = candidates.partition_point(|&c| emp(c) >= next_value);
        let roc_t = candidates[(last_at_next.max(1) - 1).min(candidates.len() - 1)];
        if gaussian_type1(roc_t, 0.0, 1.0) > alpha {
            roc_viol += 1;
        }

        // Band pick: halve both classes, calibrate on the left-out half.
        let (_, leftout) =
            stratified_half_split(&data, 0.5, derive_seed(seed, 3 * r as u64 + 2))?;
        let cal0: Vec<f64> = leftout
            .class_indices(0)
            .iter()
            .map(|&i| leftout.features[i][0])
            .collect();
        let mut cal1: Vec<f64> = leftout
            .class_indices(1)
            .iter()
            .map(|&i| leftout.features[i][0])
            .collect();
        cal1.sort_by(f64::total_cmp);
        let np = select_threshold(&cal0, alpha, delta)?;
        let true_type1 = gaussian_type1(np.threshold, 0.0, 1.0);
        if true_type1 > alpha {
            np_viol += 1;
        }

        // Conservativeness of the band point that the pick came from.
        let alpha_bound = alpha_upper_bound(np.n, np.k_star, delta)?;
        let ranks = rank_bounds(&cal1, np.threshold)?;
        let beta_upper = match ranks.scenario {
            Scenario::AboveAllClass1 => 1.0,
            _ => beta_upper_bound(cal1.len(), ranks.r_upper.unwrap(), delta)?,
        };
        let true_type2 = gaussian_type2(np.threshold, 2.0, 1.0);
        if alpha_bound >= true_type1 && beta_upper >= true_type2 {
            conservative += 1;
        }
    }
    let d = replicates as f64;
    Ok(S1Report {
        replicates,
        n,
        alpha,
        delta,
        roc_violation: roc_viol as f64 / d,
        np_violation: np_viol as f64 / d,
        conservative_rate: conservative as f64 / d,
    })
}

/// Band comparison of the two marginal predictors of the two-feature
/// Gaussian model, each scored by a one-dimensional discriminant.
#[derive(Debug, Clone, Serialize)]
pub struct Sim2Report {
    pub n: usize,
    pub splits: usize,
    pub delta: f64,
    pub scale_convention: ScaleConvention,
    #[serde(skip)]
    pub band_first: NpRocBand,
    #[serde(skip)]
    pub band_second: NpRocBand,
    pub dominance: DominanceReport,
    /// Smallest grid alpha where each band's lower curve already promises
    /// type II error <= max_type2.
    pub chosen_alpha_first: Option<f64>,
    pub chosen_alpha_second: Option<f64>,
    pub max_type2: f64,
}

pub fn run_sim2(
    n: usize,
    splits: usize,
    delta: f64,
    seed: u64,
    grid_size: usize,
    scale_convention: ScaleConvention,
    max_type2: f64,
) -> Result<Sim2Report> {
    let data = simulate(&GaussianSpec::sim2(scale_convention), n, derive_seed(seed, 0))?;
    let learner = LdaLearner;
    let mut bands = Vec::with_capacity(2);
    for feature in 0..2 {
        let marginal = data.select_features(&[feature])?;
        let plan = SplitPlan {
            splits,
            calibration_fraction: 0.5,
            seed: derive_seed(seed, 1 + feature as u64),
        };
        bands.push(fit_band(&marginal, &learner, delta, &plan, grid_size)?);
    }
    let band_second = bands.pop().unwrap();
    let band_first = bands.pop().unwrap();
    let dominance = compare_bands(&band_first, &band_second, grid_size)?;
    let chosen_alpha_first = choose_alpha(&band_first, max_type2)?;
    let chosen_alpha_second = choose_alpha(&band_second, max_type2)?;
    Ok(Sim2Report {
        n,
        splits,
        delta,
        scale_convention,
        band_first,
        band_second,
        dominance,
        chosen_alpha_first,
        chosen_alpha_second,
        max_type2,
    })
}

/// One (generative model, learner, split count) cell of the ensemble study.
#[derive(Debug, Clone, Serialize)]
pub struct S2Cell {
    pub model: String,
    pub learner: String,
    pub splits: usize,
    pub type1_avg: f64,
    pub type1_se: f64,
    /// Fraction of replicates whose test type I error exceeds alpha.
    pub violation_rate: f64,
    pub type2_avg: f64,
    pub type2_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct S2Report {
    pub replicates: usize,
    pub n: usize,
    pub test_n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub cells: Vec<S2Cell>,
}

const S2_LEARNERS: [&str; 3] = ["logistic", "lda", "gnb"];

/// Ensemble study: both generative models, three learners, all requested
/// split counts, sharing fitted members across split counts (the members of
/// a smaller plan are a prefix of a larger one with the same seed).
pub fn run_s2(
    replicates: usize,
    n: usize,
    alpha: f64,
    delta: f64,
    m_values: &[usize],
    seed: u64,
    test_n: usize,
) -> Result<S2Report> {
    if replicates == 0 || m_values.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one replicate and one split count".into(),
        ));
    }
    let max_m = *m_values.iter().max().unwrap();
    let models = [(S2Model::LrModel, "lr"), (S2Model::LdaModel, "lda")];
    let mut cells = Vec::new();
    for (mi, &(model, model_name)) in models.iter().enumerate() {
        let test = simulate_s2(model, test_n, derive_seed(seed, 1_000_000 + mi as u64))?;
        let test0 = test.class_indices(0);
        let test1 = test.class_indices(1);
        // accumulators[learner][m_index] = (t1_sum, t1_sq, viol, t2_sum, t2_sq)
        let mut acc = vec![vec![(0.0f64, 0.0f64, 0usize, 0.0f64, 0.0f64); m_values.len()]; S2_LEARNERS.len()];
        for r in 0..replicates {
            let stream = (mi * replicates + r) as u64;
            let data = simulate_s2(model, n, derive_seed(seed, stream))?;
            for (li, learner_name) in S2_LEARNERS.iter().enumerate() {
                let learner = learner_by_name(learner_name).unwrap();
                let plan = SplitPlan {
                    splits: max_m,
                    calibration_fraction: 0.5,
                    seed: derive_seed(seed, 2_000_000 + stream * S2_LEARNERS.len() as u64 + li as u64),
                };
                let ensemble = fit_np(&data, learner.as_ref(), alpha, delta, &plan)?;
                // count votes member by member so every prefix length in
                // m_values is evaluated from one fitting pass
                let mut votes = vec![0u32; test.len()];
                for (j, member) in ensemble.members.iter().enumerate() {
                    for (i, row) in test.features.iter().enumerate() {
                        if member.predict(row)? {
                            votes[i] += 1;
                        }
                    }
                    let m = j + 1;
                    if let Some(pos) = m_values.iter().position(|&v| v == m) {
                        let type1 = test0
                            .iter()
                            .filter(|&&i| 2 * votes[i] as usize > m)
                            .count() as f64
                            / test0.len() as f64;
                        let type2 = test1
                            .iter()
                            .filter(|&&i| 2 * votes[i] as usize <= m)
                            .count() as f64
                            / test1.len() as f64;
                        let cell = &mut acc[li][pos];
                        cell.0 += type1;
                        cell.1 += type1 * type1;
                        if type1 > alpha {
                            cell.2 += 1;
                        }
                        cell.3 += type2;
                        cell.4 += type2 * type2;
                    }
                }
            }
        }
        let d = replicates as f64;
        let se = |sum: f64, sq: f64| {
            if replicates < 2 {
                return 0.0;
            }
            let var = ((sq - sum * sum / d) / (d - 1.0)).max(0.0);
            (var / d).sqrt()
        };
        for (li, learner_name) in S2_LEARNERS.iter().enumerate() {
            for (pos, &m) in m_values.iter().enumerate() {
                let (t1, t1sq, viol, t2, t2sq) = acc[li][pos];
                cells.push(S2Cell {
                    model: model_name.to_string(),
                    learner: learner_name.to_string(),
                    splits: m,
                    type1_avg: t1 / d,
                    type1_se: se(t1, t1sq),
                    violation_rate: viol as f64 / d,
                    type2_avg: t2 / d,
                    type2_se: se(t2, t2sq),
                });
            }
        }
    }
    Ok(S2Report {
        replicates,
        n,
        test_n,
        alpha,
        delta,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim1_is_deterministic() {
        let a = run_sim1(20, 400, 0.1, 0.1, 42).unwrap();
        let b = run_sim1(20, 400, 0.1, 0.1, 42).unwrap();
        assert_eq!(a.naive_violation, b.naive_violation);
        assert_eq!(a.np_mean_type1, b.np_mean_type1);
        let c = run_sim1(20, 400, 0.1, 0.1, 43).unwrap();
        assert_ne!(a.np_mean_type1, c.np_mean_type1);
    }

    #[test]
    fn sim1_ordering_smoke() {
        // small run: the calibrated rule must violate far less often than
        // the plug-in rule
        let r = run_sim1(60, 600, 0.1, 0.1, 7).unwrap();
        assert!(r.np_violation <= 0.2);
        assert!(r.naive_violation >= 0.25);
        assert!(r.np_mean_type1 < r.naive_mean_type1);
    }

    #[test]
    fn s1_conservative_smoke() {
        let r = run_s1(60, 1000, 0.05, 0.05, 11).unwrap();
        assert!(r.np_violation <= 0.2);
        assert!(r.conservative_rate >= 0.75);
    }

    #[test]
    fn sim2_report_shape() {
        let r = run_sim2(
            600,
            3,
            0.1,
            5,
            200,
            ScaleConvention::Variance,
            0.1,
        )
        .unwrap();
        assert_eq!(r.band_first.grid.as_ref().unwrap().alphas.len(), 200);
        if let Some(a) = r.chosen_alpha_second {
            let (lower, _) = r.band_second.evaluate(a);
            assert!(1.0 - lower <= 0.1 + 1e-12);
        }
        let b = run_sim2(600, 3, 0.1, 5, 200, ScaleConvention::Variance, 0.1).unwrap();
        assert_eq!(r.dominance.intervals_second_wins, b.dominance.intervals_second_wins);
    }

    #[test]
    fn s2_cells_cover_grid() {
        let r = run_s2(3, 400, 0.1, 0.1, &[1, 3], 99, 2000).unwrap();
        assert_eq!(r.cells.len(), 2 * 3 * 2);
        for cell in &r.cells {
            assert!(cell.type1_avg.is_finite() && cell.type2_avg.is_finite());
            assert!((0.0..=1.0).contains(&cell.violation_rate));
        }
        let again = run_s2(3, 400, 0.1, 0.1, &[1, 3], 99, 2000).unwrap();
        assert_eq!(r.cells[0].type1_avg, again.cells[0].type1_avg);
    }
}
