//! The umbrella algorithm end-to-end: M seeded random splits, per-split
//! scorer fitting and threshold calibration, and majority-vote prediction.
//!
//! Two split policies coexist on purpose: calibration ([`fit_np`]) halves
//! only class 0 and sends all class 1 data to the scorer, while band
//! construction ([`fit_band`]) halves both classes so the left-out class 1
//! scores can bound the conditional type II error.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::band::{average_bands, band_from_split, NpRocBand};
use crate::data::{derive_rng, LabeledDataset};
use crate::error::{Error, Result};
use crate::scorer::{BaseLearner, ScoreModel};
use crate::threshold::{select_threshold, NpThreshold};

pub const MODEL_FORMAT: &str = "np-ensemble";
pub const MODEL_VERSION: u32 = 1;

/// How to split the training data across M random splits. Per-split RNGs
/// are a pure function of (seed, split index), so splits can be computed in
/// any order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Number of random splits M >= 1.
    pub splits: usize,
    /// Fraction of each halved class left out for calibration.
    pub calibration_fraction: f64,
    /// Master seed.
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(splits: usize, seed: u64) -> Self {
        SplitPlan {
            splits,
            calibration_fraction: 0.5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.splits < 1 {
            return Err(Error::InvalidArgument("splits must be >= 1".into()));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "calibration fraction must lie strictly between 0 and 1 (got {})",
                self.calibration_fraction
            )));
        }
        Ok(())
    }
}

/// One calibrated member of the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub model: ScoreModel,
    pub threshold: NpThreshold,
}

impl EnsembleMember {
    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        Ok(self.threshold.predicts_one(self.model.score(x)?))
    }
}

/// M single-split NP classifiers combined by majority vote; ties (even M)
/// resolve to class 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpEnsemble {
    pub members: Vec<EnsembleMember>,
    pub alpha: f64,
    pub delta: f64,
    pub seed: u64,
    pub calibration_fraction: f64,
}

impl NpEnsemble {
    pub fn splits(&self) -> usize {
        self.members.len()
    }

    /// Majority vote over member predictions: class 1 iff strictly more
    /// than M/2 members predict 1.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        let mut votes = 0usize;
        for member in &self.members {
            if member.predict(x)? {
                votes += 1;
            }
        }
        Ok(u8::from(2 * votes > self.members.len()))
    }

    /// Vote directly on precomputed per-member scores (the external-score
    /// path, where members carry no scoring function).
    pub fn predict_from_scores(&self, member_scores: &[f64]) -> Result<u8> {
        if member_scores.len() != self.members.len() {
            return Err(Error::DimensionMismatch {
                expected: self.members.len(),
                got: member_scores.len(),
            });
        }
        let votes = self
            .members
            .iter()
            .zip(member_scores)
            .filter(|(m, &s)| m.threshold.predicts_one(s))
            .count();
        Ok(u8::from(2 * votes > self.members.len()))
    }

    /// Serialize to the versioned model-file JSON layout.
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            ensemble: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<NpEnsemble> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unrecognized model format '{}'",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        Ok(file.ensemble)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    ensemble: NpEnsemble,
}

/// Shuffle the class's row indices with the split's RNG and cut off the
/// calibration part.
fn split_class_indices(
    data: &LabeledDataset,
    class: u8,
    fraction: f64,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut idx = data.class_indices(class);
    idx.shuffle(rng);
    let n_cal = (fraction * idx.len() as f64).floor() as usize;
    let calibration = idx[..n_cal].to_vec();
    let training = idx[n_cal..].to_vec();
    (training, calibration)
}

/// Fit an NP ensemble: per split, class 0 is divided into a scorer-training
/// part and a left-out calibration part; all class 1 data trains the scorer.
pub fn fit_np(
    train: &LabeledDataset,
    base: &dyn BaseLearner,
    alpha: f64,
    delta: f64,
    plan: &SplitPlan,
) -> Result<NpEnsemble> {
    plan.validate()?;
    let mut members = Vec::with_capacity(plan.splits);
    for split in 0..plan.splits {
        let mut rng = derive_rng(plan.seed, split as u64);
        let (train0, cal0) =
            split_class_indices(train, 0, plan.calibration_fraction, &mut rng);
        let class1 = train.class_indices(1);
        if train0.is_empty() && class1.is_empty() {
            return Err(Error::Unfit("no rows left to train the scorer".into()));
        }
        let mut fit_idx = train0;
        fit_idx.extend_from_slice(&class1);
        fit_idx.sort_unstable();
        let model = base.fit(&train.subset(&fit_idx))?;
        let cal_scores = model.score_batch(&train.subset(&cal0).features)?;
        let threshold = select_threshold(&cal_scores, alpha, delta)?;
        members.push(EnsembleMember { model, threshold });
    }
    Ok(NpEnsemble {
        members,
        alpha,
        delta,
        seed: plan.seed,
        calibration_fraction: plan.calibration_fraction,
    })
}

/// Build an NP-ROC band: per split, both classes are halved, the scorer is
/// fitted on the first halves, and both left-out halves are scored. Bands
/// from M > 1 splits are averaged on a uniform grid of `grid_size` points;
/// the M = 1 band keeps its exact segment form.
pub fn fit_band(
    train: &LabeledDataset,
    base: &dyn BaseLearner,
    delta: f64,
    plan: &SplitPlan,
    grid_size: usize,
) -> Result<NpRocBand> {
    plan.validate()?;
    let mut bands = Vec::with_capacity(plan.splits);
    for split in 0..plan.splits {
        let mut rng = derive_rng(plan.seed, split as u64);
        let (train0, cal0) =
            split_class_indices(train, 0, plan.calibration_fraction, &mut rng);
        let (train1, cal1) =
            split_class_indices(train, 1, plan.calibration_fraction, &mut rng);
        let mut fit_idx = train0;
        fit_idx.extend_from_slice(&train1);
        fit_idx.sort_unstable();
        let model = base.fit(&train.subset(&fit_idx))?;
        let scores0 = model.score_batch(&train.subset(&cal0).features)?;
        let scores1 = model.score_batch(&train.subset(&cal1).features)?;
        bands.push(band_from_split(&scores0, &scores1, delta)?);
    }
    if bands.len() == 1 {
        Ok(bands.pop().unwrap())
    } else {
        average_bands(&bands, grid_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate, GaussianSpec};
    use crate::scorer::{learner_by_name, IdentityLearner};

    fn member(threshold: f64) -> EnsembleMember {
        EnsembleMember {
            model: ScoreModel::Identity { feature: 0 },
            threshold: NpThreshold {
                k_star: 1,
                threshold,
                n: 1,
                alpha: 0.05,
                delta: 0.05,
                violation_bound: 0.05,
            },
        }
    }

    fn ensemble(thresholds: &[f64]) -> NpEnsemble {
        NpEnsemble {
            members: thresholds.iter().map(|&t| member(t)).collect(),
            alpha: 0.05,
            delta: 0.05,
            seed: 0,
            calibration_fraction: 0.5,
        }
    }

    #[test]
    fn majority_vote_rules() {
        // M = 3, x = 1.0: votes (1, 1, 0)
        let e = ensemble(&[0.0, 0.5, 2.0]);
        assert_eq!(e.predict(&[1.0]).unwrap(), 1);
        // M = 2, votes (1, 0): conservative tie-break to class 0
        let e = ensemble(&[0.0, 2.0]);
        assert_eq!(e.predict(&[1.0]).unwrap(), 0);
        // M = 1: the member's vote
        let e = ensemble(&[0.0]);
        assert_eq!(e.predict(&[1.0]).unwrap(), 1);
        assert_eq!(e.predict(&[-1.0]).unwrap(), 0);
    }

    #[test]
    fn predict_invariant_under_member_permutation() {
        let mut e = ensemble(&[0.0, 0.5, 2.0, -1.0, 3.0]);
        let xs: Vec<Vec<f64>> = (-6..=6).map(|i| vec![i as f64 / 2.0]).collect();
        let before: Vec<u8> = xs.iter().map(|x| e.predict(x).unwrap()).collect();
        e.members.reverse();
        let after: Vec<u8> = xs.iter().map(|x| e.predict(x).unwrap()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn fit_np_is_deterministic() {
        let data = simulate(&GaussianSpec::sim1(), 400, 19).unwrap();
        let learner = learner_by_name("lda").unwrap();
        let plan = SplitPlan::new(3, 77);
        let a = fit_np(&data, learner.as_ref(), 0.1, 0.1, &plan).unwrap();
        let b = fit_np(&data, learner.as_ref(), 0.1, 0.1, &plan).unwrap();
        assert_eq!(a, b);
        // split prefix property: the first members of a larger plan match
        let c = fit_np(&data, learner.as_ref(), 0.1, 0.1, &SplitPlan::new(5, 77)).unwrap();
        assert_eq!(&c.members[..3], &a.members[..]);
    }

    #[test]
    fn fit_np_single_split_equals_member() {
        let data = simulate(&GaussianSpec::sim1(), 400, 23).unwrap();
        let learner = IdentityLearner { feature: 0 };
        let e = fit_np(&data, &learner, 0.1, 0.1, &SplitPlan::new(1, 5)).unwrap();
        assert_eq!(e.members.len(), 1);
        for x in [[-1.0], [0.3], [2.5]] {
            let member = e.members[0].predict(&x).unwrap();
            assert_eq!(e.predict(&x).unwrap(), u8::from(member));
        }
    }

    #[test]
    fn fit_np_insufficient_sample() {
        let data = simulate(&GaussianSpec::sim1(), 40, 3).unwrap();
        let learner = IdentityLearner { feature: 0 };
        let err = fit_np(&data, &learner, 0.05, 0.05, &SplitPlan::new(1, 5)).unwrap_err();
        assert!(matches!(err, Error::InsufficientSample { n_min: 59, .. }));
    }

    #[test]
    fn model_json_round_trip() {
        let data = simulate(&GaussianSpec::sim1(), 400, 29).unwrap();
        let learner = learner_by_name("gnb").unwrap();
        let e = fit_np(&data, learner.as_ref(), 0.1, 0.1, &SplitPlan::new(2, 1)).unwrap();
        let text = e.to_json().unwrap();
        let back = NpEnsemble::from_json(&text).unwrap();
        assert_eq!(e, back);
        assert!(NpEnsemble::from_json("{\"format\":\"other\",\"version\":1,\"ensemble\":null}").is_err());
    }

    #[test]
    fn fit_band_deterministic_and_sized() {
        let data = simulate(&GaussianSpec::sim1(), 300, 31).unwrap();
        let learner = IdentityLearner { feature: 0 };
        let plan = SplitPlan::new(1, 13);
        let band = fit_band(&data, &learner, 0.1, &plan, 100).unwrap();
        // single split keeps segment form with one segment per left-out
        // class 0 score
        assert!(band.grid.is_none());
        assert_eq!(band.segments.len(), band.n);
        assert_eq!(band, fit_band(&data, &learner, 0.1, &plan, 100).unwrap());

        let avg = fit_band(&data, &learner, 0.1, &SplitPlan::new(3, 13), 100).unwrap();
        assert!(avg.grid.is_some());
        let grid = avg.grid.as_ref().unwrap();
        for i in 0..grid.alphas.len() {
            assert!(grid.lower[i] <= grid.upper[i] + 1e-9);
        }
    }
}
