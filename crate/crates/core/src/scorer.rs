//! Built-in scoring models and the base-learner registry.
//!
//! Every base learner implements [`BaseLearner`] and is looked up by name
//! ([`learner_by_name`]), so the calibration and band pipelines are generic
//! over the scoring method. A fitted [`ScoreModel`] is an immutable,
//! serializable record; higher score always means more class-1-like.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// LDA ridge applied when the pooled covariance is singular.
const LDA_RIDGE_FACTOR: f64 = 1e-6;
/// Floor on per-feature per-class variances in Gaussian naive Bayes.
const GNB_VARIANCE_FLOOR: f64 = 1e-12;
/// Logistic regression defaults.
pub const LOGISTIC_MAX_ITER: usize = 100;
pub const LOGISTIC_TOL: f64 = 1e-8;

/// A fitted scoring function f: features -> real score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreModel {
    /// Returns the designated feature column verbatim.
    Identity { feature: usize },
    /// Affine discriminant w . x + b from pooled-covariance LDA.
    Lda { weights: Vec<f64>, intercept: f64 },
    /// Log posterior-odds of class 1 under independent-feature Gaussians.
    GaussianNb {
        log_prior_odds: f64,
        means0: Vec<f64>,
        vars0: Vec<f64>,
        means1: Vec<f64>,
        vars1: Vec<f64>,
    },
    /// Affine logit w . x + b from logistic regression.
    Logistic { weights: Vec<f64>, intercept: f64 },
    /// Scores ingested from an external file; carries no scoring function.
    External,
}

impl ScoreModel {
    /// Feature dimension the model expects, if it scores feature vectors.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ScoreModel::Identity { feature } => Some(feature + 1),
            ScoreModel::Lda { weights, .. } | ScoreModel::Logistic { weights, .. } => {
                Some(weights.len())
            }
            ScoreModel::GaussianNb { means0, .. } => Some(means0.len()),
            ScoreModel::External => None,
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            ScoreModel::Identity { feature } => {
                x.get(*feature).copied().ok_or(Error::DimensionMismatch {
                    expected: feature + 1,
                    got: x.len(),
                })
            }
            ScoreModel::Lda { weights, intercept }
            | ScoreModel::Logistic { weights, intercept } => {
                if x.len() != weights.len() {
                    return Err(Error::DimensionMismatch {
                        expected: weights.len(),
                        got: x.len(),
                    });
                }
                Ok(weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + intercept)
            }
            ScoreModel::GaussianNb {
                log_prior_odds,
                means0,
                vars0,
                means1,
                vars1,
            } => {
                if x.len() != means0.len() {
                    return Err(Error::DimensionMismatch {
                        expected: means0.len(),
                        got: x.len(),
                    });
                }
                let mut score = *log_prior_odds;
                for j in 0..x.len() {
                    let d1 = x[j] - means1[j];
                    let d0 = x[j] - means0[j];
                    score += -0.5 * vars1[j].ln() - d1 * d1 / (2.0 * vars1[j])
                        + 0.5 * vars0[j].ln()
                        + d0 * d0 / (2.0 * vars0[j]);
                }
                Ok(score)
            }
            ScoreModel::External => Err(Error::InvalidArgument(
                "external models carry no scoring function; supply scores directly".into(),
            )),
        }
    }

    pub fn score_batch(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        features.iter().map(|row| self.score(row)).collect()
    }
}

/// A scorer-fitting strategy, selectable by name at runtime.
pub trait BaseLearner: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, train: &LabeledDataset) -> Result<ScoreModel>;
}

/// Names accepted by [`learner_by_name`].
pub const LEARNER_NAMES: [&str; 4] = ["identity", "lda", "gnb", "logistic"];

/// Look up a base learner with default hyperparameters.
pub fn learner_by_name(name: &str) -> Option<Box<dyn BaseLearner>> {
    match name {
        "identity" => Some(Box::new(IdentityLearner { feature: 0 })),
        "lda" => Some(Box::new(LdaLearner)),
        "gnb" => Some(Box::new(GaussianNbLearner)),
        "logistic" => Some(Box::new(LogisticLearner::default())),
        _ => None,
    }
}

fn split_by_class(train: &LabeledDataset) -> Result<(Vec<&Vec<f64>>, Vec<&Vec<f64>>)> {
    let rows0: Vec<&Vec<f64>> = train
        .features
        .iter()
        .zip(&train.labels)
        .filter(|(_, &y)| y == 0)
        .map(|(r, _)| r)
        .collect();
    let rows1: Vec<&Vec<f64>> = train
        .features
        .iter()
        .zip(&train.labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .collect();
    if rows0.is_empty() || rows1.is_empty() {
        return Err(Error::Unfit(
            "training data must contain both classes".into(),
        ));
    }
    Ok((rows0, rows1))
}

fn column_means(rows: &[&Vec<f64>], d: usize) -> Vec<f64> {
    let mut means = vec![0.0; d];
    for row in rows {
        for j in 0..d {
            means[j] += row[j];
        }
    }
    for m in &mut means {
        *m /= rows.len() as f64;
    }
    means
}

/// No training: score is the designated feature column.
pub struct IdentityLearner {
    pub feature: usize,
}

impl BaseLearner for IdentityLearner {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn fit(&self, train: &LabeledDataset) -> Result<ScoreModel> {
        if self.feature >= train.dim() {
            return Err(Error::Unfit(format!(
                "identity feature index {} out of range (d = {})",
                self.feature,
                train.dim()
            )));
        }
        Ok(ScoreModel::Identity {
            feature: self.feature,
        })
    }
}

/// Linear discriminant analysis with pooled covariance.
pub struct LdaLearner;

impl BaseLearner for LdaLearner {
    fn name(&self) -> &'static str {
        "lda"
    }

    fn fit(&self, train: &LabeledDataset) -> Result<ScoreModel> {
        let d = train.dim();
        let (rows0, rows1) = split_by_class(train)?;
        let (n0, n1) = (rows0.len(), rows1.len());
        let mu0 = column_means(&rows0, d);
        let mu1 = column_means(&rows1, d);

        let mut pooled = DMatrix::<f64>::zeros(d, d);
        for (rows, mu) in [(&rows0, &mu0), (&rows1, &mu1)] {
            for row in rows.iter() {
                for j in 0..d {
                    for l in 0..d {
                        pooled[(j, l)] += (row[j] - mu[j]) * (row[l] - mu[l]);
                    }
                }
            }
        }
        let dof = (n0 + n1).saturating_sub(2).max(1) as f64;
        pooled /= dof;

        let diff = DVector::from_iterator(d, (0..d).map(|j| mu1[j] - mu0[j]));
        let weights = match pooled.clone().cholesky() {
            Some(chol) => chol.solve(&diff),
            None => {
                let trace: f64 = (0..d).map(|j| pooled[(j, j)]).sum();
                let ridge = if trace > 0.0 {
                    LDA_RIDGE_FACTOR * trace / d as f64
                } else {
                    LDA_RIDGE_FACTOR
                };
                let mut regularized = pooled;
                for j in 0..d {
                    regularized[(j, j)] += ridge;
                }
                regularized
                    .cholesky()
                    .ok_or_else(|| Error::Unfit("pooled covariance is not positive definite".into()))?
                    .solve(&diff)
            }
        };

        let mid: f64 = (0..d).map(|j| weights[j] * 0.5 * (mu0[j] + mu1[j])).sum();
        let intercept = (n1 as f64 / n0 as f64).ln() - mid;
        Ok(ScoreModel::Lda {
            weights: weights.iter().copied().collect(),
            intercept,
        })
    }
}

/// Gaussian naive Bayes with empirical priors and floored variances.
pub struct GaussianNbLearner;

impl BaseLearner for GaussianNbLearner {
    fn name(&self) -> &'static str {
        "gnb"
    }

    fn fit(&self, train: &LabeledDataset) -> Result<ScoreModel> {
        let d = train.dim();
        let (rows0, rows1) = split_by_class(train)?;
        let variance = |rows: &[&Vec<f64>], means: &[f64]| -> Vec<f64> {
            let mut vars = vec![0.0; d];
            for row in rows {
                for j in 0..d {
                    let diff = row[j] - means[j];
                    vars[j] += diff * diff;
                }
            }
            for v in &mut vars {
                *v = (*v / rows.len() as f64).max(GNB_VARIANCE_FLOOR);
            }
            vars
        };
        let means0 = column_means(&rows0, d);
        let means1 = column_means(&rows1, d);
        let vars0 = variance(&rows0, &means0);
        let vars1 = variance(&rows1, &means1);
        Ok(ScoreModel::GaussianNb {
            log_prior_odds: (rows1.len() as f64 / rows0.len() as f64).ln(),
            means0,
            vars0,
            means1,
            vars1,
        })
    }
}

/// Logistic regression fitted by iteratively reweighted least squares.
/// Quasi-separation is tolerated: iterations are capped and the returned
/// scores remain usable because only their ranking matters downstream.
pub struct LogisticLearner {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticLearner {
    fn default() -> Self {
        LogisticLearner {
            max_iter: LOGISTIC_MAX_ITER,
            tol: LOGISTIC_TOL,
        }
    }
}

impl BaseLearner for LogisticLearner {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn fit(&self, train: &LabeledDataset) -> Result<ScoreModel> {
        split_by_class(train)?; // both classes required
        let n = train.len();
        let d = train.dim();
        let p = d + 1; // intercept first

        let mut beta = DVector::<f64>::zeros(p);
        for _ in 0..self.max_iter {
            // Assemble X'WX and X'Wz for the working response
            // z = eta + (y - mu) / w with w = mu (1 - mu).
            let mut xtwx = DMatrix::<f64>::zeros(p, p);
            let mut xtwz = DVector::<f64>::zeros(p);
            let mut xrow = vec![0.0; p];
            for i in 0..n {
                xrow[0] = 1.0;
                xrow[1..].copy_from_slice(&train.features[i]);
                let eta: f64 = xrow.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
                let eta_c = eta.clamp(-30.0, 30.0);
                let mu = 1.0 / (1.0 + (-eta_c).exp());
                let w = (mu * (1.0 - mu)).max(1e-10);
                let z = eta_c + (train.labels[i] as f64 - mu) / w;
                for j in 0..p {
                    xtwz[j] += w * xrow[j] * z;
                    for l in j..p {
                        xtwx[(j, l)] += w * xrow[j] * xrow[l];
                    }
                }
            }
            for j in 0..p {
                for l in 0..j {
                    xtwx[(j, l)] = xtwx[(l, j)];
                }
            }
            let next = match xtwx.clone().cholesky() {
                Some(chol) => chol.solve(&xtwz),
                None => {
                    for j in 0..p {
                        xtwx[(j, j)] += 1e-10;
                    }
                    match xtwx.cholesky() {
                        Some(chol) => chol.solve(&xtwz),
                        None => break, // keep the current iterate
                    }
                }
            };
            let delta = (&next - &beta).amax();
            beta = next;
            if delta < self.tol {
                break;
            }
        }
        Ok(ScoreModel::Logistic {
            weights: beta.iter().skip(1).copied().collect(),
            intercept: beta[0],
        })
    }
}

/// Empirical error report on a test set. A class absent from the test data
/// yields an absent error, not zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub type1_hat: Option<f64>,
    pub type2_hat: Option<f64>,
    pub n0: usize,
    pub n1: usize,
}

/// Empirical type I/II errors of a classifier (`predict` returns true for a
/// class 1 prediction).
pub fn evaluate_errors<F>(predict: F, test: &LabeledDataset) -> Result<ErrorReport>
where
    F: Fn(&[f64]) -> Result<bool>,
{
    if test.is_empty() {
        return Err(Error::InvalidArgument("test data must be nonempty".into()));
    }
    let (mut n0, mut n1, mut fp, mut fnn) = (0usize, 0usize, 0usize, 0usize);
    for (row, &y) in test.features.iter().zip(&test.labels) {
        let pred1 = predict(row)?;
        if y == 0 {
            n0 += 1;
            if pred1 {
                fp += 1;
            }
        } else {
            n1 += 1;
            if !pred1 {
                fnn += 1;
            }
        }
    }
    Ok(ErrorReport {
        type1_hat: (n0 > 0).then(|| fp as f64 / n0 as f64),
        type2_hat: (n1 > 0).then(|| fnn as f64 / n1 as f64),
        n0,
        n1,
    })
}
