//! Dataset ingestion, seeded splitting, the Gaussian generative models used
//! by the simulation harness, and analytic population-error oracles.
//!
//! All randomness flows from a single master seed: every consumer derives a
//! `ChaCha12Rng` through [`derive_rng`], which maps (master seed, stream
//! index) onto an independent ChaCha stream. No global RNG state anywhere.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::standard_normal_cdf;

/// Deterministic per-task RNG: the master seed keys the generator, the
/// stream index separates tasks (splits, replicates) so they can run in any
/// order with identical output.
pub fn derive_rng(master_seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Fold (master seed, stream) into a fresh master seed, for components whose
/// API takes a single seed.
pub fn derive_seed(master_seed: u64, stream: u64) -> u64 {
    derive_rng(master_seed, stream).gen()
}

/// Feature matrix with binary labels; the unit of ingestion, splitting, and
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// Row-major n x d matrix.
    pub features: Vec<Vec<f64>>,
    /// One {0, 1} label per row.
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("dataset must be nonempty".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("need at least one feature".into()));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} features, expected {d}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} contains a non-finite feature value"
                )));
            }
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Row indices belonging to the given class, in dataset order.
    pub fn class_indices(&self, class: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Restrict to the given feature columns, preserving order.
    pub fn select_features(&self, columns: &[usize]) -> Result<LabeledDataset> {
        let d = self.dim();
        if let Some(&bad) = columns.iter().find(|&&c| c >= d) {
            return Err(Error::InvalidArgument(format!(
                "feature column {bad} out of range (d = {d})"
            )));
        }
        if columns.is_empty() {
            return Err(Error::InvalidArgument("need at least one column".into()));
        }
        Ok(LabeledDataset {
            features: self
                .features
                .iter()
                .map(|row| columns.iter().map(|&c| row[c]).collect())
                .collect(),
            labels: self.labels.clone(),
        })
    }
}

/// Interpretation of the second Gaussian parameter. A literature "N(1, 6)"
/// is ambiguous between the math convention (variance) and the R convention
/// (standard deviation), so both are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ScaleConvention {
    #[default]
    Variance,
    StandardDeviation,
}

impl ScaleConvention {
    pub fn to_sd(self, scale: f64) -> f64 {
        match self {
            ScaleConvention::Variance => scale.sqrt(),
            ScaleConvention::StandardDeviation => scale,
        }
    }
}

/// Per-class independent Gaussian features.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    /// (mean, scale) per feature for class 0.
    pub class0: Vec<(f64, f64)>,
    /// (mean, scale) per feature for class 1.
    pub class1: Vec<(f64, f64)>,
    pub prior0: f64,
    pub scale_convention: ScaleConvention,
}

impl GaussianSpec {
    /// Simulation 1: X|0 ~ N(0,1), X|1 ~ N(2,1), equal priors.
    pub fn sim1() -> Self {
        GaussianSpec {
            class0: vec![(0.0, 1.0)],
            class1: vec![(2.0, 1.0)],
            prior0: 0.5,
            scale_convention: ScaleConvention::Variance,
        }
    }

    /// Simulation 2: two independent predictors, X2|1 ~ N(1, 6) under the
    /// chosen scale convention.
    pub fn sim2(scale_convention: ScaleConvention) -> Self {
        GaussianSpec {
            class0: vec![(0.0, 1.0), (0.0, 1.0)],
            class1: vec![(1.0, 1.0), (1.0, 6.0)],
            prior0: 0.5,
            scale_convention,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.class0.len() != self.class1.len() || self.class0.is_empty() {
            return Err(Error::InvalidArgument(
                "class 0 and class 1 must specify the same nonzero number of features".into(),
            ));
        }
        if self
            .class0
            .iter()
            .chain(&self.class1)
            .any(|&(_, scale)| !(scale > 0.0))
        {
            return Err(Error::InvalidArgument("scales must be > 0".into()));
        }
        if !(self.prior0 > 0.0 && self.prior0 < 1.0) {
            return Err(Error::InvalidArgument(
                "class 0 prior must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }
}

/// Draw n labeled observations from a Gaussian spec. Labels are
/// Bernoulli(1 - prior0); features per class per spec.
pub fn simulate(spec: &GaussianSpec, n: usize, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = derive_rng(seed, 0);
    let d = spec.class0.len();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y: u8 = if rng.gen::<f64>() < spec.prior0 { 0 } else { 1 };
        let params = if y == 0 { &spec.class0 } else { &spec.class1 };
        let mut row = Vec::with_capacity(d);
        for &(mean, scale) in params {
            let normal = Normal::new(mean, spec.scale_convention.to_sd(scale)).unwrap();
            row.push(normal.sample(&mut rng));
        }
        features.push(row);
        labels.push(y);
    }
    LabeledDataset::new(features, labels)
}

/// The two generative models of the ensemble-effects simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum S2Model {
    /// d = 3 standard-normal features, logistic labels with coefficients
    /// (3, 2.4, 1.8).
    LrModel,
    /// Bernoulli(0.5) labels; class-conditional means (0,0,0) vs
    /// (2, 1.6, 1.2), identity covariance.
    LdaModel,
}

pub const S2_LR_COEFFICIENTS: [f64; 3] = [3.0, 2.4, 1.8];
pub const S2_LDA_CLASS1_MEANS: [f64; 3] = [2.0, 1.6, 1.2];

pub fn simulate_s2(model: S2Model, n: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = derive_rng(seed, 0);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    match model {
        S2Model::LrModel => {
            for _ in 0..n {
                let row: Vec<f64> = (0..3).map(|_| std_normal.sample(&mut rng)).collect();
                let logit: f64 = row
                    .iter()
                    .zip(S2_LR_COEFFICIENTS)
                    .map(|(x, b)| x * b)
                    .sum();
                let p1 = 1.0 / (1.0 + (-logit).exp());
                labels.push(if rng.gen::<f64>() < p1 { 1 } else { 0 });
                features.push(row);
            }
        }
        S2Model::LdaModel => {
            for _ in 0..n {
                let y: u8 = if rng.gen::<f64>() < 0.5 { 0 } else { 1 };
                let row: Vec<f64> = (0..3)
                    .map(|j| {
                        let mean = if y == 1 { S2_LDA_CLASS1_MEANS[j] } else { 0.0 };
                        mean + std_normal.sample(&mut rng)
                    })
                    .collect();
                labels.push(y);
                features.push(row);
            }
        }
    }
    LabeledDataset::new(features, labels)
}

/// Population type I error of the classifier I(X > threshold) under
/// X|0 ~ N(mean, sd^2): 1 - Phi((t - mean)/sd).
pub fn gaussian_type1(threshold: f64, class0_mean: f64, class0_sd: f64) -> f64 {
    1.0 - standard_normal_cdf((threshold - class0_mean) / class0_sd)
}

/// Population type II error of I(X > threshold) under X|1 ~ N(mean, sd^2).
pub fn gaussian_type2(threshold: f64, class1_mean: f64, class1_sd: f64) -> f64 {
    standard_normal_cdf((threshold - class1_mean) / class1_sd)
}

/// Split within each class independently: part A receives
/// floor(fraction * n_c) rows of class c, part B the remainder. Seeded and
/// deterministic.
pub fn stratified_half_split(
    data: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie strictly between 0 and 1 (got {fraction})"
        )));
    }
    let (a_idx, b_idx) = stratified_split_indices(data, fraction, seed);
    Ok((data.subset(&a_idx), data.subset(&b_idx)))
}

/// Index-level variant of [`stratified_half_split`].
pub fn stratified_split_indices(
    data: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = derive_rng(seed, 0);
    let mut part_a = Vec::new();
    let mut part_b = Vec::new();
    for class in [0u8, 1] {
        let mut idx = data.class_indices(class);
        idx.shuffle(&mut rng);
        let cut = (fraction * idx.len() as f64).floor() as usize;
        part_a.extend_from_slice(&idx[..cut]);
        part_b.extend_from_slice(&idx[cut..]);
    }
    part_a.sort_unstable();
    part_b.sort_unstable();
    (part_a, part_b)
}

/// Load a dataset from CSV with a header row. Every column except the label
/// column is a numeric feature.
pub fn load_csv(path: &Path, label_column: &str) -> Result<LabeledDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::InvalidArgument(format!(
            "label column '{label_column}' not found in header"
        )))?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 2; // 1-based, after the header
        let mut row = Vec::with_capacity(headers.len().saturating_sub(1));
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                match field.trim() {
                    "0" => labels.push(0),
                    "1" => labels.push(1),
                    other => {
                        return Err(Error::Parse {
                            row: row_no,
                            column: label_column.into(),
                            message: format!("label must be 0 or 1, got '{other}'"),
                        })
                    }
                }
            } else {
                let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    row: row_no,
                    column: headers.get(j).unwrap_or("?").into(),
                    message: format!("expected a number, got '{field}'"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        row: row_no,
                        column: headers.get(j).unwrap_or("?").into(),
                        message: "non-finite value".into(),
                    });
                }
                row.push(value);
            }
        }
        features.push(row);
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument("CSV contains no data rows".into()));
    }
    LabeledDataset::new(features, labels)
}

/// Write a dataset as CSV with feature columns x0..x{d-1} and a trailing
/// label column.
pub fn save_csv<W: Write>(data: &LabeledDataset, label_column: &str, out: &mut W) -> Result<()> {
    let d = data.dim();
    let header: Vec<String> = (0..d)
        .map(|j| format!("x{j}"))
        .chain(std::iter::once(label_column.to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (row, &label) in data.features.iter().zip(&data.labels) {
        let fields: Vec<String> = row.iter().map(|x| format!("{x:.17e}")).collect();
        writeln!(out, "{},{label}", fields.join(","))?;
    }
    Ok(())
}

/// Read an external-score file: header `score,label`, label in {0, 1}.
pub fn load_scores_csv<R: BufRead>(input: R) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "score,label" {
                return Err(Error::Parse {
                    row: 1,
                    column: "header".into(),
                    message: format!("expected header 'score,label', got '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row_no = i + 1;
        let mut parts = line.split(',');
        let score: f64 = parts
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                row: row_no,
                column: "score".into(),
                message: "expected a number".into(),
            })?;
        let label = match parts.next().map(str::trim) {
            Some("0") => 0u8,
            Some("1") => 1u8,
            other => {
                return Err(Error::Parse {
                    row: row_no,
                    column: "label".into(),
                    message: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        scores.push(score);
        labels.push(label);
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("score file contains no rows".into()));
    }
    Ok((scores, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_sim1_moments() {
        let data = simulate(&GaussianSpec::sim1(), 100_000, 11).unwrap();
        let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
        for (row, &y) in data.features.iter().zip(&data.labels) {
            if y == 0 {
                s0 += row[0];
                n0 += 1;
            } else {
                s1 += row[0];
                n1 += 1;
            }
        }
        assert!((s0 / n0 as f64).abs() < 0.02);
        assert!((s1 / n1 as f64 - 2.0).abs() < 0.02);
        // binomial concentration of class counts
        let half = data.len() as f64 / 2.0;
        assert!((n0 as f64 - half).abs() < 3.0 * (data.len() as f64 / 4.0).sqrt());
    }

    #[test]
    fn simulate_seeded_determinism() {
        let a = simulate(&GaussianSpec::sim1(), 500, 7).unwrap();
        let b = simulate(&GaussianSpec::sim1(), 500, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate(&GaussianSpec::sim1(), 500, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn simulate_s2_lda_moments() {
        let data = simulate_s2(S2Model::LdaModel, 100_000, 3).unwrap();
        let idx1 = data.class_indices(1);
        for j in 0..3 {
            let mean: f64 =
                idx1.iter().map(|&i| data.features[i][j]).sum::<f64>() / idx1.len() as f64;
            assert!(
                (mean - S2_LDA_CLASS1_MEANS[j]).abs() < 0.03,
                "feature {j}: {mean}"
            );
        }
        assert_eq!(
            simulate_s2(S2Model::LrModel, 100, 5).unwrap(),
            simulate_s2(S2Model::LrModel, 100, 5).unwrap()
        );
    }

    #[test]
    fn gaussian_oracle_values() {
        assert!((gaussian_type1(0.0, 0.0, 1.0) - 0.5).abs() < 1e-14);
        assert!((gaussian_type1(1.65, 0.0, 1.0) - 0.0495).abs() < 1e-4);
        assert!((gaussian_type1(1.0, 0.0, 1.0) - 0.1587).abs() < 1e-4);
        // type II of I(X > 1.65) under N(2,1): Phi(-0.35)
        assert!((gaussian_type2(1.65, 2.0, 1.0) - standard_normal_cdf(-0.35)).abs() < 1e-14);
    }

    #[test]
    fn stratified_split_partitions() {
        let features: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let data = LabeledDataset::new(features, labels).unwrap();
        let (a, b) = stratified_half_split(&data, 0.5, 9).unwrap();
        assert_eq!(a.class_indices(0).len(), 5);
        assert_eq!(a.class_indices(1).len(), 5);
        assert_eq!(b.len(), 10);
        // union is the original multiset
        let mut all: Vec<f64> = a
            .features
            .iter()
            .chain(&b.features)
            .map(|r| r[0])
            .collect();
        all.sort_by(f64::total_cmp);
        let expect: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(all, expect);
        // different seeds give different partitions
        let (a2, _) = stratified_half_split(&data, 0.5, 10).unwrap();
        assert_ne!(a, a2);
    }

    #[test]
    fn csv_round_trip() {
        let data = simulate(&GaussianSpec::sim2(ScaleConvention::Variance), 30, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut file = std::fs::File::create(&path).unwrap();
        save_csv(&data, "label", &mut file).unwrap();
        drop(file);
        let back = load_csv(&path, "label").unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn load_csv_reports_bad_label_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,label\n1.0,0\n2.0,2\n").unwrap();
        let err = load_csv(&path, "label").unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_reports_non_numeric_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad2.csv");
        std::fs::write(&path, "x0,label\nfoo,0\n").unwrap();
        assert!(matches!(
            load_csv(&path, "label").unwrap_err(),
            Error::Parse { row: 2, .. }
        ));
    }

    #[test]
    fn scores_csv_parses() {
        let (scores, labels) = load_scores_csv("score,label\n0.5,0\n1.5,1\n".as_bytes()).unwrap();
        assert_eq!(scores, vec![0.5, 1.5]);
        assert_eq!(labels, vec![0, 1]);
        assert!(load_scores_csv("score,label\n0.5,2\n".as_bytes()).is_err());
    }
}
