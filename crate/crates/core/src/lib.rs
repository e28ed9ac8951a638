//! Binary classification with a provable ceiling on the type I error.
//!
//! The central object is an order-statistic threshold: given left-out
//! class 0 scores, [`threshold::select_threshold`] picks the smallest order
//! statistic whose population type I error exceeds `alpha` with probability
//! at most `delta`, no matter what the score distribution is. On top of that
//! sit uncertainty bands for the whole ROC curve ([`band`]), a family of
//! pluggable scoring functions ([`scorer`]), a split-and-vote ensemble
//! ([`ensemble`]), and a seeded simulation harness ([`sim`]).

pub mod band;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod scorer;
pub mod sim;
pub mod special;
pub mod threshold;

pub use band::{
    alpha_upper_bound, average_bands, band_from_split, beta_lower_bound, beta_upper_bound,
    choose_alpha, compare_bands, rank_bounds, BandGrid, BandSegment, DominanceReport, NpRocBand,
    Scenario, DEFAULT_GRID_SIZE,
};
pub use data::{
    derive_rng, derive_seed, load_csv, load_scores_csv, save_csv, simulate, simulate_s2,
    stratified_half_split, GaussianSpec, LabeledDataset, S2Model, ScaleConvention,
};
pub use ensemble::{fit_band, fit_np, EnsembleMember, NpEnsemble, SplitPlan};
pub use error::{Error, Result};
pub use scorer::{evaluate_errors, learner_by_name, BaseLearner, ErrorReport, ScoreModel, LEARNER_NAMES};
pub use threshold::{
    min_class0_size, min_order_index, naive_threshold, select_threshold, violation_rate,
    NpThreshold,
};
