//! `npc` — calibrate, apply, and study classifiers whose type I error stays
//! below a target level with high probability.
//!
//! Every command is deterministic given its full flag set (including the
//! seed). Machine-readable output (JSON/CSV) goes to stdout or the requested
//! file; human-oriented progress and warnings go to stderr.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use npc_core::band::{
    choose_alpha, compare_bands, read_band_csv, write_band_csv, write_dominance_csv, NpRocBand,
    DEFAULT_GRID_SIZE,
};
use npc_core::data::{
    load_csv, load_scores_csv, save_csv, simulate, simulate_s2, GaussianSpec, LabeledDataset,
    S2Model, ScaleConvention,
};
use npc_core::ensemble::{fit_band, fit_np, EnsembleMember, NpEnsemble, SplitPlan};
use npc_core::error::Error;
use npc_core::scorer::{evaluate_errors, learner_by_name, BaseLearner, IdentityLearner, ScoreModel};
use npc_core::sim::{run_s1, run_s2, run_sim1, run_sim2};
use npc_core::threshold::{min_class0_size, select_threshold, violation_rate};

#[derive(Parser)]
#[command(
    name = "npc",
    version,
    about = "Classification with a high-probability ceiling on the type I error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseChoice {
    Identity,
    Lda,
    Gnb,
    Logistic,
}

impl BaseChoice {
    fn learner(self, feature: usize) -> Box<dyn BaseLearner> {
        match self {
            BaseChoice::Identity => Box::new(IdentityLearner { feature }),
            BaseChoice::Lda => learner_by_name("lda").unwrap(),
            BaseChoice::Gnb => learner_by_name("gnb").unwrap(),
            BaseChoice::Logistic => learner_by_name("logistic").unwrap(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleChoice {
    Variance,
    Sd,
}

impl From<ScaleChoice> for ScaleConvention {
    fn from(c: ScaleChoice) -> Self {
        match c {
            ScaleChoice::Variance => ScaleConvention::Variance,
            ScaleChoice::Sd => ScaleConvention::StandardDeviation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DataModel {
    Sim1,
    Sim2,
    S2Lr,
    S2Lda,
}

/// Flags shared by every command that loads a feature CSV.
#[derive(Args)]
struct DataArgs {
    /// Feature CSV with a header row; all non-label columns are numeric
    /// features.
    #[arg(long)]
    data: PathBuf,
    /// Name of the label column (values 0/1).
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Comma-separated feature column indices to keep (default: all).
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<usize>>,
}

impl DataArgs {
    fn load(&self) -> Result<LabeledDataset, Error> {
        let data = load_csv(&self.data, &self.label_col)?;
        match &self.features {
            Some(cols) => data.select_features(cols),
            None => Ok(data),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Smallest class 0 calibration sample that can meet the target at all.
    Minsize {
        /// Type I error target.
        #[arg(long)]
        alpha: f64,
        /// Allowed probability of exceeding the target.
        #[arg(long)]
        delta: f64,
    },
    /// Draw a labeled dataset from one of the built-in generative models.
    Generate {
        #[arg(long, value_enum)]
        model: DataModel,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "variance")]
        scale_convention: ScaleChoice,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate an ensemble of thresholded scorers and save the model.
    Fit {
        #[command(flatten)]
        data: Option<DataArgs>,
        /// Precomputed score CSV (`score,label`) instead of feature data;
        /// calibrates a threshold only.
        #[arg(long, conflicts_with = "data")]
        scores: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "identity")]
        base: BaseChoice,
        /// Feature column scored by the identity base.
        #[arg(long, default_value_t = 0)]
        feature: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
        /// Number of random splits M.
        #[arg(long, default_value_t = 1)]
        splits: usize,
        /// Fraction of class 0 left out for calibration per split.
        #[arg(long, default_value_t = 0.5)]
        split_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the model JSON.
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Apply a saved model to feature data.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Label column to drop if present.
        #[arg(long, default_value = "label")]
        label_col: String,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical type I/II errors of a saved model on labeled data.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit per-split scorers and emit the ROC uncertainty band as CSV.
    Band {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "identity")]
        base: BaseChoice,
        #[arg(long, default_value_t = 0)]
        feature: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 1)]
        splits: usize,
        #[arg(long, default_value_t = 0.5)]
        split_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dominance intervals between two band CSVs.
    Compare {
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        /// Dominance CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest type I target whose band lower curve already guarantees the
    /// requested type II error.
    ChooseAlpha {
        /// Band CSV produced by `band`.
        #[arg(long)]
        band: PathBuf,
        #[arg(long)]
        max_type2: f64,
    },
    /// Reproduce the built-in seeded Monte Carlo studies.
    Simulate {
        #[command(subcommand)]
        study: Study,
    },
}

#[derive(Subcommand)]
enum Study {
    /// Violation rates of plug-in, cross-validated, and calibrated
    /// thresholds on the one-dimensional Gaussian model.
    Sim1 {
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Band comparison of the two marginal predictors of the two-feature
    /// Gaussian model.
    Sim2 {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 11)]
        splits: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        #[arg(long, value_enum, default_value = "variance")]
        scale_convention: ScaleChoice,
        #[arg(long, default_value_t = 0.5)]
        max_type2: f64,
        /// Directory for band and dominance CSVs (skipped if omitted).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Operating points picked from the empirical ROC curve versus from the
    /// band's lower curve.
    S1 {
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ensemble effects across generative models, learners, and split
    /// counts, scored against a large seeded test draw.
    S2 {
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Comma-separated split counts to evaluate.
        #[arg(long, value_delimiter = ',', default_value = "1,5,11")]
        splits: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Size of the seeded test draw used as population proxy.
        #[arg(long, default_value_t = 100_000)]
        test_n: usize,
    },
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), Error> {
    match path {
        Some(p) => {
            fs::write(p, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            std::io::stdout().flush()?;
            Ok(())
        }
    }
}

fn fit_external(
    scores_path: &Path,
    alpha: f64,
    delta: f64,
    splits: usize,
    seed: u64,
    split_fraction: f64,
) -> Result<NpEnsemble, Error> {
    if splits != 1 {
        return Err(Error::InvalidArgument(
            "external score calibration has nothing to refit per split; use --splits 1".into(),
        ));
    }
    eprintln!(
        "note: external scores must come from observations disjoint from \
         the data that trained the scorer, or the error guarantee is void"
    );
    let file = fs::File::open(scores_path)?;
    let (scores, labels) = load_scores_csv(BufReader::new(file))?;
    let class0: Vec<f64> = scores
        .iter()
        .zip(&labels)
        .filter(|(_, &y)| y == 0)
        .map(|(&s, _)| s)
        .collect();
    let threshold = select_threshold(&class0, alpha, delta)?;
    Ok(NpEnsemble {
        members: vec![EnsembleMember {
            model: ScoreModel::External,
            threshold,
        }],
        alpha,
        delta,
        seed,
        calibration_fraction: split_fraction,
    })
}

fn fit_report(ensemble: &NpEnsemble) -> serde_json::Value {
    json!({
        "alpha": ensemble.alpha,
        "delta": ensemble.delta,
        "splits": ensemble.splits(),
        "members": ensemble
            .members
            .iter()
            .map(|m| {
                json!({
                    "k_star": m.threshold.k_star,
                    "threshold": m.threshold.threshold,
                    "n": m.threshold.n,
                    "violation_bound": m.threshold.violation_bound,
                })
            })
            .collect::<Vec<_>>(),
    })
}

fn load_model(path: &Path) -> Result<NpEnsemble, Error> {
    NpEnsemble::from_json(&fs::read_to_string(path)?)
}

fn band_to_string(band: &NpRocBand, grid_size: usize) -> Result<String, Error> {
    let mut buf = Vec::new();
    write_band_csv(band, grid_size, &mut buf)?;
    Ok(String::from_utf8(buf).expect("band CSV is ASCII"))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Minsize { alpha, delta } => {
            let n_min = min_class0_size(alpha, delta)?;
            let achieved = violation_rate(n_min, n_min, alpha)?;
            println!(
                "{}",
                json!({ "alpha": alpha, "delta": delta, "n_min": n_min,
                        "violation_at_n_min": achieved })
            );
        }
        Command::Generate {
            model,
            n,
            seed,
            scale_convention,
            out,
        } => {
            let data = match model {
                DataModel::Sim1 => simulate(&GaussianSpec::sim1(), n, seed)?,
                DataModel::Sim2 => {
                    simulate(&GaussianSpec::sim2(scale_convention.into()), n, seed)?
                }
                DataModel::S2Lr => simulate_s2(S2Model::LrModel, n, seed)?,
                DataModel::S2Lda => simulate_s2(S2Model::LdaModel, n, seed)?,
            };
            let mut buf = Vec::new();
            save_csv(&data, "label", &mut buf)?;
            write_output(out.as_deref(), &String::from_utf8(buf).expect("CSV is ASCII"))?;
        }
        Command::Fit {
            data,
            scores,
            base,
            feature,
            alpha,
            delta,
            splits,
            split_fraction,
            seed,
            out_model,
        } => {
            let ensemble = match (&data, &scores) {
                (None, Some(path)) => {
                    fit_external(path, alpha, delta, splits, seed, split_fraction)?
                }
                (Some(args), None) => {
                    let train = args.load()?;
                    let learner = base.learner(feature);
                    let plan = SplitPlan {
                        splits,
                        calibration_fraction: split_fraction,
                        seed,
                    };
                    fit_np(&train, learner.as_ref(), alpha, delta, &plan)?
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "provide exactly one of --data or --scores".into(),
                    ))
                }
            };
            fs::write(&out_model, ensemble.to_json()?)?;
            println!("{:#}", fit_report(&ensemble));
        }
        Command::Predict {
            model,
            data,
            label_col,
            out,
        } => {
            let ensemble = load_model(&model)?;
            let rows = load_features_maybe_labeled(&data, &label_col)?;
            let mut text = String::from("prediction\n");
            for row in &rows {
                text.push_str(&format!("{}\n", ensemble.predict(row)?));
            }
            write_output(out.as_deref(), &text)?;
        }
        Command::Evaluate { model, data } => {
            let ensemble = load_model(&model)?;
            let test = data.load()?;
            let report = evaluate_errors(|row| Ok(ensemble.predict(row)? == 1), &test)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Band {
            data,
            base,
            feature,
            delta,
            splits,
            split_fraction,
            seed,
            grid_size,
            out,
        } => {
            let train = data.load()?;
            let learner = base.learner(feature);
            let plan = SplitPlan {
                splits,
                calibration_fraction: split_fraction,
                seed,
            };
            let band = fit_band(&train, learner.as_ref(), delta, &plan, grid_size)?;
            write_output(out.as_deref(), &band_to_string(&band, grid_size)?)?;
        }
        Command::Compare {
            first,
            second,
            grid_size,
            out,
        } => {
            let a = read_band_csv(BufReader::new(fs::File::open(&first)?))?;
            let b = read_band_csv(BufReader::new(fs::File::open(&second)?))?;
            let report = compare_bands(&a, &b, grid_size)?;
            for &(lo, hi) in &report.intervals_first_wins {
                eprintln!("first dominates on alpha in [{lo:.6}, {hi:.6}]");
            }
            for &(lo, hi) in &report.intervals_second_wins {
                eprintln!("second dominates on alpha in [{lo:.6}, {hi:.6}]");
            }
            if report.intervals_first_wins.is_empty() && report.intervals_second_wins.is_empty() {
                eprintln!("no dominance region on the grid");
            }
            let mut buf = Vec::new();
            write_dominance_csv(&report, &mut buf)?;
            write_output(out.as_deref(), &String::from_utf8(buf).expect("CSV is ASCII"))?;
        }
        Command::ChooseAlpha { band, max_type2 } => {
            let band = read_band_csv(BufReader::new(fs::File::open(&band)?))?;
            let chosen = choose_alpha(&band, max_type2)?;
            println!(
                "{}",
                json!({ "max_type2": max_type2, "alpha": chosen })
            );
        }
        Command::Simulate { study } => match study {
            Study::Sim1 {
                replicates,
                n,
                alpha,
                delta,
                seed,
            } => {
                let report = run_sim1(replicates, n, alpha, delta, seed)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Study::Sim2 {
                n,
                splits,
                delta,
                seed,
                grid_size,
                scale_convention,
                max_type2,
                out_dir,
            } => {
                let report = run_sim2(
                    n,
                    splits,
                    delta,
                    seed,
                    grid_size,
                    scale_convention.into(),
                    max_type2,
                )?;
                if let Some(dir) = &out_dir {
                    fs::create_dir_all(dir)?;
                    fs::write(
                        dir.join("band_first.csv"),
                        band_to_string(&report.band_first, grid_size)?,
                    )?;
                    fs::write(
                        dir.join("band_second.csv"),
                        band_to_string(&report.band_second, grid_size)?,
                    )?;
                    let mut buf = Vec::new();
                    write_dominance_csv(&report.dominance, &mut buf)?;
                    fs::write(
                        dir.join("dominance.csv"),
                        String::from_utf8(buf).expect("CSV is ASCII"),
                    )?;
                }
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Study::S1 {
                replicates,
                n,
                alpha,
                delta,
                seed,
            } => {
                let report = run_s1(replicates, n, alpha, delta, seed)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Study::S2 {
                replicates,
                n,
                alpha,
                delta,
                splits,
                seed,
                test_n,
            } => {
                let report = run_s2(replicates, n, alpha, delta, &splits, seed, test_n)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
        },
    }
    Ok(())
}

/// Load a feature CSV for prediction; a label column, if present, is
/// dropped rather than required.
fn load_features_maybe_labeled(path: &Path, label_col: &str) -> Result<Vec<Vec<f64>>, Error> {
    match load_csv(path, label_col) {
        Ok(data) => Ok(data.features),
        Err(_) => {
            // no usable label column: read every column as a feature by
            // synthesizing a constant label
            let text = fs::read_to_string(path)?;
            let mut lines = text.lines();
            let header = lines
                .next()
                .ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
            let d = header.split(',').count();
            let mut rows = Vec::new();
            for (i, line) in lines.enumerate() {
                if line.is_empty() {
                    continue;
                }
                let row: Vec<f64> = line
                    .split(',')
                    .enumerate()
                    .map(|(j, cell)| {
                        cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                            row: i + 1,
                            column: format!("{j}"),
                            message: e.to_string(),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                if row.len() != d {
                    return Err(Error::Parse {
                        row: i + 1,
                        column: String::new(),
                        message: format!("expected {d} cells, found {}", row.len()),
                    });
                }
                rows.push(row);
            }
            Ok(rows)
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InsufficientSample { .. } => 3,
        Error::Io(_) | Error::Csv(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
