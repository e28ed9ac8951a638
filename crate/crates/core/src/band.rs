//! NP-ROC band construction and manipulation.
//!
//! A band is built from one data split: for each order k of the left-out
//! class 0 scores we compute a high-probability type I error bound by
//! inverting the binomial tail in alpha, and high-probability bounds on the
//! conditional type II error by locating the threshold among the left-out
//! class 1 scores and inverting the tail in beta. The n vertical segments are
//! interpolated into step curves: right-continuous for the upper curve,
//! left-continuous for the lower curve. Bands from multiple splits are
//! averaged on a uniform alpha grid.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::threshold::{binomial_tail, violation_rate};

/// Absolute bisection tolerance for all three tail inversions.
pub const BISECTION_TOL: f64 = 1e-10;

/// Default grid resolution for band averaging, comparison, and export.
pub const DEFAULT_GRID_SIZE: usize = 1000;

/// Where the k-th class 0 order statistic falls relative to the left-out
/// class 1 scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// T^1_(1) <= t <= T^1_(m): both ranks defined.
    Interior,
    /// t above every class 1 score: beta_upper forced to 1.
    AboveAllClass1,
    /// t below every class 1 score: beta_lower forced to 0.
    BelowAllClass1,
}

/// One vertical segment of an NP-ROC band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSegment {
    pub k: usize,
    pub alpha_bound: f64,
    pub beta_lower: f64,
    pub beta_upper: f64,
    pub scenario: Scenario,
}

/// Band curves evaluated on a uniform alpha grid (the representation of
/// averaged multi-split bands).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandGrid {
    pub alphas: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// An NP-ROC band: per-order segments from one split, or a grid-averaged
/// form over multiple splits. Imported grid bands carry n = m = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpRocBand {
    pub segments: Vec<BandSegment>,
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub grid: Option<BandGrid>,
}

/// Ranks of a threshold among sorted class 1 scores, per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankBounds {
    pub r_lower: Option<usize>,
    pub r_upper: Option<usize>,
    pub scenario: Scenario,
}

/// Disjoint alpha intervals where one band's lower curve clears the other
/// band's upper curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub intervals_first_wins: Vec<(f64, f64)>,
    pub intervals_second_wins: Vec<(f64, f64)>,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie strictly between 0 and 1 (got {delta})"
        )));
    }
    Ok(())
}

/// The (1 - delta) type I error bound alpha(phi_k):
/// inf{alpha in [0,1]: P[Bin(n, 1-alpha) >= k] <= delta}. The tail is
/// strictly decreasing in alpha, so plain bisection applies.
pub fn alpha_upper_bound(n: usize, k: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!(
            "order k = {k} out of range {{1..{n}}}"
        )));
    }
    let mut lo = 0.0_f64; // tail = 1 > delta
    let mut hi = 1.0_f64; // tail = 0 <= delta
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if violation_rate(n, k, mid)? <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// The (1 - delta) lower bound on the conditional type II error:
/// sup{beta in [0,1]: P[Bin(m, beta) >= r_lower] <= delta}.
pub fn beta_lower_bound(m: usize, r_lower: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if r_lower < 1 || r_lower > m {
        return Err(Error::InvalidArgument(format!(
            "rank r_lower = {r_lower} out of range {{1..{m}}}"
        )));
    }
    let mut lo = 0.0_f64; // tail = 0 <= delta
    let mut hi = 1.0_f64; // tail = 1 > delta
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if binomial_tail(m, r_lower, mid)? <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// The (1 - delta) upper bound on the conditional type II error:
/// inf{beta in [0,1]: P[Bin(m, beta) >= r_upper] >= 1 - delta}.
pub fn beta_upper_bound(m: usize, r_upper: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if r_upper < 1 || r_upper > m {
        return Err(Error::InvalidArgument(format!(
            "rank r_upper = {r_upper} out of range {{1..{m}}}"
        )));
    }
    let mut lo = 0.0_f64; // tail = 0 < 1 - delta
    let mut hi = 1.0_f64; // tail = 1 >= 1 - delta
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if binomial_tail(m, r_upper, mid)? >= 1.0 - delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Locate a threshold among ascending-sorted class 1 scores. Ties follow the
/// rank definitions literally: r_lower is the largest rank with score <= t,
/// r_upper the smallest rank with score >= t.
pub fn rank_bounds(class1_scores_sorted: &[f64], t: f64) -> Result<RankBounds> {
    let m = class1_scores_sorted.len();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "class 1 score sample must be nonempty".into(),
        ));
    }
    if t > class1_scores_sorted[m - 1] {
        return Ok(RankBounds {
            r_lower: Some(m),
            r_upper: None,
            scenario: Scenario::AboveAllClass1,
        });
    }
    if t < class1_scores_sorted[0] {
        return Ok(RankBounds {
            r_lower: None,
            r_upper: Some(1),
            scenario: Scenario::BelowAllClass1,
        });
    }
    let le = class1_scores_sorted.partition_point(|&x| x <= t);
    let lt = class1_scores_sorted.partition_point(|&x| x < t);
    Ok(RankBounds {
        r_lower: Some(le),
        r_upper: Some(lt + 1),
        scenario: Scenario::Interior,
    })
}

/// Build a single-split NP-ROC band from left-out scores of both classes.
/// The scores must come from data disjoint from what trained the scorer.
pub fn band_from_split(
    class0_leftout_scores: &[f64],
    class1_leftout_scores: &[f64],
    delta: f64,
) -> Result<NpRocBand> {
    check_delta(delta)?;
    if class0_leftout_scores.is_empty() || class1_leftout_scores.is_empty() {
        return Err(Error::InvalidArgument(
            "both left-out score samples must be nonempty".into(),
        ));
    }
    if class0_leftout_scores
        .iter()
        .chain(class1_leftout_scores)
        .any(|s| !s.is_finite())
    {
        return Err(Error::InvalidArgument(
            "scores must be finite (found NaN or infinity)".into(),
        ));
    }
    let mut c0 = class0_leftout_scores.to_vec();
    c0.sort_by(f64::total_cmp);
    let mut c1 = class1_leftout_scores.to_vec();
    c1.sort_by(f64::total_cmp);
    let (n, m) = (c0.len(), c1.len());

    let mut segments = Vec::with_capacity(n);
    for k in 1..=n {
        let t = c0[k - 1];
        let alpha_bound = alpha_upper_bound(n, k, delta)?;
        let ranks = rank_bounds(&c1, t)?;
        let (beta_lower, beta_upper) = match ranks.scenario {
            Scenario::Interior => (
                beta_lower_bound(m, ranks.r_lower.unwrap(), delta)?,
                beta_upper_bound(m, ranks.r_upper.unwrap(), delta)?,
            ),
            Scenario::AboveAllClass1 => {
                (beta_lower_bound(m, ranks.r_lower.unwrap(), delta)?, 1.0)
            }
            Scenario::BelowAllClass1 => {
                (0.0, beta_upper_bound(m, ranks.r_upper.unwrap(), delta)?)
            }
        };
        segments.push(BandSegment {
            k,
            alpha_bound,
            beta_lower,
            beta_upper,
            scenario: ranks.scenario,
        });
    }
    Ok(NpRocBand {
        segments,
        n,
        m,
        delta,
        grid: None,
    })
}

impl NpRocBand {
    /// Step-function evaluation of (lower, upper) at alpha.
    ///
    /// Segment form: at a knot the segment's own (1 - beta_upper,
    /// 1 - beta_lower) applies; between knots alpha(phi_k) < alpha <
    /// alpha(phi_{k-1}) the lower curve takes 1 - beta_upper(phi_{k-1}) and
    /// the upper curve 1 - beta_lower(phi_k). Left of all knots the lower
    /// curve is 0; right of all knots the upper curve is 1.
    ///
    /// When many class 1 scores fall between two adjacent thresholds the
    /// raw step curves can locally cross between knots; the lower curve is
    /// clamped at the upper curve there (clamping down keeps it a valid
    /// conservative bound), so the band is an interval at every alpha.
    pub fn evaluate(&self, alpha: f64) -> (f64, f64) {
        if let Some(grid) = &self.grid {
            return grid.evaluate(alpha);
        }
        let segs = &self.segments;
        if segs.is_empty() {
            return (0.0, 1.0);
        }
        // alpha_bound is strictly decreasing in index; find the first
        // segment with alpha_bound <= alpha.
        let idx = segs.partition_point(|s| s.alpha_bound > alpha);
        if idx == segs.len() {
            // Left of every knot: no classifier certifies so small an alpha.
            return (0.0, 1.0 - segs[segs.len() - 1].beta_lower);
        }
        let seg = &segs[idx];
        if seg.alpha_bound == alpha {
            return (1.0 - seg.beta_upper, 1.0 - seg.beta_lower);
        }
        if idx == 0 {
            // Right of every knot.
            return (1.0 - segs[0].beta_upper, 1.0);
        }
        let up = 1.0 - seg.beta_lower;
        ((1.0 - segs[idx - 1].beta_upper).min(up), up)
    }

    /// Evaluate both curves on a uniform alpha grid over [0, 1].
    pub fn to_grid(&self, grid_size: usize) -> Result<BandGrid> {
        if grid_size < 2 {
            return Err(Error::InvalidArgument("grid_size must be >= 2".into()));
        }
        let mut alphas = Vec::with_capacity(grid_size);
        let mut lower = Vec::with_capacity(grid_size);
        let mut upper = Vec::with_capacity(grid_size);
        for i in 0..grid_size {
            let a = i as f64 / (grid_size - 1) as f64;
            let (lo, up) = self.evaluate(a);
            alphas.push(a);
            lower.push(lo);
            upper.push(up);
        }
        Ok(BandGrid {
            alphas,
            lower,
            upper,
        })
    }
}

impl BandGrid {
    /// Step lookup between grid points, conservative in both directions:
    /// lower from the grid point at or left of alpha, upper from the grid
    /// point at or right.
    pub fn evaluate(&self, alpha: f64) -> (f64, f64) {
        let g = self.alphas.len();
        let pos = (alpha.clamp(0.0, 1.0)) * (g - 1) as f64;
        let i0 = pos.floor() as usize;
        let i1 = (pos.ceil() as usize).min(g - 1);
        (self.lower[i0], self.upper[i1])
    }
}

/// Pointwise arithmetic mean of bands on a uniform alpha grid.
pub fn average_bands(bands: &[NpRocBand], grid_size: usize) -> Result<NpRocBand> {
    if bands.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one band to average".into(),
        ));
    }
    let grids: Vec<BandGrid> = bands
        .iter()
        .map(|b| b.to_grid(grid_size))
        .collect::<Result<_>>()?;
    let inv_m = 1.0 / bands.len() as f64;
    let mut lower = vec![0.0; grid_size];
    let mut upper = vec![0.0; grid_size];
    for grid in &grids {
        for i in 0..grid_size {
            lower[i] += grid.lower[i] * inv_m;
            upper[i] += grid.upper[i] * inv_m;
        }
    }
    Ok(NpRocBand {
        segments: Vec::new(),
        n: bands[0].n,
        m: bands[0].m,
        delta: bands[0].delta,
        grid: Some(BandGrid {
            alphas: (0..grid_size)
                .map(|i| i as f64 / (grid_size - 1) as f64)
                .collect(),
            lower,
            upper,
        }),
    })
}

/// Per-grid-point dominance: one band wins where its lower curve strictly
/// exceeds the other band's upper curve. Consecutive winning grid points are
/// merged into intervals reported at grid resolution.
pub fn compare_bands(a: &NpRocBand, b: &NpRocBand, grid_size: usize) -> Result<DominanceReport> {
    let ga = a.to_grid(grid_size)?;
    let gb = b.to_grid(grid_size)?;
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut run_first: Option<(f64, f64)> = None;
    let mut run_second: Option<(f64, f64)> = None;
    for i in 0..grid_size {
        let alpha = ga.alphas[i];
        let a_wins = ga.lower[i] > gb.upper[i];
        let b_wins = gb.lower[i] > ga.upper[i];
        match (&mut run_first, a_wins) {
            (Some(run), true) => run.1 = alpha,
            (Some(run), false) => {
                first.push(*run);
                run_first = None;
            }
            (None, true) => run_first = Some((alpha, alpha)),
            (None, false) => {}
        }
        match (&mut run_second, b_wins) {
            (Some(run), true) => run.1 = alpha,
            (Some(run), false) => {
                second.push(*run);
                run_second = None;
            }
            (None, true) => run_second = Some((alpha, alpha)),
            (None, false) => {}
        }
    }
    if let Some(run) = run_first {
        first.push(run);
    }
    if let Some(run) = run_second {
        second.push(run);
    }
    Ok(DominanceReport {
        intervals_first_wins: first,
        intervals_second_wins: second,
    })
}

/// Smallest grid alpha whose band lower curve certifies a type II error no
/// larger than `max_type2`, or None if the target is unattainable.
pub fn choose_alpha(band: &NpRocBand, max_type2: f64) -> Result<Option<f64>> {
    if !(0.0..=1.0).contains(&max_type2) {
        return Err(Error::InvalidArgument(format!(
            "max_type2 must lie in [0, 1] (got {max_type2})"
        )));
    }
    let grid = match &band.grid {
        Some(g) => g.clone(),
        None => band.to_grid(DEFAULT_GRID_SIZE)?,
    };
    for i in 0..grid.alphas.len() {
        if 1.0 - grid.lower[i] <= max_type2 {
            return Ok(Some(grid.alphas[i]));
        }
    }
    Ok(None)
}

/// Write a band to CSV with header `alpha,lower,upper`, one row per grid
/// point, 10 significant digits.
pub fn write_band_csv<W: Write>(band: &NpRocBand, grid_size: usize, out: &mut W) -> Result<()> {
    let grid = match &band.grid {
        Some(g) if g.alphas.len() == grid_size => g.clone(),
        _ => band.to_grid(grid_size)?,
    };
    writeln!(out, "alpha,lower,upper")?;
    for i in 0..grid.alphas.len() {
        writeln!(
            out,
            "{:.9e},{:.9e},{:.9e}",
            grid.alphas[i], grid.lower[i], grid.upper[i]
        )?;
    }
    Ok(())
}

/// Read a grid-form band from `alpha,lower,upper` CSV.
pub fn read_band_csv<R: BufRead>(input: R) -> Result<NpRocBand> {
    let mut alphas = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (row, line) in input.lines().enumerate() {
        let line = line?;
        if row == 0 {
            if line.trim() != "alpha,lower,upper" {
                return Err(Error::Parse {
                    row: 1,
                    column: "header".into(),
                    message: format!("expected header 'alpha,lower,upper', got '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                row: row + 1,
                column: "line".into(),
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, col: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                row: row + 1,
                column: col.into(),
                message: e.to_string(),
            })
        };
        alphas.push(parse(fields[0], "alpha")?);
        lower.push(parse(fields[1], "lower")?);
        upper.push(parse(fields[2], "upper")?);
    }
    if alphas.len() < 2 {
        return Err(Error::InvalidArgument(
            "band CSV must contain at least 2 grid rows".into(),
        ));
    }
    Ok(NpRocBand {
        segments: Vec::new(),
        n: 0,
        m: 0,
        delta: 0.0,
        grid: Some(BandGrid {
            alphas,
            lower,
            upper,
        }),
    })
}

/// Write a dominance report as `alpha_lo,alpha_hi,winner` CSV.
pub fn write_dominance_csv<W: Write>(report: &DominanceReport, out: &mut W) -> Result<()> {
    writeln!(out, "alpha_lo,alpha_hi,winner")?;
    let mut rows: Vec<(f64, f64, &str)> = report
        .intervals_first_wins
        .iter()
        .map(|&(lo, hi)| (lo, hi, "first"))
        .chain(
            report
                .intervals_second_wins
                .iter()
                .map(|&(lo, hi)| (lo, hi, "second")),
        )
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (lo, hi, winner) in rows {
        writeln!(out, "{lo:.9e},{hi:.9e},{winner}")?;
    }
    Ok(())
}
