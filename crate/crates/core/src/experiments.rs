//! Visibility sweeps, two-parameter slice grids, critical-visibility
//! bisection and the EJM cardinality table, with CSV output.
//!
//! Every point of a sweep or grid gets its own master seed derived from the
//! caller's seed and the point index, so output is reproducible and does not
//! depend on scheduling. Records always come back in input order.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::json::fmt_f64;
use crate::model::LocalModel;
use crate::optimizer::{fit_with_warm_start, point_seed, SolverSettings, EJM_RMSE_THRESHOLD};
use crate::targets::{SliceFamily, VisibilityFamily};
use crate::topology::NetworkTopology;

/// Points per axis of the dense slice preset (about 420 points per unit
/// area on `[−1, 1]²`).
pub const DENSE_GRID_POINTS: usize = 41;

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                if k + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Axis values of the dense `[−1, 1]` slice preset.
pub fn dense_grid_axis() -> Vec<f64> {
    linspace(-1.0, 1.0, DENSE_GRID_POINTS)
}

#[derive(Debug, Clone)]
pub struct SweepRecord {
    /// `v` for visibility sweeps, the first slice coordinate for grids.
    pub x: f64,
    /// Second slice coordinate; `None` for visibility sweeps.
    pub y: Option<f64>,
    pub cardinalities: Vec<usize>,
    /// NaN for skipped points.
    pub best_rmse: f64,
    pub best_cost: f64,
    pub success: bool,
    /// The family has negative entries at this point; no fit was run.
    pub skipped: bool,
    pub restarts: usize,
    pub seed: u64,
    pub wall_ms: u64,
    pub model: Option<LocalModel>,
}

impl SweepRecord {
    fn skipped(x: f64, y: Option<f64>, cards: &[usize], seed: u64) -> Self {
        Self {
            x,
            y,
            cardinalities: cards.to_vec(),
            best_rmse: f64::NAN,
            best_cost: f64::NAN,
            success: false,
            skipped: true,
            restarts: 0,
            seed,
            wall_ms: 0,
            model: None,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_point(
    target: &crate::Behaviour,
    x: f64,
    y: Option<f64>,
    topology: &NetworkTopology,
    cards: &[usize],
    settings: &SolverSettings,
    seed: u64,
    warm: Option<&LocalModel>,
) -> Result<SweepRecord> {
    let settings = SolverSettings {
        master_seed: seed,
        ..settings.clone()
    };
    let start = Instant::now();
    let r = fit_with_warm_start(target, topology, cards, &settings, warm)?;
    Ok(SweepRecord {
        x,
        y,
        cardinalities: cards.to_vec(),
        best_rmse: r.best_rmse,
        best_cost: r.best_cost,
        success: r.success,
        skipped: false,
        restarts: r.per_restart.len(),
        seed,
        wall_ms: start.elapsed().as_millis() as u64,
        model: Some(r.best_model),
    })
}

/// One independent fit per visibility, in input order.
pub fn visibility_sweep(
    family: VisibilityFamily,
    v_values: &[f64],
    topology: &NetworkTopology,
    cardinalities: &[usize],
    settings: &SolverSettings,
) -> Result<Vec<SweepRecord>> {
    settings.validate()?;
    v_values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let target = family.at(v)?;
            let seed = point_seed(settings.master_seed, i);
            fit_point(&target, v, None, topology, cardinalities, settings, seed, None)
        })
        .collect()
}

/// As [`visibility_sweep`], but run sequentially with restart 0 of each
/// point started from the previous point's best model.
pub fn visibility_sweep_warm(
    family: VisibilityFamily,
    v_values: &[f64],
    topology: &NetworkTopology,
    cardinalities: &[usize],
    settings: &SolverSettings,
) -> Result<Vec<SweepRecord>> {
    settings.validate()?;
    let mut out: Vec<SweepRecord> = Vec::with_capacity(v_values.len());
    for (i, &v) in v_values.iter().enumerate() {
        let target = family.at(v)?;
        let seed = point_seed(settings.master_seed, i);
        let warm = out.last().and_then(|r| r.model.as_ref());
        let rec = fit_point(&target, v, None, topology, cardinalities, settings, seed, warm)?;
        out.push(rec);
    }
    Ok(out)
}

/// One fit per `(x, y)` pair, `x` outer. Points where the family has
/// negative entries are recorded as skipped.
pub fn grid_sweep(
    family: SliceFamily,
    x_values: &[f64],
    y_values: &[f64],
    topology: &NetworkTopology,
    cardinalities: &[usize],
    settings: &SolverSettings,
) -> Result<Vec<SweepRecord>> {
    settings.validate()?;
    let points: Vec<(f64, f64)> = x_values
        .iter()
        .flat_map(|&x| y_values.iter().map(move |&y| (x, y)))
        .collect();
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let seed = point_seed(settings.master_seed, i);
            match family.at(x, y) {
                Ok(target) => fit_point(&target, x, Some(y), topology, cardinalities, settings, seed, None),
                Err(Error::InvalidFamilyPoint { .. }) => Ok(SweepRecord::skipped(x, Some(y), cardinalities, seed)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Largest visibility fit below `rmse_threshold`, by bisection on fit
/// success between `v_lo` (must succeed) and `v_hi` (must fail).
///
/// Every predicate evaluation uses the same master seed. Restarts stop at
/// the first successful batch, which leaves the predicate unchanged.
#[allow(clippy::too_many_arguments)]
pub fn critical_visibility(
    family: VisibilityFamily,
    topology: &NetworkTopology,
    cardinalities: &[usize],
    rmse_threshold: f64,
    v_lo: f64,
    v_hi: f64,
    v_tol: f64,
    settings: &SolverSettings,
) -> Result<f64> {
    if !(v_tol > 0.0) {
        return Err(Error::Domain(format!("v_tol must be positive, got {v_tol}")));
    }
    if !(v_lo < v_hi) {
        return Err(Error::Domain(format!("need v_lo < v_hi, got [{v_lo}, {v_hi}]")));
    }
    let settings = SolverSettings {
        success_rmse: rmse_threshold,
        stop_on_success: true,
        ..settings.clone()
    };
    settings.validate()?;
    let succeeds = |v: f64| -> Result<bool> {
        let target = family.at(v)?;
        Ok(fit_with_warm_start(&target, topology, cardinalities, &settings, None)?.success)
    };
    if !succeeds(v_lo)? {
        return Err(Error::Bracket(format!(
            "{family} fit fails at the lower end v = {v_lo}"
        )));
    }
    if succeeds(v_hi)? {
        return Err(Error::Bracket(format!(
            "{family} fit succeeds at the upper end v = {v_hi}"
        )));
    }
    let (mut lo, mut hi) = (v_lo, v_hi);
    while hi - lo > v_tol {
        let mid = 0.5 * (lo + hi);
        if succeeds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EjmCell {
    /// `(c_α, c_β, c_γ)` with `c_α ≥ c_β ≥ c_γ`.
    pub cardinalities: [usize; 3],
    pub v_critical: f64,
    pub threshold: f64,
    pub v_tol: f64,
}

/// Ordered triples `c_max ≥ c_α ≥ c_β ≥ c_γ ≥ 2`, smallest first.
pub fn ordered_triples(c_max: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for g in 2..=c_max {
        for b in g..=c_max {
            for a in b..=c_max {
                out.push([a, b, g]);
            }
        }
    }
    out
}

/// Critical EJM visibility for each listed cardinality triple, bisecting
/// on `[0, 1]`.
pub fn ejm_cells(
    triples: &[[usize; 3]],
    threshold: f64,
    v_tol: f64,
    settings: &SolverSettings,
) -> Result<Vec<EjmCell>> {
    let topology = VisibilityFamily::Ejm.topology();
    triples
        .iter()
        .map(|&c| {
            let v = critical_visibility(
                VisibilityFamily::Ejm,
                &topology,
                &c,
                threshold,
                0.0,
                1.0,
                v_tol,
                settings,
            )?;
            Ok(EjmCell {
                cardinalities: c,
                v_critical: v,
                threshold,
                v_tol,
            })
        })
        .collect()
}

/// Full table over ordered triples up to `c_max`, at the default EJM
/// threshold. Permuted triples are equivalent by party symmetry.
pub fn ejm_cardinality_table(c_max: usize, v_tol: f64, settings: &SolverSettings) -> Result<Vec<EjmCell>> {
    if c_max < 2 {
        return Err(Error::Domain(format!("c_max must be at least 2, got {c_max}")));
    }
    ejm_cells(&ordered_triples(c_max), EJM_RMSE_THRESHOLD, v_tol, settings)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(v, rmse)` of the failed, non-skipped
/// records with `v_min ≤ v ≤ v_max`. Needs at least three such records.
pub fn slope_fit(records: &[SweepRecord], v_min: f64, v_max: f64) -> Result<LineFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| !r.skipped && !r.success && (v_min..=v_max).contains(&r.x))
        .map(|r| (r.x, r.best_rmse))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InputData(format!(
            "slope fit needs at least 3 failed records in [{v_min}, {v_max}], found {}",
            pts.len()
        )));
    }
    Ok(least_squares_line(&pts))
}

fn least_squares_line(pts: &[(f64, f64)]) -> LineFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    // a perfectly flat response is explained exactly
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

/// Columns `v,rmse,cost,success,restarts,seed,wall_ms`.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["v", "rmse", "cost", "success", "restarts", "seed", "wall_ms"])?;
    for r in records {
        out.write_record([
            fmt_f64(r.x),
            fmt_f64(r.best_rmse),
            fmt_f64(r.best_cost),
            r.success.to_string(),
            r.restarts.to_string(),
            r.seed.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `x,y,rmse,cost,success,skipped,seed,wall_ms`.
pub fn write_grid_csv<W: Write>(records: &[SweepRecord], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["x", "y", "rmse", "cost", "success", "skipped", "seed", "wall_ms"])?;
    for r in records {
        out.write_record([
            fmt_f64(r.x),
            fmt_f64(r.y.unwrap_or(f64::NAN)),
            fmt_f64(r.best_rmse),
            fmt_f64(r.best_cost),
            r.success.to_string(),
            r.skipped.to_string(),
            r.seed.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `c_alpha,c_beta,c_gamma,v_critical,threshold,v_tol`.
pub fn write_ejm_csv<W: Write>(cells: &[EjmCell], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["c_alpha", "c_beta", "c_gamma", "v_critical", "threshold", "v_tol"])?;
    for c in cells {
        let [a, b, g] = c.cardinalities;
        out.write_record([
            a.to_string(),
            b.to_string(),
            g.to_string(),
            fmt_f64(c.v_critical),
            fmt_f64(c.threshold),
            fmt_f64(c.v_tol),
        ])?;
    }
    out.flush()?;
    Ok(())
}
