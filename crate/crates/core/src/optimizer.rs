//! Least-squares fitting of a local model to a target behaviour, with
//! deterministic multi-restart.
//!
//! Each restart draws its starting point from its own RNG stream, seeded
//! from `(master_seed, restart index)`, so results do not depend on how
//! restarts are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::behaviour::Behaviour;
use crate::error::{Error, Result};
use crate::model::LocalModel;
use crate::params::{ParameterLayout, ParameterVector};
use crate::solver::{self, projected_gradient_norm};
use crate::topology::NetworkTopology;

pub use crate::solver::Termination;

/// Default success threshold for binary-output boundary studies.
pub const BOUNDARY_RMSE_THRESHOLD: f64 = 1e-6;
/// Default success threshold for the EJM cardinality tables.
pub const EJM_RMSE_THRESHOLD: f64 = 1e-4;

/// Restarts run in fixed-size batches when stopping at the first success,
/// so the set of executed restarts does not depend on the thread count.
const RESTART_BATCH: usize = 8;

/// Weight of the fresh random point when a hop perturbs the incumbent.
pub const HOP_MIX: f64 = 0.5;
/// Hopping ends after this many consecutive rounds without a relative
/// cost decrease of at least [`HOP_MIN_GAIN`].
pub const HOP_PATIENCE: usize = 20;
pub const HOP_MIN_GAIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub restarts: usize,
    pub max_iterations: usize,
    pub gtol: f64,
    /// A fit succeeds when its best RMSE is at or below this value.
    pub success_rmse: f64,
    pub master_seed: u64,
    /// Upper bound on perturb-and-resolve rounds after each restart's first
    /// local solve. A round replaces the incumbent only if it lowers the
    /// cost; rounds stop once the incumbent meets the success threshold or
    /// stops improving.
    pub hops: usize,
    pub feasibility_tol: f64,
    /// Stop launching restarts once one succeeds. The success flag is the
    /// same as with the full budget; the recorded best cost may differ.
    pub stop_on_success: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iterations: 2000,
            gtol: 1e-10,
            success_rmse: BOUNDARY_RMSE_THRESHOLD,
            master_seed: 0,
            hops: 100,
            feasibility_tol: crate::STRUCTURAL_TOL,
            stop_on_success: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Domain("restarts must be at least 1".into()));
        }
        for (name, v) in [
            ("gtol", self.gtol),
            ("success threshold", self.success_rmse),
            ("feasibility tolerance", self.feasibility_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSolve {
    pub vector: ParameterVector,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Costs of the accepted iterates, starting point first.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartRecord {
    pub seed: u64,
    pub cost: f64,
    pub iterations: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best_model: LocalModel,
    pub best_cost: f64,
    pub best_rmse: f64,
    pub best_restart: usize,
    pub per_restart: Vec<RestartRecord>,
    pub success: bool,
}

#[derive(Serialize)]
struct FitResultJson<'a> {
    success: bool,
    best_rmse: f64,
    best_cost: f64,
    model: &'a LocalModel,
    restarts: &'a [RestartRecord],
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(&FitResultJson {
            success: self.success,
            best_rmse: self.best_rmse,
            best_cost: self.best_cost,
            model: &self.best_model,
            restarts: &self.per_restart,
        })
    }
}

/// `√(cost / n_entries)`.
pub fn rmse_of(cost: f64, n_entries: usize) -> f64 {
    (cost / n_entries as f64).sqrt()
}

fn check_target(layout: &ParameterLayout, target: &Behaviour) -> Result<()> {
    let topo = layout.topology();
    if target.outputs() != topo.outputs() || target.inputs() != topo.inputs() {
        return Err(Error::Structural(format!(
            "target shape {:?}|{:?} does not match topology {:?}|{:?}",
            target.outputs(),
            target.inputs(),
            topo.outputs(),
            topo.inputs()
        )));
    }
    Ok(())
}

/// Sum of squared differences between the model at `vector` and `target`.
pub fn cost(vector: &[f64], layout: &ParameterLayout, target: &Behaviour) -> Result<f64> {
    check_target(layout, target)?;
    let theta = layout.full_from_stored(vector)?;
    let c = layout.contraction();
    let mut model = vec![0.0; c.n_entries()];
    c.behaviour_into(&theta, &mut model);
    Ok(model.iter().zip(target.data()).map(|(m, t)| (m - t) * (m - t)).sum())
}

/// Exact gradient of [`cost`] with respect to the stored coordinates.
pub fn cost_gradient(vector: &[f64], layout: &ParameterLayout, target: &Behaviour) -> Result<Vec<f64>> {
    check_target(layout, target)?;
    let theta = layout.full_from_stored(vector)?;
    let c = layout.contraction();
    let (nf, m) = (c.n_full(), c.n_entries());
    let mut model = vec![0.0; m];
    let mut jac = vec![0.0; m * nf];
    c.jacobian_into(&theta, &mut model, &mut jac);
    let mut full = vec![0.0; nf];
    for ((row, mv), t) in jac.chunks_exact(nf).zip(&model).zip(target.data()) {
        let r2 = 2.0 * (mv - t);
        for (g, j) in full.iter_mut().zip(row) {
            *g += r2 * j;
        }
    }
    Ok(layout.stored_gradient(&full))
}

/// Projected-gradient stationarity measure `‖P(x − ∇f) − x‖`.
pub fn projected_gradient(vector: &[f64], layout: &ParameterLayout, target: &Behaviour) -> Result<f64> {
    let g = cost_gradient(vector, layout, target)?;
    let theta = layout.full_from_stored(vector)?;
    // projected_gradient_norm takes the half gradient in full coordinates;
    // rebuild it from the stored one by putting zero on the implied entries
    let mut half = vec![0.0; layout.n_full()];
    for b in layout.blocks() {
        for (k, &i) in b.full[..b.stored_len()].iter().enumerate() {
            half[i] = 0.5 * g[b.stored_offset + k];
        }
    }
    Ok(projected_gradient_norm(layout, &theta, &half))
}

/// One local solve from a feasible starting point.
pub fn solve_single(
    start: &[f64],
    layout: &ParameterLayout,
    target: &Behaviour,
    settings: &SolverSettings,
) -> Result<SingleSolve> {
    check_target(layout, target)?;
    let theta0 = layout.full_from_stored(start)?;
    let out = solver::minimize(layout, target.data(), theta0, settings.max_iterations, settings.gtol);
    Ok(SingleSolve {
        vector: ParameterVector(layout.stored_from_full(&out.theta)),
        cost: out.cost,
        iterations: out.iterations,
        termination: out.termination,
        history: out.history,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the independent stream used by restart `index`.
pub fn restart_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(index as u64))
}

/// Seed for the `index`-th point of a sweep.
pub fn point_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master_seed).wrapping_add(index as u64))
}

/// Full-coordinate start with every block drawn uniformly from its simplex.
pub fn random_start(layout: &ParameterLayout, seed: u64) -> Vec<f64> {
    draw_point(layout, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn draw_point(layout: &ParameterLayout, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut theta = vec![0.0; layout.n_full()];
    for b in layout.blocks() {
        let mut sum = 0.0;
        for &i in &b.full {
            // unit exponential via inversion; 1 − u lies in (0, 1]
            let u: f64 = rng.random();
            let e = -(1.0 - u).ln();
            theta[i] = e;
            sum += e;
        }
        for &i in &b.full {
            theta[i] /= sum;
        }
    }
    theta
}

struct RestartOutcome {
    record: RestartRecord,
    theta: Vec<f64>,
}

fn run_restart(
    layout: &ParameterLayout,
    target: &Behaviour,
    settings: &SolverSettings,
    index: usize,
    warm: Option<&[f64]>,
) -> RestartOutcome {
    let seed = restart_seed(settings.master_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = draw_point(layout, &mut rng);
    let start = match warm {
        Some(theta) if index == 0 => theta.to_vec(),
        _ => start,
    };
    let solve = |x| solver::minimize(layout, target.data(), x, settings.max_iterations, settings.gtol);
    let mut best = solve(start);
    let mut iterations = best.iterations;
    let mut idle = 0;
    for _ in 0..settings.hops {
        if rmse_of(best.cost, target.len()) <= settings.success_rmse || best.cost.is_nan() || idle >= HOP_PATIENCE {
            break;
        }
        idle += 1;
        let noise = draw_point(layout, &mut rng);
        let trial: Vec<f64> = best
            .theta
            .iter()
            .zip(&noise)
            .map(|(x, n)| (1.0 - HOP_MIX) * x + HOP_MIX * n)
            .collect();
        let out = solve(trial);
        iterations += out.iterations;
        if out.cost < best.cost {
            if out.cost < best.cost * (1.0 - HOP_MIN_GAIN) {
                idle = 0;
            }
            best = out;
        }
    }
    RestartOutcome {
        record: RestartRecord {
            seed,
            cost: best.cost,
            iterations,
            reason: best.termination.as_str(),
        },
        theta: best.theta,
    }
}

/// Multi-restart fit of `target` with the given source cardinalities.
pub fn fit(
    target: &Behaviour,
    topology: &NetworkTopology,
    cardinalities: &[usize],
    settings: &SolverSettings,
) -> Result<FitResult> {
    fit_with_warm_start(target, topology, cardinalities, settings, None)
}

/// As [`fit`], with restart 0 started from `warm` instead of a random point.
pub fn fit_with_warm_start(
    target: &Behaviour,
    topology: &NetworkTopology,
    cardinalities: &[usize],
    settings: &SolverSettings,
    warm: Option<&LocalModel>,
) -> Result<FitResult> {
    settings.validate()?;
    let layout = ParameterLayout::new(topology, cardinalities)?;
    check_target(&layout, target)?;
    let warm_theta = warm.map(|m| layout.contraction().model_to_full(m)).transpose()?;
    let warm_ref = warm_theta.as_deref();
    let n_entries = target.len();

    let batch = if settings.stop_on_success {
        RESTART_BATCH
    } else {
        settings.restarts
    };
    let mut outcomes: Vec<RestartOutcome> = Vec::with_capacity(settings.restarts);
    let mut next = 0;
    while next < settings.restarts {
        let end = (next + batch).min(settings.restarts);
        let mut chunk: Vec<RestartOutcome> = (next..end)
            .into_par_iter()
            .map(|i| run_restart(&layout, target, settings, i, warm_ref))
            .collect();
        let hit = chunk
            .iter()
            .any(|o| rmse_of(o.record.cost, n_entries) <= settings.success_rmse);
        outcomes.append(&mut chunk);
        next = end;
        if settings.stop_on_success && hit {
            break;
        }
    }

    // lowest cost wins; NaN never wins; ties go to the lowest index
    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.record.cost.is_nan())
        .min_by(|(i, a), (j, b)| a.record.cost.total_cmp(&b.record.cost).then(i.cmp(j)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical("every restart ended with a non-finite cost".into()))?;
    let best_cost = outcomes[best].record.cost;
    let best_rmse = rmse_of(best_cost, n_entries);
    let best_model = layout.contraction().full_to_model(&outcomes[best].theta)?;
    Ok(FitResult {
        best_model,
        best_cost,
        best_rmse,
        best_restart: best,
        success: best_rmse <= settings.success_rmse,
        per_restart: outcomes.into_iter().map(|o| o.record).collect(),
    })
}
