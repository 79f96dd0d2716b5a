//! Projected Levenberg–Marquardt iteration on products of probability
//! simplices.
//!
//! The iterate is kept in full coordinates. At every step each block picks
//! its largest coordinate as pivot and moves the remaining free coordinates
//! against it, so steps stay on the affine hull `Σ p = 1`. A coordinate
//! sitting at zero is frozen while moving mass into it would raise the
//! cost. Trial points are projected back onto the simplex and accepted only
//! if the cost strictly decreases.

use nalgebra::{DMatrix, DVector};

use crate::contraction::Contraction;
use crate::params::{project_capped_simplex, project_simplex, ParameterLayout};

/// Coordinates at or below this value count as sitting on the bound.
const BOUND_EPS: f64 = 1e-14;
/// Costs at or below this value are treated as exact fits.
const EXACT_COST: f64 = 1e-32;
/// Window (accepted iterates) and relative decrease for the stall test.
const STALL_WINDOW: usize = 25;
const STALL_REL_DECREASE: f64 = 1e-8;
const MAX_DAMPING: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projected-gradient norm at or below the tolerance.
    GradientTolerance,
    /// No meaningful decrease over the stall window, or damping exhausted.
    Stalled,
    MaxIterations,
    /// Non-finite cost or gradient.
    NumericalFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientTolerance => "gtol",
            Termination::Stalled => "stalled",
            Termination::MaxIterations => "max_iterations",
            Termination::NumericalFailure => "numerical_failure",
        }
    }
}

pub(crate) struct Outcome {
    pub theta: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Cost of every accepted iterate, starting point first.
    pub history: Vec<f64>,
}

struct Workspace<'a> {
    contraction: &'a Contraction,
    target: &'a [f64],
    model: Vec<f64>,
    jac: Vec<f64>,
    resid: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(layout: &'a ParameterLayout, target: &'a [f64]) -> Self {
        let c = layout.contraction();
        Self {
            contraction: c,
            target,
            model: vec![0.0; c.n_entries()],
            jac: vec![0.0; c.n_entries() * c.n_full()],
            resid: vec![0.0; c.n_entries()],
        }
    }

    /// Residuals and Jacobian at `theta`; returns the cost.
    fn linearize(&mut self, theta: &[f64]) -> f64 {
        self.contraction.jacobian_into(theta, &mut self.model, &mut self.jac);
        for ((r, m), t) in self.resid.iter_mut().zip(&self.model).zip(self.target) {
            *r = m - t;
        }
        self.resid.iter().map(|r| r * r).sum()
    }

    fn cost_at(&mut self, theta: &[f64]) -> f64 {
        self.contraction.behaviour_into(theta, &mut self.model);
        self.model.iter().zip(self.target).map(|(m, t)| (m - t) * (m - t)).sum()
    }

    /// Half gradient Jᵀ r in full coordinates.
    fn half_gradient(&self) -> Vec<f64> {
        let nf = self.contraction.n_full();
        let mut g = vec![0.0; nf];
        for (row, r) in self.jac.chunks_exact(nf).zip(&self.resid) {
            for (gj, jj) in g.iter_mut().zip(row) {
                *gj += jj * r;
            }
        }
        g
    }
}

/// Norm of `P(x − ∇f) − x` in stored coordinates, with ∇f = 2 Jᵀ r.
pub(crate) fn projected_gradient_norm(layout: &ParameterLayout, theta: &[f64], half_grad: &[f64]) -> f64 {
    let full_grad: Vec<f64> = half_grad.iter().map(|g| 2.0 * g).collect();
    let g = layout.stored_gradient(&full_grad);
    let x = layout.stored_from_full(theta);
    let mut acc = 0.0;
    let mut buf = Vec::new();
    for b in layout.blocks() {
        let range = b.stored_range();
        buf.clear();
        buf.extend(x[range.clone()].iter().zip(&g[range.clone()]).map(|(x, g)| x - g));
        project_capped_simplex(&mut buf);
        acc += buf.iter().zip(&x[range]).map(|(p, x)| (p - x) * (p - x)).sum::<f64>();
    }
    acc.sqrt()
}

/// Reduced coordinate: moving mass from `pivot` into `coord`.
#[derive(Clone, Copy)]
struct Direction {
    coord: usize,
    pivot: usize,
}

fn free_directions(layout: &ParameterLayout, theta: &[f64], half_grad: &[f64]) -> Vec<Direction> {
    let mut dirs = Vec::new();
    for b in layout.blocks() {
        if b.len() < 2 {
            continue;
        }
        let pivot = *b
            .full
            .iter()
            .max_by(|&&i, &&j| theta[i].total_cmp(&theta[j]))
            .expect("blocks are nonempty");
        for &j in &b.full {
            if j == pivot {
                continue;
            }
            if theta[j] > BOUND_EPS || half_grad[j] - half_grad[pivot] < 0.0 {
                dirs.push(Direction { coord: j, pivot });
            }
        }
    }
    dirs
}

pub(crate) fn project_full(layout: &ParameterLayout, theta: &mut [f64]) {
    let mut buf = Vec::new();
    for b in layout.blocks() {
        buf.clear();
        buf.extend(b.full.iter().map(|&i| theta[i]));
        project_simplex(&mut buf);
        for (&i, &v) in b.full.iter().zip(&buf) {
            theta[i] = v;
        }
    }
}

pub(crate) fn minimize(
    layout: &ParameterLayout,
    target: &[f64],
    start: Vec<f64>,
    max_iterations: usize,
    gtol: f64,
) -> Outcome {
    let mut ws = Workspace::new(layout, target);
    let m = ws.contraction.n_entries();
    let nf = ws.contraction.n_full();
    let mut theta = start;
    project_full(layout, &mut theta);
    let mut cost = ws.linearize(&theta);
    let mut history = vec![cost];
    let finish = |theta, cost, iterations, termination, history| Outcome {
        theta,
        cost,
        iterations,
        termination,
        history,
    };
    if !cost.is_finite() {
        return finish(theta, cost, 0, Termination::NumericalFailure, history);
    }

    let mut mu: Option<f64> = None;
    let mut nu = 2.0;
    let mut iterations = 0;
    loop {
        let g = ws.half_gradient();
        if g.iter().any(|x| !x.is_finite()) {
            return finish(theta, cost, iterations, Termination::NumericalFailure, history);
        }
        if cost <= EXACT_COST || projected_gradient_norm(layout, &theta, &g) <= gtol {
            return finish(theta, cost, iterations, Termination::GradientTolerance, history);
        }
        if iterations >= max_iterations {
            return finish(theta, cost, iterations, Termination::MaxIterations, history);
        }
        let k_hist = history.len();
        if k_hist > STALL_WINDOW {
            let old = history[k_hist - 1 - STALL_WINDOW];
            if old - cost <= STALL_REL_DECREASE * old {
                return finish(theta, cost, iterations, Termination::Stalled, history);
            }
        }
        iterations += 1;

        let dirs = free_directions(layout, &theta, &g);
        if dirs.is_empty() {
            return finish(theta, cost, iterations, Termination::GradientTolerance, history);
        }
        let k = dirs.len();
        let mut jr = DMatrix::<f64>::zeros(m, k);
        for (col, d) in dirs.iter().enumerate() {
            for row in 0..m {
                jr[(row, col)] = ws.jac[row * nf + d.coord] - ws.jac[row * nf + d.pivot];
            }
        }
        let r = DVector::from_column_slice(&ws.resid);
        let gr = jr.transpose() * &r;
        let dual = k > m;
        let gram = if dual {
            &jr * jr.transpose()
        } else {
            jr.transpose() * &jr
        };
        let mu_now = *mu.get_or_insert_with(|| {
            let d = gram.diagonal().max();
            1e-3 * if d > 0.0 { d } else { 1.0 }
        });
        let mut mu_now = mu_now;

        let accepted = loop {
            let mut a = gram.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu_now;
            }
            let step = match a.cholesky() {
                Some(ch) => {
                    if dual {
                        -(jr.transpose() * ch.solve(&r))
                    } else {
                        -ch.solve(&gr)
                    }
                }
                None => {
                    mu_now *= nu;
                    nu *= 2.0;
                    if !(mu_now <= MAX_DAMPING) {
                        break None;
                    }
                    continue;
                }
            };
            let mut trial = theta.clone();
            for (d, s) in dirs.iter().zip(step.iter()) {
                trial[d.coord] += s;
                trial[d.pivot] -= s;
            }
            project_full(layout, &mut trial);
            let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let step_norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
            let trial_cost = ws.cost_at(&trial);
            if !trial_cost.is_finite() {
                return finish(theta, cost, iterations, Termination::NumericalFailure, history);
            }
            if trial_cost < cost {
                // predicted decrease of the linear model along the actual step
                let mut pred = 0.0;
                for (row, r0) in ws.jac.chunks_exact(nf).zip(&ws.resid) {
                    let js: f64 = row.iter().zip(&s).map(|(j, s)| j * s).sum();
                    pred += r0 * r0 - (r0 + js) * (r0 + js);
                }
                let rho = if pred > 0.0 { (cost - trial_cost) / pred } else { 0.5 };
                let factor = 1.0 - (2.0 * rho - 1.0).powi(3);
                mu_now = (mu_now * factor.clamp(1.0 / 3.0, 1.0)).max(f64::MIN_POSITIVE);
                nu = 2.0;
                break Some((trial, trial_cost));
            }
            mu_now *= nu;
            nu *= 2.0;
            if !(mu_now <= MAX_DAMPING) || step_norm == 0.0 {
                break None;
            }
        };
        mu = Some(mu_now);
        match accepted {
            Some((trial, _)) => {
                theta = trial;
                cost = ws.linearize(&theta);
                history.push(cost);
            }
            None => return finish(theta, cost, iterations, Termination::Stalled, history),
        }
    }
}
