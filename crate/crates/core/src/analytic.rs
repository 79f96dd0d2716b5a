//! Closed-form local models and critical-visibility constants used as
//! oracles: the bilocal boundary model, GHZ models at cardinalities
//! (2,2,2), (3,2,2) and (3,3,3), the W model, the quartics whose roots fix
//! their parameters, output/input relabelling and the error-slope factor.
//!
//! Triangle sources are ordered α, β, γ and response arrays list hidden
//! axes in increasing source index, so Bob's array is indexed `[α, γ]`.

use crate::behaviour::Behaviour;
use crate::error::{Error, Result};
use crate::model::{LocalModel, ResponseFunction, SourceDistribution};
use crate::topology::NetworkTopology;

/// How a root of a quartic is picked out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootSelection {
    Largest,
    UniqueIn(f64, f64),
}

/// Degree-4 polynomial, coefficients from the quartic term down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticSpec {
    pub coefficients: [f64; 5],
    pub selection: RootSelection,
}

impl QuarticSpec {
    pub fn eval(&self, x: f64) -> f64 {
        horner(&self.coefficients, x)
    }
}

/// 12a⁴ − 8a³ + 6a² − 1; its root in [0, 1] is the weight `a` of the
/// (3,3,3) GHZ sources.
pub const GHZ333_A: QuarticSpec = QuarticSpec {
    coefficients: [12.0, -8.0, 6.0, 0.0, -1.0],
    selection: RootSelection::UniqueIn(0.0, 1.0),
};

/// 4b⁴ − 8b + 3; its root in [0, 1] is the weight `b` of the (3,3,3) GHZ
/// sources.
pub const GHZ333_B: QuarticSpec = QuarticSpec {
    coefficients: [4.0, 0.0, 0.0, -8.0, 3.0],
    selection: RootSelection::UniqueIn(0.0, 1.0),
};

/// 3v⁴ + 28v³ + 66v² − 36v + 3; largest real root is the (3,3,3) GHZ
/// critical visibility.
pub const GHZ333_VISIBILITY: QuarticSpec = QuarticSpec {
    coefficients: [3.0, 28.0, 66.0, -36.0, 3.0],
    selection: RootSelection::Largest,
};

/// 4v⁴ − 30v³ + 63v² + 108v − 81; root in [0, 1] is the W critical
/// visibility.
pub const W_VISIBILITY: QuarticSpec = QuarticSpec {
    coefficients: [4.0, -30.0, 63.0, 108.0, -81.0],
    selection: RootSelection::UniqueIn(0.0, 1.0),
};

pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len() - 1;
    coeffs[..n]
        .iter()
        .enumerate()
        .map(|(i, &c)| c * (n - i) as f64)
        .collect()
}

/// Bisection on a bracket with a sign change, down to width `tol`.
fn bisect(coeffs: &[f64], mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = horner(coeffs, lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = horner(coeffs, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Simple real roots in `[lo, hi]`, isolated by splitting at the roots of
/// the derivative so that every piece is monotone.
fn real_roots_in(coeffs: &[f64], lo: f64, hi: f64, tol: f64) -> Vec<f64> {
    let start = coeffs.iter().position(|&c| c != 0.0).unwrap_or(coeffs.len());
    let coeffs = &coeffs[start..];
    if coeffs.len() < 2 {
        return Vec::new();
    }
    let mut cuts = vec![lo];
    if coeffs.len() > 2 {
        cuts.extend(
            real_roots_in(&derivative(coeffs), lo, hi, tol)
                .into_iter()
                .filter(|&r| r > lo && r < hi),
        );
    }
    cuts.push(hi);
    let mut roots = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (horner(coeffs, a), horner(coeffs, b));
        let root = if fa == 0.0 {
            Some(a)
        } else if fb == 0.0 {
            Some(b)
        } else if (fa < 0.0) != (fb < 0.0) {
            Some(bisect(coeffs, a, b, tol))
        } else {
            None
        };
        if let Some(r) = root {
            if roots.last().is_none_or(|&last: &f64| (r - last).abs() > tol) {
                roots.push(r);
            }
        }
    }
    roots
}

/// The root selected by `spec.selection`, to within `tol`.
pub fn poly_root(spec: &QuarticSpec, tol: f64) -> Result<f64> {
    let c = &spec.coefficients;
    if c[0] == 0.0 {
        return Err(Error::Selection("leading coefficient is zero".into()));
    }
    match spec.selection {
        RootSelection::Largest => {
            // Cauchy bound on the magnitude of every root
            let bound = 1.0 + c[1..].iter().map(|x| (x / c[0]).abs()).fold(0.0, f64::max);
            real_roots_in(c, -bound, bound, tol)
                .last()
                .copied()
                .ok_or_else(|| Error::Selection("polynomial has no real root".into()))
        }
        RootSelection::UniqueIn(lo, hi) => {
            let roots = real_roots_in(c, lo, hi, tol);
            match roots.as_slice() {
                [r] => Ok(*r),
                [] => Err(Error::Selection(format!("no root in [{lo}, {hi}]"))),
                many => Err(Error::Selection(format!(
                    "{} roots in [{lo}, {hi}]: {many:?}",
                    many.len()
                ))),
            }
        }
    }
}

/// Source weights `(a, b)` of the (3,3,3) GHZ model.
pub fn ghz333_weights() -> (f64, f64) {
    let a = poly_root(&GHZ333_A, DEFAULT_ROOT_TOL).expect("isolated root");
    let b = poly_root(&GHZ333_B, DEFAULT_ROOT_TOL).expect("isolated root");
    (a, b)
}

/// Visibility reached by the (3,3,3) GHZ model, `2b − 3 + 1/b`.
pub fn ghz333_visibility() -> f64 {
    let (_, b) = ghz333_weights();
    2.0 * b - 3.0 + 1.0 / b
}

/// Critical visibility of the W model.
pub fn w_critical_visibility() -> f64 {
    poly_root(&W_VISIBILITY, DEFAULT_ROOT_TOL).expect("isolated root")
}

fn triangle() -> NetworkTopology {
    NetworkTopology::triangle(2).expect("triangle is valid")
}

/// Binary triangle response from a `P(output = 0 | h₁, h₂)` matrix.
fn tri_response(party: usize, rows: usize, cols: usize, zero_prob: &[f64]) -> ResponseFunction {
    ResponseFunction::binary(party, 1, &[rows, cols], zero_prob)
}

/// Uniform binary sources with every party answering 0 with probability
/// `[[0, ½], [½, 1]]`; reproduces GHZ at visibility 1/4.
pub fn ghz_model_222() -> LocalModel {
    let m = [0.0, 0.5, 0.5, 1.0];
    LocalModel::new(
        triangle(),
        vec![SourceDistribution::uniform(2); 3],
        (0..3).map(|p| tri_response(p, 2, 2, &m)).collect(),
    )
    .expect("shapes match")
}

/// GHZ model with cardinalities (3,2,2), valid for `0 ≤ v ≤ 1/3`.
pub fn ghz_model_322(v: f64) -> Result<LocalModel> {
    if !(0.0..=1.0 / 3.0).contains(&v) {
        return Err(Error::Domain(format!("(3,2,2) GHZ model needs 0 ≤ v ≤ 1/3, got {v}")));
    }
    let alice = [
        (1.0 - 3.0 * v) / (2.0 * (1.0 - v)),
        0.5,
        0.5,
        (1.0 + v) / (2.0 * (1.0 - v)),
    ];
    // [α, γ]
    let bob = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
    // [α, β]
    let charles = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
    LocalModel::new(
        triangle(),
        vec![
            SourceDistribution::new(vec![v / 2.0, 1.0 - v, v / 2.0]),
            SourceDistribution::uniform(2),
            SourceDistribution::uniform(2),
        ],
        vec![
            tri_response(0, 2, 2, &alice),
            tri_response(1, 3, 2, &bob),
            tri_response(2, 3, 2, &charles),
        ],
    )
}

/// Symmetric (3,3,3) GHZ model at its critical visibility.
pub fn ghz_model_333() -> LocalModel {
    let (a, b) = ghz333_weights();
    let m = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    LocalModel::new(
        triangle(),
        vec![SourceDistribution::new(vec![a, b, 1.0 - a - b]); 3],
        (0..3).map(|p| tri_response(p, 3, 3, &m)).collect(),
    )
    .expect("shapes match")
}

/// W model with cardinalities (3,2,2), valid for `0 ≤ v ≤ v_c(W)`.
pub fn w_model(v: f64) -> Result<LocalModel> {
    let v_c = w_critical_visibility();
    if !(0.0..=v_c + 1e-12).contains(&v) {
        return Err(Error::Domain(format!("W model needs 0 ≤ v ≤ {v_c}, got {v}")));
    }
    let u = (3.0 * (1.0 - v) / (3.0 + v)).sqrt();
    let edge = (3.0 + v) / 12.0 - (1.0 - v) / (4.0 * u);
    let middle = (1.0 - v) / 4.0 * (1.0 + 1.0 / u).powi(2);
    let bc = SourceDistribution::new(vec![u / (1.0 + u), 1.0 / (1.0 + u)]);
    let off = (3.0 + v) / 6.0 + u * v * (9.0 - v) / (18.0 * (1.0 - v));
    let alice = [0.5, off, off, 3.0 * (1.0 - v) / (2.0 * (3.0 + v))];
    // [α, γ]
    let bob = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
    // [α, β]
    let charles = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    LocalModel::new(
        triangle(),
        vec![SourceDistribution::new(vec![edge, middle, edge]), bc.clone(), bc],
        vec![
            tri_response(0, 2, 2, &alice),
            tri_response(1, 3, 2, &bob),
            tri_response(2, 3, 2, &charles),
        ],
    )
}

/// Bilocal model reproducing the `X + Y = 1` edge of the (X, Y) slice,
/// with `X ∈ [0, 1]` and cardinalities (2, 4). The other three edges
/// follow by [`relabel`].
pub fn bilocal_boundary_model(x: f64) -> Result<LocalModel> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("boundary model needs 0 ≤ X ≤ 1, got {x}")));
    }
    let y = 1.0 - x;
    let topo = NetworkTopology::bilocal();
    // [x, λ]
    let alice = [1.0, 0.0, 1.0, 0.0];
    // [y, λ, μ]
    let bob = [
        0.5, 1.0, 0.5, 0.0, //
        0.5, 0.0, 0.5, 1.0, //
        1.0, 0.5, 0.0, 0.5, //
        0.0, 0.5, 1.0, 0.5,
    ];
    // [z, μ]
    let charles = [1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    LocalModel::new(
        topo,
        vec![
            SourceDistribution::new(vec![0.75, 0.25]),
            SourceDistribution::new(vec![y / 2.0, x / 2.0, y / 2.0, x / 2.0]),
        ],
        vec![
            ResponseFunction::binary(0, 2, &[2], &alice),
            ResponseFunction::binary(1, 2, &[2, 4], &bob),
            ResponseFunction::binary(2, 2, &[4], &charles),
        ],
    )
}

fn check_permutation(p: &[usize], n: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; n];
    if p.len() != n {
        return Err(Error::Structural(format!(
            "{what} has length {}, expected {n}",
            p.len()
        )));
    }
    for &k in p {
        if k >= n || seen[k] {
            return Err(Error::Structural(format!(
                "{what} {p:?} is not a permutation of 0..{n}"
            )));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Renames outputs and inputs party by party: the returned table `q`
/// satisfies `q(σ(a), … | τ(x), …) = p(a, … | x, …)`.
pub fn relabel(b: &Behaviour, output_perms: &[Vec<usize>], input_perms: &[Vec<usize>]) -> Result<Behaviour> {
    let n = b.party_count();
    if output_perms.len() != n || input_perms.len() != n {
        return Err(Error::Structural(format!("need one permutation per party ({n})")));
    }
    for p in 0..n {
        check_permutation(
            &output_perms[p],
            b.outputs()[p],
            &format!("party {p} output permutation"),
        )?;
        check_permutation(&input_perms[p], b.inputs()[p], &format!("party {p} input permutation"))?;
    }
    let mut data = vec![0.0; b.len()];
    for (i, &val) in b.data().iter().enumerate() {
        let (outs, ins) = b.unravel(i);
        let outs: Vec<usize> = outs.iter().enumerate().map(|(p, &o)| output_perms[p][o]).collect();
        let ins: Vec<usize> = ins.iter().enumerate().map(|(p, &x)| input_perms[p][x]).collect();
        data[b.index(&outs, &ins)] = val;
    }
    Behaviour::from_raw(b.outputs().to_vec(), b.inputs().to_vec(), data)
}

/// Identity permutations for every party of `b`.
pub fn identity_perms(cards: &[usize]) -> Vec<Vec<usize>> {
    cards.iter().map(|&k| (0..k).collect()).collect()
}

/// `√(Σ (p0 − p1)² / N)`: slope of the best-fit RMSE against visibility
/// past the critical point for noise mixtures `v·p1 + (1 − v)·p0`.
pub fn error_slope(p1: &Behaviour, p0: &Behaviour) -> Result<f64> {
    p1.rmse(p0)
}
