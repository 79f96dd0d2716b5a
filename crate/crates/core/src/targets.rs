//! Target behaviour families: the two bilocal slices and the noisy GHZ, W
//! and EJM triangle distributions.

use std::fmt;
use std::path::PathBuf;

use crate::behaviour::{load_behaviour, Behaviour};
use crate::error::{Error, Result};
use crate::topology::NetworkTopology;
use crate::STRUCTURAL_TOL;

/// EJM triangle distribution over a, b, c ∈ {0, 1, 2, 3}, in 1/256 units:
/// all equal, all distinct, exactly two equal.
pub const EJM_ALL_EQUAL: f64 = 25.0 / 256.0;
pub const EJM_ALL_DISTINCT: f64 = 5.0 / 256.0;
pub const EJM_TWO_EQUAL: f64 = 1.0 / 256.0;

/// A named, parameterized target distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    BilocalIJ { i: f64, j: f64 },
    BilocalXY { x: f64, y: f64 },
    Ghz { v: f64 },
    W { v: f64 },
    Ejm { v: f64 },
    CustomFile(PathBuf),
}

impl FamilySpec {
    pub fn behaviour(&self) -> Result<Behaviour> {
        match *self {
            FamilySpec::BilocalIJ { i, j } => bilocal_ij(i, j),
            FamilySpec::BilocalXY { x, y } => bilocal_xy(x, y),
            FamilySpec::Ghz { v } => ghz(v),
            FamilySpec::W { v } => w_dist(v),
            FamilySpec::Ejm { v } => ejm(v),
            FamilySpec::CustomFile(ref path) => load_behaviour(path),
        }
    }

    /// Scenario the family lives on; `None` for file targets.
    pub fn topology(&self) -> Option<NetworkTopology> {
        match self {
            FamilySpec::BilocalIJ { .. } | FamilySpec::BilocalXY { .. } => Some(NetworkTopology::bilocal()),
            FamilySpec::Ghz { .. } | FamilySpec::W { .. } => NetworkTopology::triangle(2).ok(),
            FamilySpec::Ejm { .. } => NetworkTopology::triangle(4).ok(),
            FamilySpec::CustomFile(_) => None,
        }
    }
}

/// Triangle families mixed with white noise at visibility `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibilityFamily {
    Ghz,
    W,
    Ejm,
}

impl VisibilityFamily {
    pub fn at(self, v: f64) -> Result<Behaviour> {
        match self {
            VisibilityFamily::Ghz => ghz(v),
            VisibilityFamily::W => w_dist(v),
            VisibilityFamily::Ejm => ejm(v),
        }
    }

    pub fn spec(self, v: f64) -> FamilySpec {
        match self {
            VisibilityFamily::Ghz => FamilySpec::Ghz { v },
            VisibilityFamily::W => FamilySpec::W { v },
            VisibilityFamily::Ejm => FamilySpec::Ejm { v },
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            VisibilityFamily::Ghz | VisibilityFamily::W => 2,
            VisibilityFamily::Ejm => 4,
        }
    }

    pub fn topology(self) -> NetworkTopology {
        NetworkTopology::triangle(self.outputs()).expect("triangle is valid")
    }
}

impl fmt::Display for VisibilityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VisibilityFamily::Ghz => "ghz",
            VisibilityFamily::W => "w",
            VisibilityFamily::Ejm => "ejm",
        })
    }
}

/// Two-parameter bilocal slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceFamily {
    BilocalIJ,
    BilocalXY,
}

impl SliceFamily {
    pub fn at(self, a: f64, b: f64) -> Result<Behaviour> {
        match self {
            SliceFamily::BilocalIJ => bilocal_ij(a, b),
            SliceFamily::BilocalXY => bilocal_xy(a, b),
        }
    }
}

impl fmt::Display for SliceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SliceFamily::BilocalIJ => "bilocal-ij",
            SliceFamily::BilocalXY => "bilocal-xy",
        })
    }
}

fn require_unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} outside [0, 1]")))
    }
}

fn require_abs_le_one(name: &str, v: f64) -> Result<()> {
    if v.abs() <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("|{name}| = {} exceeds 1", v.abs())))
    }
}

fn sign(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Binary bilocal table from `f(a, b, c, x, y, z)`.
fn bilocal_table(f: impl Fn(usize, usize, usize, usize, usize, usize) -> f64) -> Vec<f64> {
    let mut data = Vec::with_capacity(64);
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        for z in 0..2 {
                            data.push(f(a, b, c, x, y, z));
                        }
                    }
                }
            }
        }
    }
    data
}

/// Rejects entries below `−STRUCTURAL_TOL`, zeroes the rounding-level ones.
fn finish_affine(family: String, outputs: Vec<usize>, inputs: Vec<usize>, mut data: Vec<f64>) -> Result<Behaviour> {
    let (index, &min_entry) = data
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("tables are nonempty");
    if min_entry < -STRUCTURAL_TOL {
        return Err(Error::InvalidFamilyPoint {
            family,
            min_entry,
            index,
        });
    }
    data.iter_mut().for_each(|p| *p = p.max(0.0));
    Behaviour::new(outputs, inputs, data)
}

/// `I·p_I + J·p_J + (1 − I − J)·p_0` on the bilocal scenario.
pub fn bilocal_ij(i: f64, j: f64) -> Result<Behaviour> {
    require_abs_le_one("I", i)?;
    require_abs_le_one("J", j)?;
    let data = bilocal_table(|a, b, c, x, y, z| {
        let p_i = (1.0 + if y == 0 { sign(a + b + c) } else { 0.0 }) / 8.0;
        let p_j = (1.0 + if y == 1 { sign(x + z + a + b + c) } else { 0.0 }) / 8.0;
        let p_0 = 1.0 / 8.0;
        i * p_i + j * p_j + (1.0 - i - j) * p_0
    });
    finish_affine(format!("bilocal-ij({i}, {j})"), vec![2; 3], vec![2; 3], data)
}

/// `X·p_X + Y·p_Y + (1 − X − Y)·p_0` with Alice's biased marginal.
pub fn bilocal_xy(x_w: f64, y_w: f64) -> Result<Behaviour> {
    require_abs_le_one("X", x_w)?;
    require_abs_le_one("Y", y_w)?;
    let data = bilocal_table(|a, b, c, _x, y, z| {
        let bias = 0.5 + if a == 0 { 1.0 } else { 0.0 };
        let p_x = bias * (1.0 + if y == 0 { sign(a + b + c) } else { 0.0 }) / 8.0;
        let p_y = bias * (1.0 + if y == 1 { sign(z + a + b + c) } else { 0.0 }) / 8.0;
        let p_0 = bias / 8.0;
        x_w * p_x + y_w * p_y + (1.0 - x_w - y_w) * p_0
    });
    finish_affine(format!("bilocal-xy({x_w}, {y_w})"), vec![2; 3], vec![2; 3], data)
}

fn triangle_table(m: usize, f: impl Fn(usize, usize, usize) -> f64) -> Behaviour {
    let mut data = Vec::with_capacity(m * m * m);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                data.push(f(a, b, c));
            }
        }
    }
    Behaviour::new(vec![m; 3], vec![1; 3], data).expect("family tables are normalized")
}

/// Noisy GHZ: `v/2 + (1−v)/8` on 000 and 111, `(1−v)/8` elsewhere.
pub fn ghz(v: f64) -> Result<Behaviour> {
    require_unit_interval("v", v)?;
    let noise = (1.0 - v) / 8.0;
    Ok(triangle_table(2, |a, b, c| {
        if a == b && b == c {
            v / 2.0 + noise
        } else {
            noise
        }
    }))
}

/// Noisy W: `v/3 + (1−v)/8` when exactly one output is 1.
pub fn w_dist(v: f64) -> Result<Behaviour> {
    require_unit_interval("v", v)?;
    let noise = (1.0 - v) / 8.0;
    Ok(triangle_table(
        2,
        |a, b, c| {
            if a + b + c == 1 {
                v / 3.0 + noise
            } else {
                noise
            }
        },
    ))
}

/// Noiseless EJM value for outputs `(a, b, c)`.
pub fn ejm_ideal(a: usize, b: usize, c: usize) -> f64 {
    let pairs = (a == b) as u8 + (b == c) as u8 + (a == c) as u8;
    match pairs {
        3 => EJM_ALL_EQUAL,
        0 => EJM_ALL_DISTINCT,
        _ => EJM_TWO_EQUAL,
    }
}

/// `v·p_EJM + (1−v)/64`.
pub fn ejm(v: f64) -> Result<Behaviour> {
    require_unit_interval("v", v)?;
    let noise = (1.0 - v) / 64.0;
    Ok(triangle_table(4, |a, b, c| v * ejm_ideal(a, b, c) + noise))
}

/// `√|I| + √|J| ≤ 1`.
pub fn brgp_satisfied(i: f64, j: f64) -> bool {
    i.abs().sqrt() + j.abs().sqrt() <= 1.0
}

/// `v·p1 + (1 − v)·uniform`.
pub fn mix_with_uniform(p1: &Behaviour, v: f64) -> Result<Behaviour> {
    require_unit_interval("v", v)?;
    let noise = (1.0 - v) / p1.output_tuples() as f64;
    let data = p1.data().iter().map(|&p| v * p + noise).collect();
    Behaviour::new(p1.outputs().to_vec(), p1.inputs().to_vec(), data)
}
