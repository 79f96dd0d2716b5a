//! Flat free-coordinate packing of a local model.
//!
//! Every probability vector of a model (a source distribution, or the
//! output distribution of a party for one input and one hidden tuple) is a
//! simplex block. Only the first `L − 1` coordinates of a block are stored;
//! the last is implied by normalization. A stored vector is feasible when
//! all its coordinates are nonnegative and every block sums to at most one.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use crate::contraction::Contraction;
use crate::error::{Error, Result};
use crate::model::LocalModel;
use crate::topology::NetworkTopology;
use crate::STRUCTURAL_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOwner {
    Source(usize),
    Response { party: usize, input: usize, hidden: usize },
}

impl fmt::Display for BlockOwner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BlockOwner::Source(s) => write!(f, "source {s}"),
            BlockOwner::Response { party, input, hidden } => {
                write!(f, "party {party} input {input} hidden tuple {hidden}")
            }
        }
    }
}

/// One simplex block: its owner, the full coordinates it covers (the last
/// one is implied) and where its stored coordinates start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub owner: BlockOwner,
    pub full: Vec<usize>,
    pub stored_offset: usize,
}

impl Block {
    /// Full length `L`.
    pub fn len(&self) -> usize {
        self.full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.full.is_empty()
    }

    /// Stored length `L − 1`.
    pub fn stored_len(&self) -> usize {
        self.full.len() - 1
    }

    pub fn stored_range(&self) -> std::ops::Range<usize> {
        self.stored_offset..self.stored_offset + self.stored_len()
    }
}

/// Free coordinates of a model, in the order given by a [`ParameterLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub Vec<f64>);

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Block structure shared by all models of one topology and one choice of
/// source cardinalities. Blocks are ordered sources first, then parties,
/// each party's blocks by (input, hidden tuple) in row-major order.
#[derive(Debug, Clone)]
pub struct ParameterLayout {
    contraction: Arc<Contraction>,
    blocks: Vec<Block>,
    n_stored: usize,
}

impl ParameterLayout {
    pub fn new(topology: &NetworkTopology, cardinalities: &[usize]) -> Result<Self> {
        let contraction = Arc::new(Contraction::new(topology, cardinalities)?);
        let mut blocks = Vec::new();
        let mut stored = 0;
        let mut push = |owner, full: Vec<usize>| {
            let len = full.len();
            blocks.push(Block {
                owner,
                full,
                stored_offset: stored,
            });
            stored += len - 1;
        };
        for (s, &c) in cardinalities.iter().enumerate() {
            let o = contraction.source_offset(s);
            push(BlockOwner::Source(s), (o..o + c).collect());
        }
        for p in 0..topology.party_count() {
            let (m, inputs) = (topology.outputs()[p], topology.inputs()[p]);
            let h_len = contraction.party_hidden(p);
            let off = contraction.party_offset(p);
            for x in 0..inputs {
                for h in 0..h_len {
                    let full = (0..m).map(|o| off + (o * inputs + x) * h_len + h).collect();
                    push(
                        BlockOwner::Response {
                            party: p,
                            input: x,
                            hidden: h,
                        },
                        full,
                    );
                }
            }
        }
        Ok(Self {
            contraction,
            blocks,
            n_stored: stored,
        })
    }

    pub fn contraction(&self) -> &Contraction {
        &self.contraction
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn n_stored(&self) -> usize {
        self.n_stored
    }

    pub fn n_full(&self) -> usize {
        self.contraction.n_full()
    }

    pub fn topology(&self) -> &NetworkTopology {
        self.contraction.topology()
    }

    pub fn cardinalities(&self) -> &[usize] {
        self.contraction.cardinalities()
    }

    /// Full coordinates with implied last entries `1 − Σ stored`.
    /// Fails, naming the block, when the stored vector is infeasible beyond
    /// [`STRUCTURAL_TOL`].
    pub fn full_from_stored(&self, stored: &[f64]) -> Result<Vec<f64>> {
        self.check_len(stored)?;
        let mut theta = vec![0.0; self.n_full()];
        for b in &self.blocks {
            let xs = &stored[b.stored_range()];
            if let Some(&bad) = xs.iter().find(|x| !(**x >= -STRUCTURAL_TOL)) {
                return Err(Error::Feasibility {
                    block: b.owner.to_string(),
                    detail: format!("coordinate {bad} is negative"),
                });
            }
            let mut sum = 0.0;
            for (&i, &x) in b.full.iter().zip(xs) {
                theta[i] = x;
                sum += x;
            }
            if !(sum <= 1.0 + STRUCTURAL_TOL) {
                return Err(Error::Feasibility {
                    block: b.owner.to_string(),
                    detail: format!("stored coordinates sum to {sum} > 1"),
                });
            }
            theta[*b.full.last().expect("blocks are nonempty")] = 1.0 - sum;
        }
        Ok(theta)
    }

    /// Drops the last coordinate of every block.
    pub fn stored_from_full(&self, theta: &[f64]) -> Vec<f64> {
        let mut stored = vec![0.0; self.n_stored];
        for b in &self.blocks {
            for (k, &i) in b.full[..b.stored_len()].iter().enumerate() {
                stored[b.stored_offset + k] = theta[i];
            }
        }
        stored
    }

    /// Chain rule through the implied coordinate: ∂/∂x_i = g_i − g_last.
    pub fn stored_gradient(&self, full_grad: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_stored];
        for b in &self.blocks {
            let last = full_grad[*b.full.last().expect("blocks are nonempty")];
            for (k, &i) in b.full[..b.stored_len()].iter().enumerate() {
                g[b.stored_offset + k] = full_grad[i] - last;
            }
        }
        g
    }

    fn check_len(&self, stored: &[f64]) -> Result<()> {
        if stored.len() == self.n_stored {
            Ok(())
        } else {
            Err(Error::Structural(format!(
                "parameter vector has {} entries, layout expects {}",
                stored.len(),
                self.n_stored
            )))
        }
    }
}

pub fn pack_parameters(model: &LocalModel) -> Result<(ParameterVector, ParameterLayout)> {
    let layout = ParameterLayout::new(model.topology(), &model.cardinalities())?;
    let theta = layout.contraction.model_to_full(model)?;
    Ok((ParameterVector(layout.stored_from_full(&theta)), layout))
}

pub fn unpack_parameters(vector: &[f64], layout: &ParameterLayout) -> Result<LocalModel> {
    let theta = layout.full_from_stored(vector)?;
    layout.contraction.full_to_model(&theta)
}

/// Per block, the Euclidean projection of the stored coordinates onto
/// `{x ≥ 0, Σ x ≤ 1}`.
pub fn project_feasible(vector: &[f64], layout: &ParameterLayout) -> Result<ParameterVector> {
    layout.check_len(vector)?;
    let mut out = vector.to_vec();
    for b in layout.blocks() {
        project_capped_simplex(&mut out[b.stored_range()]);
    }
    Ok(ParameterVector(out))
}

/// Projection onto `{x ≥ 0, Σ x ≤ 1}`: clamp at zero, and if the clamped
/// point still sums past one, project onto the face `Σ x = 1`.
pub fn project_capped_simplex(x: &mut [f64]) {
    let clamped: f64 = x.iter().map(|v| v.max(0.0)).sum();
    if clamped <= 1.0 {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
    } else {
        project_simplex(x);
    }
}

/// Projection onto the probability simplex `{x ≥ 0, Σ x = 1}` by the
/// sort-and-threshold rule.
pub fn project_simplex(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mut sorted = x.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - tau).max(0.0));
}
