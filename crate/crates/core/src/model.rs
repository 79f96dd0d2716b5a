use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::NetworkTopology;
use crate::{json, STRUCTURAL_TOL};

/// Distribution of one source's hidden variable over `0..cardinality`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDistribution {
    pub cardinality: usize,
    pub probabilities: Vec<f64>,
}

impl SourceDistribution {
    pub fn new(probabilities: Vec<f64>) -> Self {
        Self {
            cardinality: probabilities.len(),
            probabilities,
        }
    }

    pub fn uniform(cardinality: usize) -> Self {
        Self::new(vec![1.0 / cardinality as f64; cardinality])
    }
}

/// Conditional output distribution of one party, shaped
/// `[m, M, c_1, …, c_k]` with the hidden axes in increasing source index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFunction {
    pub party: usize,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ResponseFunction {
    /// Fills `data[o, x, h…] = f(o, x, flat hidden index)`.
    pub fn from_fn(party: usize, shape: Vec<usize>, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let (m, inputs) = (shape[0], shape[1]);
        let hidden: usize = shape[2..].iter().product();
        let mut data = Vec::with_capacity(m * inputs * hidden);
        for o in 0..m {
            for x in 0..inputs {
                for h in 0..hidden {
                    data.push(f(o, x, h));
                }
            }
        }
        Self { party, shape, data }
    }

    /// Binary-output response given `P(output = 0 | x, h…)` as a flat
    /// `[x, h…]` table.
    pub fn binary(party: usize, inputs: usize, hidden: &[usize], zero_prob: &[f64]) -> Self {
        let mut shape = vec![2, inputs];
        shape.extend_from_slice(hidden);
        let h: usize = hidden.iter().product();
        assert_eq!(zero_prob.len(), inputs * h, "response table size");
        Self::from_fn(party, shape, |o, x, k| {
            let p0 = zero_prob[x * h + k];
            if o == 0 {
                p0
            } else {
                1.0 - p0
            }
        })
    }

    pub fn outputs(&self) -> usize {
        self.shape[0]
    }

    pub fn inputs(&self) -> usize {
        self.shape[1]
    }

    /// Number of hidden-value tuples seen by the party.
    pub fn hidden_len(&self) -> usize {
        self.shape[2..].iter().product()
    }

    pub fn index(&self, output: usize, input: usize, hidden: usize) -> usize {
        (output * self.inputs() + input) * self.hidden_len() + hidden
    }

    pub fn get(&self, output: usize, input: usize, hidden: usize) -> f64 {
        self.data[self.index(output, input, hidden)]
    }
}

/// Finite-cardinality network-local model: one distribution per source
/// and one response function per party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct LocalModel {
    topology: NetworkTopology,
    sources: Vec<SourceDistribution>,
    responses: Vec<ResponseFunction>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    topology: NetworkTopology,
    sources: Vec<SourceDistribution>,
    responses: Vec<ResponseFunction>,
}

impl TryFrom<RawModel> for LocalModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        LocalModel::new(raw.topology, raw.sources, raw.responses)
    }
}

impl From<LocalModel> for RawModel {
    fn from(m: LocalModel) -> Self {
        RawModel {
            topology: m.topology,
            sources: m.sources,
            responses: m.responses,
        }
    }
}

impl LocalModel {
    /// Checks that every array has the shape implied by the topology.
    /// Probability values are not checked here; see [`LocalModel::validate`].
    pub fn new(
        topology: NetworkTopology,
        sources: Vec<SourceDistribution>,
        responses: Vec<ResponseFunction>,
    ) -> Result<Self> {
        if sources.len() != topology.source_count() {
            return Err(Error::Structural(format!(
                "{} source distributions for {} sources",
                sources.len(),
                topology.source_count()
            )));
        }
        for (s, src) in sources.iter().enumerate() {
            if src.cardinality == 0 || src.probabilities.len() != src.cardinality {
                return Err(Error::Structural(format!(
                    "source {s}: cardinality {} with {} probabilities",
                    src.cardinality,
                    src.probabilities.len()
                )));
            }
        }
        if responses.len() != topology.party_count() {
            return Err(Error::Structural(format!(
                "{} response functions for {} parties",
                responses.len(),
                topology.party_count()
            )));
        }
        for (p, r) in responses.iter().enumerate() {
            if r.party != p {
                return Err(Error::Structural(format!(
                    "response function {p} is labelled as party {}",
                    r.party
                )));
            }
            let mut expected = vec![topology.outputs()[p], topology.inputs()[p]];
            expected.extend(topology.party_sources(p).iter().map(|&s| sources[s].cardinality));
            if r.shape != expected {
                return Err(Error::Structural(format!(
                    "party {p}: response shape {:?}, expected {expected:?}",
                    r.shape
                )));
            }
            let len: usize = expected.iter().product();
            if r.data.len() != len {
                return Err(Error::Structural(format!(
                    "party {p}: response has {} entries, expected {len}",
                    r.data.len()
                )));
            }
        }
        Ok(Self {
            topology,
            sources,
            responses,
        })
    }

    /// Uniform sources and uniformly random outputs.
    pub fn uniform(topology: NetworkTopology, cardinalities: &[usize]) -> Result<Self> {
        topology.check_cardinalities(cardinalities)?;
        let sources = cardinalities.iter().map(|&c| SourceDistribution::uniform(c)).collect();
        let responses = (0..topology.party_count())
            .map(|p| {
                let m = topology.outputs()[p];
                let mut shape = vec![m, topology.inputs()[p]];
                shape.extend(topology.party_sources(p).iter().map(|&s| cardinalities[s]));
                ResponseFunction::from_fn(p, shape, |_, _, _| 1.0 / m as f64)
            })
            .collect();
        Self::new(topology, sources, responses)
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn sources(&self) -> &[SourceDistribution] {
        &self.sources
    }

    pub fn responses(&self) -> &[ResponseFunction] {
        &self.responses
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.sources.iter().map(|s| s.cardinality).collect()
    }

    /// All probability invariants: nonnegative entries, sources summing to
    /// one and response rows summing to one, within [`STRUCTURAL_TOL`].
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (s, src) in self.sources.iter().enumerate() {
            for (k, &p) in src.probabilities.iter().enumerate() {
                if !(p >= -STRUCTURAL_TOL) {
                    out.push(Violation {
                        kind: ViolationKind::Negative,
                        block: format!("source {s} value {k}"),
                        magnitude: p,
                    });
                }
            }
            let sum: f64 = src.probabilities.iter().sum();
            if !((sum - 1.0).abs() <= STRUCTURAL_TOL) {
                out.push(Violation {
                    kind: ViolationKind::Normalization,
                    block: format!("source {s}"),
                    magnitude: sum - 1.0,
                });
            }
        }
        for r in &self.responses {
            for (i, &p) in r.data.iter().enumerate() {
                if !(p >= -STRUCTURAL_TOL) {
                    out.push(Violation {
                        kind: ViolationKind::Negative,
                        block: format!("party {} entry {i}", r.party),
                        magnitude: p,
                    });
                }
            }
            for x in 0..r.inputs() {
                for h in 0..r.hidden_len() {
                    let sum: f64 = (0..r.outputs()).map(|o| r.get(o, x, h)).sum();
                    if !((sum - 1.0).abs() <= STRUCTURAL_TOL) {
                        out.push(Violation {
                            kind: ViolationKind::Normalization,
                            block: format!("party {} input {x} hidden tuple {h}", r.party),
                            magnitude: sum - 1.0,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InputData(format!("malformed model JSON: {e}")))
    }
}

pub fn save_model(model: &LocalModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LocalModel> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| Error::InputData(format!("cannot read {}: {e}", path.display())))?;
    LocalModel::from_json(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Negative,
    Normalization,
}

/// One broken probability invariant. `magnitude` is the offending value
/// for negativity and the signed deviation from 1 for normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub block: String,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::Negative => write!(f, "{}: negative value {:e}", self.block, self.magnitude),
            ViolationKind::Normalization => {
                write!(f, "{}: sums to 1 {:+e}", self.block, self.magnitude)
            }
        }
    }
}
