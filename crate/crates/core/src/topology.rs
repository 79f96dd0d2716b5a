//! Source/party wiring of a network scenario and the counting rules that
//! come with it (Collins–Gisin dimensions, hidden-variable cardinality
//! bounds, free-parameter counts).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RawTopology {
    outputs: Vec<usize>,
    inputs: Vec<usize>,
    wiring: Vec<Vec<usize>>,
}

/// Parties, independent sources and the bipartite source→party wiring.
///
/// Parties without a measurement choice carry a single input value
/// (`inputs[i] == 1`), so every scenario shares the same array layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology", into = "RawTopology")]
pub struct NetworkTopology {
    outputs: Vec<usize>,
    inputs: Vec<usize>,
    wiring: Vec<Vec<usize>>,
    party_sources: Vec<Vec<usize>>,
}

impl TryFrom<RawTopology> for NetworkTopology {
    type Error = Error;

    fn try_from(raw: RawTopology) -> Result<Self> {
        NetworkTopology::new(raw.outputs, raw.inputs, raw.wiring)
    }
}

impl From<NetworkTopology> for RawTopology {
    fn from(t: NetworkTopology) -> Self {
        RawTopology {
            outputs: t.outputs,
            inputs: t.inputs,
            wiring: t.wiring,
        }
    }
}

impl NetworkTopology {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InputData(format!("malformed topology JSON: {e}")))
    }

    pub fn new(outputs: Vec<usize>, inputs: Vec<usize>, wiring: Vec<Vec<usize>>) -> Result<Self> {
        let n = outputs.len();
        if n == 0 {
            return Err(Error::Structural("topology has no parties".into()));
        }
        if inputs.len() != n {
            return Err(Error::Structural(format!(
                "{} output cardinalities but {} input cardinalities",
                n,
                inputs.len()
            )));
        }
        if wiring.is_empty() {
            return Err(Error::Structural("topology has no sources".into()));
        }
        for (i, (&m, &inp)) in outputs.iter().zip(&inputs).enumerate() {
            if m < 2 {
                return Err(Error::Structural(format!(
                    "party {i} has output cardinality {m} (needs at least 2)"
                )));
            }
            if inp < 1 {
                return Err(Error::Structural(format!("party {i} has input cardinality 0")));
            }
        }
        let mut party_sources = vec![Vec::new(); n];
        for (s, parties) in wiring.iter().enumerate() {
            if parties.is_empty() {
                return Err(Error::Structural(format!("source {s} is not connected to any party")));
            }
            for w in parties.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Structural(format!(
                        "source {s} party list {parties:?} is not strictly increasing"
                    )));
                }
            }
            for &p in parties {
                if p >= n {
                    return Err(Error::Structural(format!(
                        "source {s} connects to party {p} but there are only {n} parties"
                    )));
                }
                party_sources[p].push(s);
            }
        }
        Ok(Self {
            outputs,
            inputs,
            wiring,
            party_sources,
        })
    }

    /// Three parties on a line, two sources: λ → {A, B}, μ → {B, C}.
    /// Binary inputs and outputs everywhere.
    pub fn bilocal() -> Self {
        Self::new(vec![2, 2, 2], vec![2, 2, 2], vec![vec![0, 1], vec![1, 2]]).expect("bilocal topology is valid")
    }

    /// Triangle without inputs. Sources α, β, γ (indices 0, 1, 2) connect
    /// {B, C}, {A, C} and {A, B} respectively.
    pub fn triangle(outputs: usize) -> Result<Self> {
        Self::new(vec![outputs; 3], vec![1; 3], vec![vec![1, 2], vec![0, 2], vec![0, 1]])
    }

    pub fn party_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn source_count(&self) -> usize {
        self.wiring.len()
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn wiring(&self) -> &[Vec<usize>] {
        &self.wiring
    }

    /// Sources feeding party `p`, in increasing source index.
    pub fn party_sources(&self, p: usize) -> &[usize] {
        &self.party_sources[p]
    }

    /// Number of entries of a behaviour table on this topology.
    pub fn behaviour_len(&self) -> usize {
        self.outputs.iter().chain(&self.inputs).product()
    }

    /// Upper bound on the cardinality of `source` needed to reproduce any
    /// network-local behaviour: the smaller of the Collins–Gisin dimension
    /// gap and the deterministic strategy counts of parties fed only by it.
    pub fn cardinality_upper_bound(&self, source: usize) -> Result<usize> {
        if source >= self.source_count() {
            return Err(Error::Structural(format!(
                "source index {source} out of range ({} sources)",
                self.source_count()
            )));
        }
        let connected = &self.wiring[source];
        let (mut out_rest, mut in_rest) = (Vec::new(), Vec::new());
        for p in 0..self.party_count() {
            if !connected.contains(&p) {
                out_rest.push(self.outputs[p]);
                in_rest.push(self.inputs[p]);
            }
        }
        let full = collins_gisin_dimension(&self.outputs, &self.inputs)?;
        let rest = if out_rest.is_empty() {
            0
        } else {
            collins_gisin_dimension(&out_rest, &in_rest)?
        };
        let mut bound = full - rest;
        for &p in connected {
            if self.party_sources[p].len() == 1 {
                let det = deterministic_strategies(self.outputs[p], self.inputs[p]);
                bound = bound.min(det);
            }
        }
        Ok(bound)
    }

    /// Number of free coordinates of a model with the given source
    /// cardinalities (one simplex coordinate dropped per block).
    pub fn num_free_parameters(&self, cardinalities: &[usize]) -> Result<usize> {
        self.check_cardinalities(cardinalities)?;
        let sources: usize = cardinalities.iter().map(|c| c - 1).sum();
        let parties: usize = (0..self.party_count())
            .map(|p| {
                let hidden: usize = self.party_sources[p].iter().map(|&s| cardinalities[s]).product();
                (self.outputs[p] - 1) * self.inputs[p] * hidden
            })
            .sum();
        Ok(sources + parties)
    }

    pub fn check_cardinalities(&self, cardinalities: &[usize]) -> Result<()> {
        if cardinalities.len() != self.source_count() {
            return Err(Error::Structural(format!(
                "{} cardinalities given for {} sources",
                cardinalities.len(),
                self.source_count()
            )));
        }
        if let Some(s) = cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::Structural(format!("source {s} has cardinality 0")));
        }
        Ok(())
    }
}

pub fn load_topology(path: impl AsRef<std::path::Path>) -> Result<NetworkTopology> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::InputData(format!("cannot read {}: {e}", path.display())))?;
    NetworkTopology::from_json(&text)
}

/// Dimension of the behaviour space of independent-looking parties in
/// Collins–Gisin coordinates: Π (M_i (m_i − 1) + 1) − 1.
pub fn collins_gisin_dimension(outputs: &[usize], inputs: &[usize]) -> Result<usize> {
    if outputs.is_empty() {
        return Err(Error::Structural("empty party list".into()));
    }
    if outputs.len() != inputs.len() {
        return Err(Error::Structural(format!(
            "{} output cardinalities but {} input cardinalities",
            outputs.len(),
            inputs.len()
        )));
    }
    if outputs.iter().chain(inputs).any(|&k| k == 0) {
        return Err(Error::Structural("cardinalities must be at least 1".into()));
    }
    let prod: usize = outputs.iter().zip(inputs).map(|(&m, &inp)| inp * (m - 1) + 1).product();
    Ok(prod - 1)
}

fn deterministic_strategies(outputs: usize, inputs: usize) -> usize {
    u32::try_from(inputs)
        .ok()
        .and_then(|e| outputs.checked_pow(e))
        .unwrap_or(usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collins_gisin_examples() {
        assert_eq!(collins_gisin_dimension(&[2], &[1]).unwrap(), 1);
        assert_eq!(collins_gisin_dimension(&[2, 2, 2], &[1, 1, 1]).unwrap(), 7);
        assert_eq!(collins_gisin_dimension(&[2, 2, 2], &[2, 2, 2]).unwrap(), 26);
        assert!(collins_gisin_dimension(&[], &[]).is_err());
    }

    #[test]
    fn cardinality_bounds_of_named_networks() {
        let bilocal = NetworkTopology::bilocal();
        assert_eq!(bilocal.cardinality_upper_bound(0).unwrap(), 4);
        assert_eq!(bilocal.cardinality_upper_bound(1).unwrap(), 4);
        let tri = NetworkTopology::triangle(2).unwrap();
        for s in 0..3 {
            assert_eq!(tri.cardinality_upper_bound(s).unwrap(), 6);
        }
        let tri4 = NetworkTopology::triangle(4).unwrap();
        for s in 0..3 {
            assert_eq!(tri4.cardinality_upper_bound(s).unwrap(), 60);
        }
        assert!(tri.cardinality_upper_bound(3).is_err());
    }

    #[test]
    fn free_parameter_counts() {
        let tri = NetworkTopology::triangle(2).unwrap();
        assert_eq!(tri.num_free_parameters(&[2, 2, 2]).unwrap(), 15);
        // sources 3 + 3; Alice 1·2·4, Bob 1·2·16, Charles 1·2·4
        assert_eq!(NetworkTopology::bilocal().num_free_parameters(&[4, 4]).unwrap(), 54);
        assert_eq!(tri.num_free_parameters(&[1, 1, 1]).unwrap(), 3);
        assert!(tri.num_free_parameters(&[2, 2]).is_err());
    }

    #[test]
    fn four_party_network_wiring() {
        // λ → {A, B, C}, μ → {B, D}
        let t = NetworkTopology::new(vec![2, 2, 2, 2], vec![2, 2, 2, 2], vec![vec![0, 1, 2], vec![1, 3]]).unwrap();
        assert_eq!(t.party_sources(1), &[0, 1]);
        assert_eq!(t.party_sources(3), &[1]);
        // full 80 − Dave 2 = 78, but Alice alone on λ has 2^2 strategies
        assert_eq!(t.cardinality_upper_bound(0).unwrap(), 4);
        assert_eq!(t.cardinality_upper_bound(1).unwrap(), 4);
    }

    #[test]
    fn rejects_bad_wiring() {
        assert!(NetworkTopology::new(vec![2, 2], vec![1, 1], vec![vec![]]).is_err());
        assert!(NetworkTopology::new(vec![2, 2], vec![1, 1], vec![vec![0, 2]]).is_err());
        assert!(NetworkTopology::new(vec![2, 2], vec![1, 1], vec![vec![1, 0]]).is_err());
        assert!(NetworkTopology::new(vec![1, 2], vec![1, 1], vec![vec![0, 1]]).is_err());
        assert!(NetworkTopology::new(vec![2, 2], vec![1], vec![vec![0, 1]]).is_err());
    }

    #[test]
    fn json_schema_round_trip() {
        let t = NetworkTopology::bilocal();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"outputs":[2,2,2],"inputs":[2,2,2],"wiring":[[0,1],[1,2]]}"#);
        let back: NetworkTopology = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"outputs":[2,2],"inputs":[1,1],"wiring":[[0,5]]}"#;
        assert!(serde_json::from_str::<NetworkTopology>(bad).is_err());
    }
}
