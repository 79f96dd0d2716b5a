use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{json, NORMALIZATION_TOL};

/// Dense conditional probability table p(outputs | inputs).
///
/// Shape is `[m_1, …, m_n, M_1, …, M_n]` in row-major order, so the flat
/// index is `output_index * input_tuples + input_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behaviour {
    outputs: Vec<usize>,
    inputs: Vec<usize>,
    data: Vec<f64>,
}

impl Behaviour {
    /// Builds a behaviour and checks nonnegativity and per-input
    /// normalization.
    pub fn new(outputs: Vec<usize>, inputs: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let b = Self::from_raw(outputs, inputs, data)?;
        b.check()?;
        Ok(b)
    }

    /// Shape checks only; used for intermediate tables such as affine
    /// combinations that are checked separately.
    pub(crate) fn from_raw(outputs: Vec<usize>, inputs: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if outputs.is_empty() || outputs.len() != inputs.len() {
            return Err(Error::Structural(format!(
                "behaviour needs one output and one input cardinality per party (got {} and {})",
                outputs.len(),
                inputs.len()
            )));
        }
        if outputs.iter().chain(&inputs).any(|&k| k == 0) {
            return Err(Error::Structural("zero cardinality in behaviour shape".into()));
        }
        let len: usize = outputs.iter().chain(&inputs).product();
        if data.len() != len {
            return Err(Error::Structural(format!(
                "behaviour of shape {outputs:?}|{inputs:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { outputs, inputs, data })
    }

    pub fn uniform(outputs: Vec<usize>, inputs: Vec<usize>) -> Result<Self> {
        let n_out: usize = outputs.iter().product();
        let len = n_out * inputs.iter().product::<usize>();
        Self::new(outputs, inputs, vec![1.0 / n_out as f64; len])
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn party_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn output_tuples(&self) -> usize {
        self.outputs.iter().product()
    }

    pub fn input_tuples(&self) -> usize {
        self.inputs.iter().product()
    }

    /// Flat index of `p(outs | ins)`.
    pub fn index(&self, outs: &[usize], ins: &[usize]) -> usize {
        debug_assert_eq!(outs.len(), self.party_count());
        debug_assert_eq!(ins.len(), self.party_count());
        let mut idx = 0;
        for (&o, &m) in outs.iter().zip(&self.outputs) {
            debug_assert!(o < m);
            idx = idx * m + o;
        }
        for (&x, &m) in ins.iter().zip(&self.inputs) {
            debug_assert!(x < m);
            idx = idx * m + x;
        }
        idx
    }

    pub fn get(&self, outs: &[usize], ins: &[usize]) -> f64 {
        self.data[self.index(outs, ins)]
    }

    /// Inverse of [`Behaviour::index`]: `(outputs, inputs)` of a flat index.
    pub fn unravel(&self, mut idx: usize) -> (Vec<usize>, Vec<usize>) {
        let n = self.party_count();
        let mut outs = vec![0; n];
        let mut ins = vec![0; n];
        for p in (0..n).rev() {
            ins[p] = idx % self.inputs[p];
            idx /= self.inputs[p];
        }
        for p in (0..n).rev() {
            outs[p] = idx % self.outputs[p];
            idx /= self.outputs[p];
        }
        (outs, ins)
    }

    pub fn same_shape(&self, other: &Behaviour) -> bool {
        self.outputs == other.outputs && self.inputs == other.inputs
    }

    /// Nonnegativity and per-input normalization within the behaviour
    /// tolerance.
    pub fn check(&self) -> Result<()> {
        if let Some((i, &x)) = self.data.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::InputData(format!(
                "behaviour entry {i} is {x} (must be a finite nonnegative probability)"
            )));
        }
        for (x, s) in self.normalization_sums().into_iter().enumerate() {
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InputData(format!(
                    "outputs for input tuple {x} sum to {s}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// Sum over output tuples for each input tuple.
    pub fn normalization_sums(&self) -> Vec<f64> {
        let n_in = self.input_tuples();
        let mut sums = vec![0.0; n_in];
        for (i, &p) in self.data.iter().enumerate() {
            sums[i % n_in] += p;
        }
        sums
    }

    /// Σ (self − other)² over all entries.
    pub fn squared_distance(&self, other: &Behaviour) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Root mean square difference per entry.
    pub fn rmse(&self, other: &Behaviour) -> Result<f64> {
        Ok((self.squared_distance(other)? / self.len() as f64).sqrt())
    }

    pub fn max_abs_diff(&self, other: &Behaviour) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn require_same_shape(&self, other: &Behaviour) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Structural(format!(
                "behaviour shapes differ: {:?}|{:?} vs {:?}|{:?}",
                self.outputs, self.inputs, other.outputs, other.inputs
            )))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            outputs: Vec<usize>,
            inputs: Vec<usize>,
            data: Vec<f64>,
        }
        let raw: Raw =
            serde_json::from_str(s).map_err(|e| Error::InputData(format!("malformed behaviour JSON: {e}")))?;
        Self::from_raw(raw.outputs, raw.inputs, raw.data)
            .map_err(|e| Error::InputData(e.to_string()))
            .and_then(|b| b.check().map(|_| b))
    }
}

pub fn save_behaviour(b: &Behaviour, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, b.to_json()?)?;
    Ok(())
}

pub fn load_behaviour(path: impl AsRef<Path>) -> Result<Behaviour> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| Error::InputData(format!("cannot read {}: {e}", path.display())))?;
    Behaviour::from_json(&text)
}
