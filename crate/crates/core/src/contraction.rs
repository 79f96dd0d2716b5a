//! Exact evaluation of a finite local model: the sum over all hidden-value
//! tuples of source weights times response entries, plus its Jacobian.
//!
//! Internally a model is a flat vector of all its probabilities ("full
//! coordinates"): source distributions in source order, followed by each
//! party's response array in row-major `[output, input, hidden…]` order.

use crate::behaviour::Behaviour;
use crate::error::{Error, Result};
use crate::model::{LocalModel, ResponseFunction, SourceDistribution};
use crate::topology::NetworkTopology;

/// Index tables for contracting models of one topology and one choice of
/// source cardinalities.
#[derive(Debug, Clone)]
pub struct Contraction {
    topology: NetworkTopology,
    cardinalities: Vec<usize>,
    source_offsets: Vec<usize>,
    party_offsets: Vec<usize>,
    /// Hidden tuples seen by each party.
    party_hidden: Vec<usize>,
    n_full: usize,
    n_entries: usize,
    /// `entry_ox[b * parties + q]` = `o_q * M_q + x_q` for behaviour entry `b`.
    entry_ox: Vec<usize>,
    n_tuples: usize,
    /// Per global hidden tuple, the value of every source.
    tuple_values: Vec<usize>,
    /// Per global hidden tuple, the flat hidden index of every party.
    tuple_party_hidden: Vec<usize>,
}

impl Contraction {
    pub fn new(topology: &NetworkTopology, cardinalities: &[usize]) -> Result<Self> {
        topology.check_cardinalities(cardinalities)?;
        let n = topology.party_count();
        let n_src = topology.source_count();

        let mut source_offsets = Vec::with_capacity(n_src);
        let mut off = 0;
        for &c in cardinalities {
            source_offsets.push(off);
            off += c;
        }
        let mut party_offsets = Vec::with_capacity(n);
        let mut party_hidden = Vec::with_capacity(n);
        for p in 0..n {
            let h: usize = topology.party_sources(p).iter().map(|&s| cardinalities[s]).product();
            party_offsets.push(off);
            party_hidden.push(h);
            off += topology.outputs()[p] * topology.inputs()[p] * h;
        }

        let n_entries = topology.behaviour_len();
        let probe = Behaviour::from_raw(
            topology.outputs().to_vec(),
            topology.inputs().to_vec(),
            vec![0.0; n_entries],
        )?;
        let mut entry_ox = Vec::with_capacity(n_entries * n);
        for b in 0..n_entries {
            let (outs, ins) = probe.unravel(b);
            for q in 0..n {
                entry_ox.push(outs[q] * topology.inputs()[q] + ins[q]);
            }
        }

        let n_tuples: usize = cardinalities.iter().product();
        let mut tuple_values = Vec::with_capacity(n_tuples * n_src);
        let mut tuple_party_hidden = Vec::with_capacity(n_tuples * n);
        let mut odometer = vec![0usize; n_src];
        for _ in 0..n_tuples {
            tuple_values.extend_from_slice(&odometer);
            for p in 0..n {
                let mut h = 0;
                for &s in topology.party_sources(p) {
                    h = h * cardinalities[s] + odometer[s];
                }
                tuple_party_hidden.push(h);
            }
            for s in (0..n_src).rev() {
                odometer[s] += 1;
                if odometer[s] < cardinalities[s] {
                    break;
                }
                odometer[s] = 0;
            }
        }

        Ok(Self {
            topology: topology.clone(),
            cardinalities: cardinalities.to_vec(),
            source_offsets,
            party_offsets,
            party_hidden,
            n_full: off,
            n_entries,
            entry_ox,
            n_tuples,
            tuple_values,
            tuple_party_hidden,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Length of the full-coordinate vector.
    pub fn n_full(&self) -> usize {
        self.n_full
    }

    /// Number of behaviour entries.
    pub fn n_entries(&self) -> usize {
        self.n_entries
    }

    pub fn source_offset(&self, s: usize) -> usize {
        self.source_offsets[s]
    }

    pub fn party_offset(&self, p: usize) -> usize {
        self.party_offsets[p]
    }

    pub fn party_hidden(&self, p: usize) -> usize {
        self.party_hidden[p]
    }

    /// Behaviour table of the model stored in `theta`.
    pub fn behaviour_into(&self, theta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.n_full);
        debug_assert_eq!(out.len(), self.n_entries);
        let n = self.topology.party_count();
        let n_src = self.cardinalities.len();
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut base = vec![0usize; n];
        for t in 0..self.n_tuples {
            let vals = &self.tuple_values[t * n_src..(t + 1) * n_src];
            let mut w = 1.0;
            for (s, &h) in vals.iter().enumerate() {
                w *= theta[self.source_offsets[s] + h];
            }
            if w == 0.0 {
                continue;
            }
            self.fill_bases(t, &mut base);
            for (b, slot) in out.iter_mut().enumerate() {
                let ox = &self.entry_ox[b * n..(b + 1) * n];
                // same association as `jacobian_into`, so both paths agree bitwise
                let mut k = 1.0;
                for q in 0..n {
                    k *= theta[base[q] + ox[q] * self.party_hidden[q]];
                }
                *slot += w * k;
            }
        }
    }

    /// Behaviour table and its Jacobian with respect to every full
    /// coordinate, row-major `[entry, coordinate]`.
    pub fn jacobian_into(&self, theta: &[f64], out: &mut [f64], jac: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.n_full);
        debug_assert_eq!(jac.len(), self.n_entries * self.n_full);
        let n = self.topology.party_count();
        let n_src = self.cardinalities.len();
        let nf = self.n_full;
        out.iter_mut().for_each(|x| *x = 0.0);
        jac.iter_mut().for_each(|x| *x = 0.0);

        let mut base = vec![0usize; n];
        let mut sp = vec![0.0; n_src];
        let mut w_excl = vec![0.0; n_src];
        let mut r = vec![0.0; n];
        let mut r_excl = vec![0.0; n];
        for t in 0..self.n_tuples {
            let vals = &self.tuple_values[t * n_src..(t + 1) * n_src];
            for s in 0..n_src {
                sp[s] = theta[self.source_offsets[s] + vals[s]];
            }
            let w = exclusive_products(&sp, &mut w_excl);
            self.fill_bases(t, &mut base);
            for b in 0..self.n_entries {
                let ox = &self.entry_ox[b * n..(b + 1) * n];
                for q in 0..n {
                    r[q] = theta[base[q] + ox[q] * self.party_hidden[q]];
                }
                let k = exclusive_products(&r, &mut r_excl);
                out[b] += w * k;
                let row = &mut jac[b * nf..(b + 1) * nf];
                for s in 0..n_src {
                    row[self.source_offsets[s] + vals[s]] += w_excl[s] * k;
                }
                for q in 0..n {
                    row[base[q] + ox[q] * self.party_hidden[q]] += w * r_excl[q];
                }
            }
        }
    }

    /// Offset of party `q`'s entry `(0, 0, hidden tuple of t)`.
    fn fill_bases(&self, t: usize, base: &mut [usize]) {
        let n = base.len();
        let ph = &self.tuple_party_hidden[t * n..(t + 1) * n];
        for q in 0..n {
            base[q] = self.party_offsets[q] + ph[q];
        }
    }

    /// Full-coordinate vector of a model with matching shapes.
    pub fn model_to_full(&self, model: &LocalModel) -> Result<Vec<f64>> {
        self.check_model(model)?;
        let mut theta = Vec::with_capacity(self.n_full);
        for s in model.sources() {
            theta.extend_from_slice(&s.probabilities);
        }
        for r in model.responses() {
            theta.extend_from_slice(&r.data);
        }
        Ok(theta)
    }

    pub fn full_to_model(&self, theta: &[f64]) -> Result<LocalModel> {
        if theta.len() != self.n_full {
            return Err(Error::Structural(format!(
                "full coordinate vector has {} entries, expected {}",
                theta.len(),
                self.n_full
            )));
        }
        let sources = self
            .cardinalities
            .iter()
            .enumerate()
            .map(|(s, &c)| {
                let o = self.source_offsets[s];
                SourceDistribution::new(theta[o..o + c].to_vec())
            })
            .collect();
        let responses = (0..self.topology.party_count())
            .map(|p| {
                let mut shape = vec![self.topology.outputs()[p], self.topology.inputs()[p]];
                shape.extend(self.topology.party_sources(p).iter().map(|&s| self.cardinalities[s]));
                let len: usize = shape.iter().product();
                let o = self.party_offsets[p];
                ResponseFunction {
                    party: p,
                    shape,
                    data: theta[o..o + len].to_vec(),
                }
            })
            .collect();
        LocalModel::new(self.topology.clone(), sources, responses)
    }

    fn check_model(&self, model: &LocalModel) -> Result<()> {
        if model.topology() != &self.topology {
            return Err(Error::Structural(
                "model topology differs from contraction topology".into(),
            ));
        }
        let cards = model.cardinalities();
        if let Some(s) = (0..cards.len()).find(|&s| cards[s] != self.cardinalities[s]) {
            return Err(Error::Structural(format!(
                "source {s} has cardinality {}, expected {}",
                cards[s], self.cardinalities[s]
            )));
        }
        Ok(())
    }
}

/// Writes Π_{j≠i} x_j into `excl[i]` and returns Π x_j, without division.
fn exclusive_products(x: &[f64], excl: &mut [f64]) -> f64 {
    let mut acc = 1.0;
    for (e, &v) in excl.iter_mut().zip(x) {
        *e = acc;
        acc *= v;
    }
    let total = acc;
    let mut acc = 1.0;
    for (e, &v) in excl.iter_mut().zip(x).rev() {
        *e *= acc;
        acc *= v;
    }
    total
}

/// Behaviour p(outputs | inputs) of a local model.
pub fn evaluate_model(model: &LocalModel) -> Result<Behaviour> {
    let topo = model.topology();
    let c = Contraction::new(topo, &model.cardinalities())?;
    let theta = c.model_to_full(model)?;
    let mut data = vec![0.0; c.n_entries()];
    c.behaviour_into(&theta, &mut data);
    Behaviour::from_raw(topo.outputs().to_vec(), topo.inputs().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusive_products_match_direct() {
        let x = [2.0, 0.0, 3.0, 5.0];
        let mut e = [0.0; 4];
        assert_eq!(exclusive_products(&x, &mut e), 0.0);
        assert_eq!(e, [0.0, 30.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_triangle_gives_uniform_table() {
        let m = LocalModel::uniform(NetworkTopology::triangle(2).unwrap(), &[2, 2, 2]).unwrap();
        let b = evaluate_model(&m).unwrap();
        assert_eq!(b.len(), 8);
        for &p in b.data() {
            assert!((p - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_behaviour_and_finite_differences() {
        let topo = NetworkTopology::bilocal();
        let c = Contraction::new(&topo, &[2, 3]).unwrap();
        let theta: Vec<f64> = (0..c.n_full()).map(|i| 0.1 + ((i * 37) % 11) as f64 / 13.0).collect();
        let mut b1 = vec![0.0; c.n_entries()];
        let mut b2 = vec![0.0; c.n_entries()];
        let mut jac = vec![0.0; c.n_entries() * c.n_full()];
        c.behaviour_into(&theta, &mut b1);
        c.jacobian_into(&theta, &mut b2, &mut jac);
        assert_eq!(b1, b2);
        // the table is multilinear, so central differences are exact up to rounding
        let h = 1e-4;
        for j in 0..c.n_full() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let (mut bp, mut bm) = (vec![0.0; c.n_entries()], vec![0.0; c.n_entries()]);
            c.behaviour_into(&tp, &mut bp);
            c.behaviour_into(&tm, &mut bm);
            for b in 0..c.n_entries() {
                let fd = (bp[b] - bm[b]) / (2.0 * h);
                assert!((fd - jac[b * c.n_full() + j]).abs() < 1e-9);
            }
        }
    }
}
