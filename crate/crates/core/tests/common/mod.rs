//! Extended-precision cost oracle shared by integration tests.
//!
//! The model is rebuilt block by block from a stored vector and the
//! behaviour is summed over every hidden tuple by brute force, all in
//! double-double arithmetic, so finite differences of the cost are limited
//! by truncation error rather than by rounding of the cost value.

#![allow(dead_code)]

use std::ops::{Add, Mul, Neg, Sub};

use netlocal::params::BlockOwner;
use netlocal::ParameterLayout;

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn renorm(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let u = Dd::renorm(s.hi, s.lo + t.hi);
        Dd::renorm(u.hi, u.lo + t.lo)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

/// Stored vector shifted by `delta` along coordinate `k`, held exactly.
pub fn shifted(stored: &[f64], k: usize, delta: f64) -> Vec<Dd> {
    let mut x: Vec<Dd> = stored.iter().map(|&v| Dd::from(v)).collect();
    x[k] = x[k] + Dd::from(delta);
    x
}

/// `Σ (p_model − p_target)²` for the stored point `x`.
pub fn cost_dd(x: &[Dd], layout: &ParameterLayout, target: &[f64]) -> Dd {
    let topo = layout.topology();
    let cards = layout.cardinalities();
    let (outs, ins) = (topo.outputs(), topo.inputs());
    let n = topo.party_count();

    // sources[s][value], responses[p][(x, local hidden)][output]
    let mut sources: Vec<Vec<Dd>> = cards.iter().map(|&c| vec![Dd::ZERO; c]).collect();
    let mut responses: Vec<Vec<Vec<Dd>>> = (0..n)
        .map(|p| {
            let h: usize = topo.party_sources(p).iter().map(|&s| cards[s]).product();
            vec![vec![Dd::ZERO; outs[p]]; ins[p] * h]
        })
        .collect();
    for b in layout.blocks() {
        let stored = &x[b.stored_range()];
        let mut last = Dd::ONE;
        let mut full: Vec<Dd> = Vec::with_capacity(b.len());
        for &v in stored {
            last = last - v;
            full.push(v);
        }
        full.push(last);
        match b.owner {
            BlockOwner::Source(s) => sources[s] = full,
            BlockOwner::Response { party, input, hidden } => {
                let h: usize = topo.party_sources(party).iter().map(|&s| cards[s]).product();
                responses[party][input * h + hidden] = full;
            }
        }
    }

    let n_hidden: usize = cards.iter().product();
    let n_out: usize = outs.iter().product();
    let n_in: usize = ins.iter().product();
    let mut acc = Dd::ZERO;
    for o in 0..n_out {
        let a = unravel(o, outs);
        for i in 0..n_in {
            let xs = unravel(i, ins);
            let mut p = Dd::ZERO;
            for hv in 0..n_hidden {
                let vals = unravel(hv, cards);
                let mut w = Dd::ONE;
                for (s, &v) in vals.iter().enumerate() {
                    w = w * sources[s][v];
                }
                for q in 0..n {
                    let ps = topo.party_sources(q);
                    let local = ps.iter().fold(0, |acc, &s| acc * cards[s] + vals[s]);
                    let h: usize = ps.iter().map(|&s| cards[s]).product();
                    w = w * responses[q][xs[q] * h + local][a[q]];
                }
                p = p + w;
            }
            let d = p - Dd::from(target[o * n_in + i]);
            acc = acc + d * d;
        }
    }
    acc
}

/// Central difference of the cost along stored coordinate `k`.
pub fn central_difference(stored: &[f64], k: usize, h: f64, layout: &ParameterLayout, target: &[f64]) -> f64 {
    let up = cost_dd(&shifted(stored, k, h), layout, target);
    let down = cost_dd(&shifted(stored, k, -h), layout, target);
    (up - down).to_f64() / (2.0 * h)
}

fn unravel(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for d in (0..dims.len()).rev() {
        out[d] = idx % dims[d];
        idx /= dims[d];
    }
    out
}
