//! Matrix exponentials of sparse Metzler matrices by uniformization.
//!
//! A matrix `M` with nonnegative off-diagonal entries is written as
//! `M = Λ(Q - I)` with `Q = I + M/Λ` entrywise nonnegative, so that
//! `exp(M) v = Σ_k Poisson(Λ; k) Q^k v` is a positive combination of
//! positive operators. Long intervals are split so that each piece has
//! Poisson parameter at most [`MAX_POISSON`].

use serde::{Deserialize, Serialize};

/// Largest Poisson parameter used in a single piece.
pub const MAX_POISSON: f64 = 30.0;
/// Truncation threshold on the remaining Poisson mass.
const TAIL: f64 = 1e-16;

/// Sparse matrix with nonnegative off-diagonal part and arbitrary diagonal.
#[derive(Clone, Debug, Default)]
pub struct Metzler {
    /// `(column, value)` per row, values ≥ 0, no diagonal entries.
    pub offdiag: Vec<Vec<(usize, f64)>>,
    pub diag: Vec<f64>,
}

/// Work done by one or more exponential applications.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpStats {
    /// Number of uniformization pieces.
    pub substeps: usize,
    /// Largest Poisson truncation order used.
    pub max_order: usize,
}

impl ExpStats {
    pub fn absorb(&mut self, other: ExpStats) {
        self.substeps += other.substeps;
        self.max_order = self.max_order.max(other.max_order);
    }
}

impl Metzler {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Generator of a reversible chain: rates `c(x,y)/m(x)` from the edge list.
    pub fn from_rates(n: usize, edges: &[(usize, usize)], rates: &[[f64; 2]]) -> Metzler {
        let mut offdiag = vec![Vec::new(); n];
        let mut diag = vec![0.0; n];
        for (&(a, b), r) in edges.iter().zip(rates) {
            if r[0] > 0.0 {
                offdiag[a].push((b, r[0]));
                diag[a] -= r[0];
            }
            if r[1] > 0.0 {
                offdiag[b].push((a, r[1]));
                diag[b] -= r[1];
            }
        }
        Metzler { offdiag, diag }
    }

    /// `M · scale`.
    pub fn scaled(mut self, scale: f64) -> Metzler {
        for row in &mut self.offdiag {
            for (_, v) in row.iter_mut() {
                *v *= scale;
            }
        }
        for d in &mut self.diag {
            *d *= scale;
        }
        self
    }

    /// `M - diag(shift)`.
    pub fn shifted(mut self, shift: &[f64]) -> Metzler {
        for (d, s) in self.diag.iter_mut().zip(shift) {
            *d -= s;
        }
        self
    }

    fn apply_q(&self, lambda: f64, v: &[f64], out: &mut [f64]) {
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = (1.0 + self.diag[x] / lambda) * v[x];
            for &(y, w) in &self.offdiag[x] {
                acc += w / lambda * v[y];
            }
            *o = acc;
        }
    }

    /// Overwrites `v` with `exp(M) v`.
    pub fn exp_apply(&self, v: &mut [f64]) -> ExpStats {
        // Λ must dominate every negative diagonal entry; the row sums keep it
        // away from zero whenever there is any off-diagonal mass.
        let lambda_total = self
            .diag
            .iter()
            .zip(&self.offdiag)
            .fold(0.0_f64, |acc, (d, row)| {
                let out: f64 = row.iter().map(|(_, w)| w).sum();
                acc.max(-d).max(out)
            });
        if lambda_total == 0.0 {
            for (x, val) in v.iter_mut().enumerate() {
                *val *= self.diag[x].exp();
            }
            return ExpStats {
                substeps: 1,
                max_order: 0,
            };
        }
        let pieces = (lambda_total / MAX_POISSON).ceil().max(1.0) as usize;
        let lambda = lambda_total / pieces as f64;
        let piece = self.clone().scaled(1.0 / pieces as f64);
        let weights = poisson_weights(lambda);
        let order = weights.len() - 1;
        let n = v.len();
        let mut term = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut acc = vec![0.0; n];
        for _ in 0..pieces {
            term.copy_from_slice(v);
            for (a, t) in acc.iter_mut().zip(&term) {
                *a = weights[0] * t;
            }
            for w in &weights[1..] {
                piece.apply_q(lambda, &term, &mut next);
                std::mem::swap(&mut term, &mut next);
                for (a, t) in acc.iter_mut().zip(&term) {
                    *a += w * t;
                }
            }
            v.copy_from_slice(&acc);
        }
        ExpStats {
            substeps: pieces,
            max_order: order,
        }
    }
}

/// Poisson(λ) probabilities up to the point where the remaining mass is
/// below the tail threshold, renormalized to sum to one.
fn poisson_weights(lambda: f64) -> Vec<f64> {
    let mut w = vec![(-lambda).exp()];
    let mut total = w[0];
    let mut k = 0usize;
    while 1.0 - total > TAIL && k < 10_000 {
        k += 1;
        let next = w[k - 1] * lambda / k as f64;
        w.push(next);
        total += next;
        if k as f64 > lambda && next < TAIL * 1e-3 {
            break;
        }
    }
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}
