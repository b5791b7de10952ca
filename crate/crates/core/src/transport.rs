//! Optimal transport between probability measures on the state set.
//!
//! The transportation problem is solved exactly by the primal transportation
//! simplex (least-cost start, row/column potentials, block pricing and
//! pivoting along the unique cycle of the basis tree).

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, ProbabilityMeasure};
use crate::flow::FlowSpec;
use crate::propagator::dual_on_measures_index;
use crate::report::{CheckReport, Witness};

/// Marginal balance tolerance.
pub const MARGINAL_TOL: f64 = 1e-10;

/// An optimal coupling and its cost.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportPlan {
    pub coupling: DMatrix<f64>,
    /// `Σ coupling(x,y) d(x,y)^p`.
    pub cost: f64,
    pub p: u32,
    pub source: ProbabilityMeasure,
    pub target: ProbabilityMeasure,
}

impl TransportPlan {
    /// `cost^{1/p}`.
    pub fn distance(&self) -> f64 {
        self.cost.max(0.0).powf(1.0 / self.p as f64)
    }

    /// Writes the coupling as a CSV matrix.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.coupling.nrows() {
            w.write_record(self.coupling.row(i).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves `min Σ π_ij c_ij` over couplings of `a` and `b` (equal totals).
/// Returns the full `a.len() × b.len()` coupling.
pub fn transportation_simplex(a: &[f64], b: &[f64], cost: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ta: f64 = a.iter().sum();
    let tb: f64 = b.iter().sum();
    if (ta - tb).abs() > MARGINAL_TOL {
        return Err(Error::Marginals(ta, tb));
    }
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let mut full = DMatrix::zeros(a.len(), b.len());
    if rows.is_empty() || cols.is_empty() {
        return Ok(full);
    }
    let ra: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let mut cb: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    // absorb the rounding imbalance into the last column
    let last = cb.len() - 1;
    cb[last] += ra.iter().sum::<f64>() - cb.iter().sum::<f64>();
    if cb[last] < 0.0 {
        cb[last] = 0.0;
    }
    let c = DMatrix::from_fn(rows.len(), cols.len(), |i, j| cost[(rows[i], cols[j])]);
    let x = Simplex::new(&ra, &cb, c).solve()?;
    for (i, &ri) in rows.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            full[(ri, cj)] = x[(i, j)];
        }
    }
    Ok(full)
}

struct Simplex {
    m: usize,
    n: usize,
    /// Row-major costs.
    cost: Vec<f64>,
    /// Row-major flows.
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Basis tree adjacency: rows are nodes `0..m`, columns `m..m+n`.
    adj: Vec<Vec<usize>>,
}

impl Simplex {
    fn new(a: &[f64], b: &[f64], cost: DMatrix<f64>) -> Simplex {
        let (m, n) = (a.len(), b.len());
        let cost: Vec<f64> = (0..m * n).map(|k| cost[(k / n, k % n)]).collect();
        let mut flow = vec![0.0; m * n];
        let mut basic = vec![false; m * n];
        let mut adj = vec![Vec::new(); m + n];
        let (mut sa, mut sb) = (a.to_vec(), b.to_vec());
        // Least-cost start: cells in increasing cost order, each allocation
        // closing exactly one line (the last closes both), which leaves a
        // spanning tree of m + n - 1 cells.
        let mut order: Vec<usize> = (0..m * n).collect();
        order.sort_by(|&p, &q| cost[p].total_cmp(&cost[q]).then(p.cmp(&q)));
        let mut row_open = vec![true; m];
        let mut col_open = vec![true; n];
        let (mut rows_left, mut cols_left) = (m, n);
        for k in order {
            let (i, j) = (k / n, k % n);
            if !row_open[i] || !col_open[j] {
                continue;
            }
            let q = sa[i].min(sb[j]).max(0.0);
            flow[k] = q;
            basic[k] = true;
            adj[i].push(m + j);
            adj[m + j].push(i);
            sa[i] -= q;
            sb[j] -= q;
            if rows_left == 1 && cols_left == 1 {
                break;
            }
            if (sa[i] <= sb[j] && rows_left > 1) || cols_left == 1 {
                row_open[i] = false;
                rows_left -= 1;
            } else {
                col_open[j] = false;
                cols_left -= 1;
            }
        }
        Simplex {
            m,
            n,
            cost,
            flow,
            basic,
            adj,
        }
    }

    /// Potentials with `u[0] = 0` and `u_i + v_j = c_ij` on the basis.
    fn potentials(&self, pot: &mut [f64], queue: &mut VecDeque<usize>) {
        let m = self.m;
        pot.iter_mut().for_each(|p| *p = f64::NAN);
        pot[0] = 0.0;
        queue.clear();
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &next in &self.adj[node] {
                if pot[next].is_nan() {
                    let c = if node < m {
                        self.cost[node * self.n + (next - m)]
                    } else {
                        self.cost[next * self.n + (node - m)]
                    };
                    pot[next] = c - pot[node];
                    queue.push_back(next);
                }
            }
        }
    }

    /// Tree path from row node `i` to column node `m + j`.
    fn path(&self, i: usize, j: usize, parent: &mut [usize], queue: &mut VecDeque<usize>) -> Vec<usize> {
        let target = self.m + j;
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        queue.clear();
        parent[i] = i;
        queue.push_back(i);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &next in &self.adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut path = vec![target];
        let mut node = target;
        while node != i {
            node = parent[node];
            path.push(node);
        }
        path.reverse();
        path
    }

    /// Component of `start` into `out`; false when it holds the root node.
    fn collect(&self, start: usize, out: &mut Vec<usize>, seen: &mut [bool], queue: &mut VecDeque<usize>) -> bool {
        for &x in out.iter() {
            seen[x] = false;
        }
        out.clear();
        queue.clear();
        seen[start] = true;
        queue.push_back(start);
        let mut rootless = true;
        while let Some(node) = queue.pop_front() {
            out.push(node);
            rootless &= node != 0;
            for &next in &self.adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        rootless
    }

    fn unlink(&mut self, a: usize, b: usize) {
        for (x, y) in [(a, b), (b, a)] {
            let pos = self.adj[x].iter().position(|&z| z == y).expect("edge in basis tree");
            self.adj[x].swap_remove(pos);
        }
    }

    fn solve(mut self) -> Result<DMatrix<f64>> {
        let (m, n) = (self.m, self.n);
        let scale = self.cost.iter().fold(0.0_f64, |a, c| a.max(c.abs())).max(1e-300);
        let cap = 50 * (m + n) * (m + n) + 1000;
        // block pricing: scan cells cyclically, entering the most negative
        // reduced cost of the first block that has one
        let total = m * n;
        let block = ((total as f64).sqrt().ceil() as usize).max(1);
        let mut next = 0;
        let mut pot = vec![0.0; m + n];
        let mut parent = vec![0; m + n];
        let mut queue = VecDeque::with_capacity(m + n);
        let mut seen = vec![false; m + n];
        let mut component = Vec::with_capacity(m + n);
        self.potentials(&mut pot, &mut queue);
        for _ in 0..cap {
            let mut best = (-1e-12 * scale, None);
            let mut k = next;
            for scanned in 1..=total {
                if !self.basic[k] {
                    let (i, j) = (k / n, k % n);
                    let r = self.cost[k] - pot[i] - pot[m + j];
                    if r < best.0 {
                        best = (r, Some((i, j)));
                    }
                }
                k = if k + 1 == total { 0 } else { k + 1 };
                if scanned % block == 0 && best.1.is_some() {
                    break;
                }
            }
            next = k;
            let (r, Some((ei, ej))) = best else {
                return Ok(DMatrix::from_fn(m, n, |i, j| self.flow[i * n + j]));
            };
            let path = self.path(ei, ej, &mut parent, &mut queue);
            // path = [row ei, col, row, ..., col ej]; cells along it, walked
            // back from ej, alternate -, +, -, ...
            let cells: Vec<usize> = path
                .windows(2)
                .map(|w| {
                    let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
                    a * n + (b - m)
                })
                .collect();
            let mut theta = f64::INFINITY;
            let mut leaving = None;
            for (k, &cell) in cells.iter().rev().enumerate() {
                if k % 2 == 0 && self.flow[cell] < theta {
                    theta = self.flow[cell];
                    leaving = Some(cell);
                }
            }
            let leaving = leaving.ok_or_else(|| Error::Solver("empty pivot cycle".into()))?;
            let entering = ei * n + ej;
            self.flow[entering] = theta;
            for (k, &cell) in cells.iter().rev().enumerate() {
                if k % 2 == 0 {
                    self.flow[cell] = (self.flow[cell] - theta).max(0.0);
                } else {
                    self.flow[cell] += theta;
                }
            }
            self.flow[leaving] = 0.0;
            self.basic[leaving] = false;
            self.basic[entering] = true;
            self.unlink(leaving / n, m + leaving % n);
            // only the part cut off from the root node changes potential
            let moved_row = !self.collect(m + ej, &mut component, &mut seen, &mut queue);
            if moved_row {
                self.collect(ei, &mut component, &mut seen, &mut queue);
            }
            let shift = if moved_row { r } else { -r };
            for &node in &component {
                pot[node] += if node < m { shift } else { -shift };
            }
            self.adj[ei].push(m + ej);
            self.adj[m + ej].push(ei);
        }
        Err(Error::Solver(format!("no convergence after {cap} pivots")))
    }
}

/// Entropically regularized transport by Sinkhorn scaling. Biased by the
/// regularization; intended for large state spaces only.
pub fn sinkhorn(a: &[f64], b: &[f64], cost: &DMatrix<f64>, epsilon: f64, iterations: usize) -> DMatrix<f64> {
    let kernel = cost.map(|c| (-c / epsilon).exp());
    let mut u = vec![1.0; a.len()];
    let mut v = vec![1.0; b.len()];
    for _ in 0..iterations {
        for i in 0..a.len() {
            let s: f64 = (0..b.len()).map(|j| kernel[(i, j)] * v[j]).sum();
            u[i] = if s > 0.0 { a[i] / s } else { 0.0 };
        }
        for j in 0..b.len() {
            let s: f64 = (0..a.len()).map(|i| kernel[(i, j)] * u[i]).sum();
            v[j] = if s > 0.0 { b[j] / s } else { 0.0 };
        }
    }
    DMatrix::from_fn(a.len(), b.len(), |i, j| u[i] * kernel[(i, j)] * v[j])
}

/// Exact optimal plan for the cost `d^p` with a given distance matrix.
pub fn wasserstein_with_metric(d: &DMatrix<f64>, mu: &ProbabilityMeasure, nu: &ProbabilityMeasure, p: u32) -> Result<TransportPlan> {
    if !(p == 1 || p == 2) {
        return Err(Error::Invalid(format!("transport exponent must be 1 or 2, got {p}")));
    }
    let n = d.nrows();
    for m in [mu, nu] {
        if m.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: m.len(),
            });
        }
    }
    let cost = d.map(|v| v.powi(p as i32));
    let coupling = transportation_simplex(mu.weights(), nu.weights(), &cost)?;
    let total = coupling.component_mul(&cost).sum();
    Ok(TransportPlan {
        coupling,
        cost: total,
        p,
        source: mu.clone(),
        target: nu.clone(),
    })
}

/// Optimal plan under `d_t` for the cost `d_t^p`.
pub fn wasserstein(flow: &FlowSpec, t: f64, mu: &ProbabilityMeasure, nu: &ProbabilityMeasure, p: u32) -> Result<TransportPlan> {
    let k = flow.grid().index_of(t)?;
    wasserstein_with_metric(&flow.metric_matrix(k), mu, nu, p)
}

/// `Q_r φ(x) = min_y [φ(y) + d_t(x,y)² / (2r)]`.
pub fn hopf_lax(flow: &FlowSpec, t: f64, r: f64, phi: &[f64]) -> Result<Field> {
    let k = flow.grid().index_of(t)?;
    hopf_lax_with_metric(&flow.metric_matrix(k), r, phi)
}

pub fn hopf_lax_with_metric(d: &DMatrix<f64>, r: f64, phi: &[f64]) -> Result<Field> {
    if !(r > 0.0) {
        return Err(Error::Invalid(format!("Hopf-Lax time must be positive, got {r}")));
    }
    let n = d.nrows();
    if phi.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: phi.len(),
        });
    }
    Ok(Field::from_raw(
        (0..n)
            .map(|x| {
                (0..n)
                    .map(|y| phi[y] + d[(x, y)] * d[(x, y)] / (2.0 * r))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect(),
    ))
}

/// `S_t(μ) = Σ μ(x) log(μ(x) / m_t(x))` with `0 log 0 = 0`.
pub fn entropy(flow: &FlowSpec, t: f64, mu: &ProbabilityMeasure) -> Result<f64> {
    let k = flow.grid().index_of(t)?;
    let m = flow.measure_weights(k);
    if mu.len() != m.len() {
        return Err(Error::Shape {
            expected: m.len(),
            got: mu.len(),
        });
    }
    Ok(mu
        .weights()
        .iter()
        .zip(&m)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, mt)| w * (w / mt).ln())
        .sum())
}

/// Margin `W_t(μ,ν) - W_s(P̂_{t,s}μ, P̂_{t,s}ν)` of the transport contraction.
pub fn check_e2(flow: &FlowSpec, s: f64, t: f64, mu: &ProbabilityMeasure, nu: &ProbabilityMeasure, p: u32, tol: f64) -> Result<CheckReport> {
    let (ks, kt) = flow.grid().pair(s, t)?;
    let margin = e2_margin(flow, ks, kt, mu, nu, p)?;
    Ok(CheckReport::new(
        "E2",
        margin,
        Witness {
            s: Some(s),
            t: Some(t),
            ..Witness::default()
        },
        tol,
        format!("single pair, W{p}"),
        1,
    ))
}

pub(crate) fn e2_margin(flow: &FlowSpec, ks: usize, kt: usize, mu: &ProbabilityMeasure, nu: &ProbabilityMeasure, p: u32) -> Result<f64> {
    let wt = wasserstein_with_metric(&flow.metric_matrix(kt), mu, nu, p)?.distance();
    let pmu = dual_on_measures_index(flow, kt, ks, mu)?.measure;
    let pnu = dual_on_measures_index(flow, kt, ks, nu)?.measure;
    let ws = wasserstein_with_metric(&flow.metric_matrix(ks), &pmu, &pnu, p)?.distance();
    Ok(wt - ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_pair_is_distance() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.5, 1.0, 0.0, 1.5, 2.5, 1.5, 0.0]);
        let plan = wasserstein_with_metric(&d, &ProbabilityMeasure::dirac(3, 0), &ProbabilityMeasure::dirac(3, 2), 2).unwrap();
        assert!((plan.distance() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn identical_marginals_cost_nothing() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        let mu = ProbabilityMeasure::new(vec![0.2, 0.5, 0.3]).unwrap();
        let plan = wasserstein_with_metric(&d, &mu, &mu, 1).unwrap();
        assert!(plan.cost.abs() < 1e-15);
        for i in 0..3 {
            assert!((plan.coupling[(i, i)] - mu.weights()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn unbalanced_marginals_rejected() {
        let c = DMatrix::zeros(2, 2);
        assert!(matches!(
            transportation_simplex(&[0.5, 0.5], &[0.5, 0.4], &c),
            Err(Error::Marginals(..))
        ));
    }

    #[test]
    fn hopf_lax_two_points() {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let q = hopf_lax_with_metric(&d, 1.0, &[0.0, 1.0]).unwrap();
        assert_eq!(q.values(), &[0.0, 0.5]);
    }

    #[test]
    fn line_transport_matches_monotone_rearrangement() {
        // on the line with p = 1 the cost is the L1 distance of the CDFs
        let n = 6;
        let d = DMatrix::from_fn(n, n, |i, j| (i as f64 - j as f64).abs());
        let mu = ProbabilityMeasure::normalized(vec![3.0, 0.0, 1.0, 2.0, 0.5, 1.5]).unwrap();
        let nu = ProbabilityMeasure::normalized(vec![0.0, 2.0, 2.0, 1.0, 3.0, 0.0]).unwrap();
        let plan = wasserstein_with_metric(&d, &mu, &nu, 1).unwrap();
        let (mut fa, mut fb, mut l1) = (0.0, 0.0, 0.0);
        for i in 0..n - 1 {
            fa += mu.weights()[i];
            fb += nu.weights()[i];
            l1 += (fa - fb).abs();
        }
        assert!((plan.cost - l1).abs() < 1e-12, "{} vs {l1}", plan.cost);
    }
}
