//! Heat and adjoint heat propagators of a time-dependent flow.
//!
//! On each grid step `[t_k, t_{k+1}]` the generator is frozen to its step
//! average `Ω_k` (the averaged rates stored in the flow) and the step map is
//! `exp(dt Ω_k)`, applied by uniformization. The adjoint step is
//! `exp(dt Ω_k - diag(f_{k+1} - f_k))`, integrated backward from `t` to `s`.
//! Both maps are entrywise nonnegative, and the forward map fixes constants.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, ProbabilityMeasure};
use crate::flow::FlowSpec;
use crate::gamma::GeneratorSnapshot;
use crate::uniformization::{ExpStats, Metzler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Adjoint,
}

/// A solution of the heat or adjoint heat equation on `[s, t]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropagatorRun {
    pub s: f64,
    pub t: f64,
    /// Grid indices of `s` and `t`.
    pub ks: usize,
    pub kt: usize,
    pub direction: Direction,
    /// Values at grid times `t_ks, ..., t_kt`, in increasing time order.
    pub trajectory: Vec<Field>,
    pub stats: ExpStats,
}

impl PropagatorRun {
    /// Value at grid index `k` (`ks ≤ k ≤ kt`).
    pub fn at(&self, k: usize) -> &Field {
        &self.trajectory[k - self.ks]
    }

    /// `P_{t,s} u` for forward runs, `P*_{t,s} g` for adjoint runs.
    pub fn result(&self) -> &Field {
        match self.direction {
            Direction::Forward => self.trajectory.last().expect("nonempty"),
            Direction::Adjoint => &self.trajectory[0],
        }
    }

    /// Writes `r,state,value` rows.
    pub fn write_csv<W: Write>(&self, flow: &FlowSpec, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "state", "value"])?;
        for (i, field) in self.trajectory.iter().enumerate() {
            let r = flow.grid().time(self.ks + i);
            for (x, v) in field.iter().enumerate() {
                w.write_record([format!("{r}"), x.to_string(), format!("{v:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Step map generator `dt Ω_k`.
pub(crate) fn forward_step(flow: &FlowSpec, k: usize) -> Metzler {
    Metzler::from_rates(flow.n(), flow.edges(), flow.step_rates(k)).scaled(flow.grid().dt())
}

/// Adjoint step generator `dt Ω_k - diag(f_{k+1} - f_k)`.
pub(crate) fn adjoint_step(flow: &FlowSpec, k: usize) -> Metzler {
    forward_step(flow, k).shifted(&flow.log_density_increment(k))
}

fn check_len(flow: &FlowSpec, u: &[f64]) -> Result<()> {
    if u.len() != flow.n() {
        return Err(Error::Shape {
            expected: flow.n(),
            got: u.len(),
        });
    }
    Ok(())
}

/// Solves `∂_r u = Δ_r u` on `[t_ks, t_kt]` with `u_{t_ks} = u`.
pub fn forward_index(flow: &FlowSpec, ks: usize, kt: usize, u: &[f64]) -> Result<PropagatorRun> {
    check_len(flow, u)?;
    let grid = flow.grid();
    if ks >= kt || kt > grid.n_steps() {
        return Err(Error::Ordering {
            s: grid.time(ks.min(grid.n_steps())),
            t: grid.time(kt.min(grid.n_steps())),
        });
    }
    let mut stats = ExpStats::default();
    let mut v = u.to_vec();
    let mut trajectory = Vec::with_capacity(kt - ks + 1);
    trajectory.push(Field::from_raw(v.clone()));
    for k in ks..kt {
        stats.absorb(forward_step(flow, k).exp_apply(&mut v));
        trajectory.push(Field::from_raw(v.clone()));
    }
    Ok(PropagatorRun {
        s: grid.time(ks),
        t: grid.time(kt),
        ks,
        kt,
        direction: Direction::Forward,
        trajectory,
        stats,
    })
}

/// `P_{r,s} u` for `r ∈ [s, t]`.
pub fn forward(flow: &FlowSpec, s: f64, t: f64, u: &[f64]) -> Result<PropagatorRun> {
    let (ks, kt) = flow.grid().pair(s, t)?;
    forward_index(flow, ks, kt, u)
}

/// Solves `∂_r v = -Δ_r v + v ∂_r f_r` backward on `[t_ks, t_kt]` with `v_{t_kt} = g`.
pub fn adjoint_index(flow: &FlowSpec, kt: usize, ks: usize, g: &[f64]) -> Result<PropagatorRun> {
    check_len(flow, g)?;
    let grid = flow.grid();
    if ks >= kt || kt > grid.n_steps() {
        return Err(Error::Ordering {
            s: grid.time(ks.min(grid.n_steps())),
            t: grid.time(kt.min(grid.n_steps())),
        });
    }
    let mut stats = ExpStats::default();
    let mut v = g.to_vec();
    let mut trajectory = Vec::with_capacity(kt - ks + 1);
    trajectory.push(Field::from_raw(v.clone()));
    for k in (ks..kt).rev() {
        stats.absorb(adjoint_step(flow, k).exp_apply(&mut v));
        trajectory.push(Field::from_raw(v.clone()));
    }
    trajectory.reverse();
    Ok(PropagatorRun {
        s: grid.time(ks),
        t: grid.time(kt),
        ks,
        kt,
        direction: Direction::Adjoint,
        trajectory,
        stats,
    })
}

/// `P*_{t,r} g` for `r ∈ [s, t]`.
pub fn adjoint(flow: &FlowSpec, t: f64, s: f64, g: &[f64]) -> Result<PropagatorRun> {
    let (ks, kt) = flow.grid().pair(s, t)?;
    adjoint_index(flow, kt, ks, g)
}

/// Dense `P_{t_j, t_ks}` for every `j` in `targets` (each `> ks`), computed
/// column by column in parallel.
pub fn forward_matrices(flow: &FlowSpec, ks: usize, targets: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    let n = flow.n();
    let last = *targets.iter().max().ok_or_else(|| Error::Invalid("no targets".into()))?;
    if targets.iter().any(|&j| j <= ks) || last > flow.grid().n_steps() {
        return Err(Error::Ordering {
            s: flow.grid().time(ks),
            t: flow.grid().time(last.min(flow.grid().n_steps())),
        });
    }
    let steps: Vec<Metzler> = (ks..last).map(|k| forward_step(flow, k)).collect();
    let columns: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut v = vec![0.0; n];
            v[j] = 1.0;
            let mut snaps = Vec::with_capacity(targets.len());
            let mut k = ks;
            let mut order: Vec<usize> = targets.to_vec();
            order.sort_unstable();
            order.dedup();
            let mut at = std::collections::BTreeMap::new();
            for &target in &order {
                while k < target {
                    steps[k - ks].exp_apply(&mut v);
                    k += 1;
                }
                at.insert(target, v.clone());
            }
            for &target in targets {
                snaps.push(at[&target].clone());
            }
            snaps
        })
        .collect();
    Ok((0..targets.len())
        .map(|i| DMatrix::from_fn(n, n, |x, y| columns[y][i][x]))
        .collect())
}

/// Dense `P_{t,s}` with `(P u)(x) = Σ_y P[x,y] u(y)`.
pub fn forward_matrix(flow: &FlowSpec, s: f64, t: f64) -> Result<DMatrix<f64>> {
    let (ks, kt) = flow.grid().pair(s, t)?;
    Ok(forward_matrices(flow, ks, &[kt])?.remove(0))
}

/// Dense `P*_{t,s}`.
pub fn adjoint_matrix(flow: &FlowSpec, t: f64, s: f64) -> Result<DMatrix<f64>> {
    let (ks, kt) = flow.grid().pair(s, t)?;
    let n = flow.n();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            adjoint_index(flow, kt, ks, &e).map(|r| r.result().values().to_vec())
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |x, y| cols[y][x]))
}

/// `|∫ P_{t,s}h · g dm_t - ∫ h · P*_{t,s}g dm_s|`.
pub fn duality_check(flow: &FlowSpec, s: f64, t: f64, h: &[f64], g: &[f64]) -> Result<f64> {
    let (ks, kt) = flow.grid().pair(s, t)?;
    let ph = forward_index(flow, ks, kt, h)?;
    let pg = adjoint_index(flow, kt, ks, g)?;
    let lhs = ph.result().integrate_against(g, &flow.measure_weights(kt));
    let rhs = pg.result().integrate_against(h, &flow.measure_weights(ks));
    Ok((lhs - rhs).abs())
}

/// Both sides of the variance identity
/// `∫ g ((P_{t,s}u)² - P_{t,s}(u²)) dm_t = -2 ∫_s^t ∫ P*_{t,r}g · Γ_r(P_{r,s}u) dm_r dr`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VarianceDefect {
    pub lhs: f64,
    /// Trapezoidal quadrature in `r` over the grid.
    pub rhs: f64,
    /// `|lhs - rhs| / max(|lhs|, |rhs|)`, or 0 when both vanish.
    pub relative: f64,
}

pub fn variance_identity(flow: &FlowSpec, s: f64, t: f64, u: &[f64], g: &[f64]) -> Result<VarianceDefect> {
    let (ks, kt) = flow.grid().pair(s, t)?;
    let fwd = forward_index(flow, ks, kt, u)?;
    let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
    let fwd_sq = forward_index(flow, ks, kt, &sq)?;
    let adj = adjoint_index(flow, kt, ks, g)?;
    let pu = fwd.result();
    let diff: Vec<f64> = pu.iter().zip(fwd_sq.result().iter()).map(|(a, b)| a * a - b).collect();
    let lhs = Field::from_raw(diff).integrate_against(g, &flow.measure_weights(kt));
    let dt = flow.grid().dt();
    let mut rhs = 0.0;
    for k in ks..=kt {
        let snap = GeneratorSnapshot::from_flow(flow, k);
        let ur = fwd.at(k);
        let val = snap.gamma(ur, ur)?.integrate_against(adj.at(k), snap.weights());
        let w = if k == ks || k == kt { 0.5 } else { 1.0 };
        rhs += w * dt * val;
    }
    rhs *= -2.0;
    let scale = lhs.abs().max(rhs.abs());
    let relative = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
    Ok(VarianceDefect { lhs, rhs, relative })
}

/// Image of a probability measure under the dual propagator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualImage {
    pub measure: ProbabilityMeasure,
    /// `|total mass - 1|` before renormalization.
    pub mass_defect: f64,
}

/// `(P*_{t,s}(dμ/dm_t)) m_s`, renormalized to unit mass.
pub fn dual_on_measures(flow: &FlowSpec, t: f64, s: f64, mu: &ProbabilityMeasure) -> Result<DualImage> {
    let (ks, kt) = flow.grid().pair(s, t)?;
    dual_on_measures_index(flow, kt, ks, mu)
}

pub(crate) fn dual_on_measures_index(
    flow: &FlowSpec,
    kt: usize,
    ks: usize,
    mu: &ProbabilityMeasure,
) -> Result<DualImage> {
    check_len(flow, mu.weights())?;
    let mt = flow.measure_weights(kt);
    let ms = flow.measure_weights(ks);
    let density: Vec<f64> = mu.weights().iter().zip(&mt).map(|(a, m)| a / m).collect();
    let run = adjoint_index(flow, kt, ks, &density)?;
    let weights: Vec<f64> = run
        .result()
        .iter()
        .zip(&ms)
        .map(|(v, m)| (v * m).max(0.0))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(DualImage {
        mass_defect: (total - 1.0).abs(),
        measure: ProbabilityMeasure::normalized(weights)?,
    })
}

/// Dissipation bound `∫_s^τ ∫ |Δ_r u_r|² dm_r dr ≤ C (E_s(u_s) - E_τ(u_τ))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityReport {
    /// Smallest `C` valid for every `τ` on the grid.
    pub constant: f64,
    /// `e^{10 L (t - s)}`.
    pub bound: f64,
    pub dissipation: f64,
    pub energy_drop: f64,
    pub flagged: bool,
}

pub fn regularity_report(flow: &FlowSpec, run: &PropagatorRun) -> Result<RegularityReport> {
    if run.direction != Direction::Forward {
        return Err(Error::Invalid("regularity report needs a forward run".into()));
    }
    let dt = flow.grid().dt();
    let mut integrand = Vec::with_capacity(run.trajectory.len());
    let mut energy = Vec::with_capacity(run.trajectory.len());
    for (i, u) in run.trajectory.iter().enumerate() {
        let snap = GeneratorSnapshot::from_flow(flow, run.ks + i);
        let lu = snap.laplacian(u)?;
        integrand.push(lu.integrate_against(&lu, snap.weights()));
        energy.push(snap.dirichlet_form(u, u)?);
    }
    let scale = energy[0].abs().max(integrand[0].abs()).max(f64::MIN_POSITIVE);
    let mut cumulative = 0.0;
    let mut constant = 0.0_f64;
    let mut flagged = false;
    for i in 1..integrand.len() {
        cumulative += 0.5 * dt * (integrand[i - 1] + integrand[i]);
        let drop = energy[0] - energy[i];
        if cumulative <= 1e-14 * scale {
            continue;
        }
        if drop <= 0.0 {
            flagged = true;
            constant = f64::INFINITY;
        } else {
            constant = constant.max(cumulative / drop);
        }
    }
    let bound = (10.0 * flow.lipschitz() * (run.t - run.s)).exp();
    Ok(RegularityReport {
        constant,
        bound,
        dissipation: cumulative,
        energy_drop: energy[0] - energy[energy.len() - 1],
        flagged: flagged || constant > bound,
    })
}

/// `P_{t,s}` applied to a field through a dense matrix.
pub fn apply(p: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    (p * DVector::from_column_slice(u)).as_slice().to_vec()
}
