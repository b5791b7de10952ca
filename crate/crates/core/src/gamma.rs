//! Frozen-time operators: Dirichlet form, Laplacian, square field and the
//! iterated square field.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Measure};
use crate::flow::FlowSpec;
use crate::uniformization::Metzler;

/// The Laplacian and measure of a flow frozen at one time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorSnapshot {
    t: f64,
    measure: Vec<f64>,
    /// `(neighbor, c(x, neighbor))` per state, positive conductances only.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl GeneratorSnapshot {
    /// Snapshot from a measure and a symmetric conductance list.
    pub fn new(t: f64, measure: Vec<f64>, edges: &[(usize, usize)], conductance: &[f64]) -> Result<Self> {
        let n = measure.len();
        if conductance.len() != edges.len() {
            return Err(Error::Shape {
                expected: edges.len(),
                got: conductance.len(),
            });
        }
        if measure.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Structure("snapshot measure must be positive".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (&(a, b), &c) in edges.iter().zip(conductance) {
            if a >= n || b >= n || a == b {
                return Err(Error::Structure(format!("invalid edge ({a}, {b})")));
            }
            if c < 0.0 || !c.is_finite() {
                return Err(Error::Structure(format!("conductance {c} on ({a}, {b})")));
            }
            if c > 0.0 {
                adjacency[a].push((b, c));
                adjacency[b].push((a, c));
            }
        }
        Ok(GeneratorSnapshot {
            t,
            measure,
            adjacency,
        })
    }

    /// Snapshot of `flow` at grid index `k`.
    pub fn from_flow(flow: &FlowSpec, k: usize) -> GeneratorSnapshot {
        let measure = flow.measure_weights(k);
        let c = flow.conductance_at(k);
        let mut adjacency = vec![Vec::new(); flow.n()];
        for (&(a, b), &w) in flow.edges().iter().zip(c) {
            if w > 0.0 {
                adjacency[a].push((b, w));
                adjacency[b].push((a, w));
            }
        }
        GeneratorSnapshot {
            t: flow.grid().time(k),
            measure,
            adjacency,
        }
    }

    /// Snapshot of `flow` at grid time `t`.
    pub fn at(flow: &FlowSpec, t: f64) -> Result<GeneratorSnapshot> {
        Ok(GeneratorSnapshot::from_flow(flow, flow.grid().index_of(t)?))
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> usize {
        self.measure.len()
    }

    pub fn measure(&self) -> Measure {
        Measure::from_raw(self.measure.clone())
    }

    pub fn weights(&self) -> &[f64] {
        &self.measure
    }

    pub fn adjacency(&self, x: usize) -> &[(usize, f64)] {
        &self.adjacency[x]
    }

    /// Same snapshot with every conductance multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> GeneratorSnapshot {
        GeneratorSnapshot {
            t: self.t,
            measure: self.measure.clone(),
            adjacency: self
                .adjacency
                .iter()
                .map(|row| row.iter().map(|&(y, c)| (y, c * lambda)).collect())
                .collect(),
        }
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n() {
            return Err(Error::Shape {
                expected: self.n(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Dense generator matrix `L` with `(L u)(x) = Δ_t u(x)`.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(n, n);
        for x in 0..n {
            for &(y, c) in &self.adjacency[x] {
                let r = c / self.measure[x];
                l[(x, y)] += r;
                l[(x, x)] -= r;
            }
        }
        l
    }

    /// Sparse generator for the uniformization kernel.
    pub fn generator(&self) -> Metzler {
        let n = self.n();
        let mut offdiag = vec![Vec::new(); n];
        let mut diag = vec![0.0; n];
        for x in 0..n {
            for &(y, c) in &self.adjacency[x] {
                let r = c / self.measure[x];
                offdiag[x].push((y, r));
                diag[x] -= r;
            }
        }
        Metzler { offdiag, diag }
    }

    pub(crate) fn laplacian_at(&self, u: &[f64], x: usize) -> f64 {
        let s: f64 = self.adjacency[x]
            .iter()
            .map(|&(y, c)| c * (u[y] - u[x]))
            .sum();
        s / self.measure[x]
    }

    pub(crate) fn gamma_at(&self, u: &[f64], v: &[f64], x: usize) -> f64 {
        let s: f64 = self.adjacency[x]
            .iter()
            .map(|&(y, c)| c * (u[y] - u[x]) * (v[y] - v[x]))
            .sum();
        s / (2.0 * self.measure[x])
    }

    /// `Δ_t u`.
    pub fn laplacian(&self, u: &[f64]) -> Result<Field> {
        self.check(u)?;
        Ok(Field::from_raw(
            (0..self.n()).map(|x| self.laplacian_at(u, x)).collect(),
        ))
    }

    /// `E_t(u, v) = ½ Σ_{x,y} c(x,y)(u(x)-u(y))(v(x)-v(y))`.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        let mut s = 0.0;
        for x in 0..self.n() {
            for &(y, c) in &self.adjacency[x] {
                s += c * (u[x] - u[y]) * (v[x] - v[y]);
            }
        }
        Ok(0.5 * s)
    }

    /// `Γ_t(u, v)`.
    pub fn gamma(&self, u: &[f64], v: &[f64]) -> Result<Field> {
        self.check(u)?;
        self.check(v)?;
        Ok(Field::from_raw(
            (0..self.n()).map(|x| self.gamma_at(u, v, x)).collect(),
        ))
    }

    /// `∫ [½Γ(u)Δg + (Δu)² g + Γ(u,g)Δu] dm_t` with its three parts.
    pub fn gamma2_form(&self, u: &[f64], g: &[f64]) -> Result<Gamma2Evaluation> {
        self.check(u)?;
        self.check(g)?;
        let n = self.n();
        let lu: Vec<f64> = (0..n).map(|x| self.laplacian_at(u, x)).collect();
        let lg: Vec<f64> = (0..n).map(|x| self.laplacian_at(g, x)).collect();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for x in 0..n {
            let m = self.measure[x];
            a += 0.5 * self.gamma_at(u, u, x) * lg[x] * m;
            b += lu[x] * lu[x] * g[x] * m;
            c += self.gamma_at(u, g, x) * lu[x] * m;
        }
        Ok(Gamma2Evaluation {
            value: a + b + c,
            half_gamma_laplacian: a,
            laplacian_squared: b,
            gamma_cross: c,
        })
    }

    /// Bilinear pointwise `Γ₂(u,v)(x) = ½[ΔΓ(u,v) - Γ(u,Δv) - Γ(v,Δu)](x)`,
    /// evaluated from values on the 2-ball of `x` only.
    pub fn gamma2_bilinear_at(&self, u: &[f64], v: &[f64], x: usize) -> f64 {
        let gx = self.gamma_at(u, v, x);
        let lux = self.laplacian_at(u, x);
        let lvx = self.laplacian_at(v, x);
        let mut lap_gamma = 0.0;
        let mut cross_u = 0.0;
        let mut cross_v = 0.0;
        for &(y, c) in &self.adjacency[x] {
            lap_gamma += c * (self.gamma_at(u, v, y) - gx);
            let luy = self.laplacian_at(u, y);
            let lvy = self.laplacian_at(v, y);
            cross_u += c * (u[y] - u[x]) * (lvy - lvx);
            cross_v += c * (v[y] - v[x]) * (luy - lux);
        }
        let m = self.measure[x];
        0.5 * (lap_gamma / m - cross_u / (2.0 * m) - cross_v / (2.0 * m))
    }

    /// Pointwise `Γ₂(u) = ½ΔΓ(u) - Γ(u, Δu)`.
    pub fn gamma2(&self, u: &[f64]) -> Result<Field> {
        self.check(u)?;
        Ok(Field::from_raw(
            (0..self.n())
                .map(|x| self.gamma2_bilinear_at(u, u, x))
                .collect(),
        ))
    }

    /// `exp(r Δ_t) u` by uniformization.
    pub fn frozen_semigroup(&self, r: f64, u: &[f64]) -> Result<Field> {
        self.check(u)?;
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Invalid(format!("semigroup time {r} must be ≥ 0")));
        }
        let mut v = u.to_vec();
        if r > 0.0 {
            self.generator().scaled(r).exp_apply(&mut v);
        }
        Ok(Field::from_raw(v))
    }

    /// Dense `exp(r Δ_t)`.
    pub fn semigroup_matrix(&self, r: f64) -> Result<DMatrix<f64>> {
        let n = self.n();
        let gen = self.generator().scaled(r);
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            if r > 0.0 {
                gen.exp_apply(&mut e);
            }
            out.set_column(j, &nalgebra::DVector::from_vec(e));
        }
        Ok(out)
    }
}

/// Integrated `Γ₂` form with its three summands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gamma2Evaluation {
    pub value: f64,
    /// `½ ∫ Γ(u) Δg dm`.
    pub half_gamma_laplacian: f64,
    /// `∫ (Δu)² g dm`.
    pub laplacian_squared: f64,
    /// `∫ Γ(u,g) Δu dm`.
    pub gamma_cross: f64,
}

/// Time derivative of `Γ_t(u)` with `u` held fixed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DtGamma {
    pub field: Field,
    /// True at the grid ends, where a one-sided difference was used.
    pub one_sided: bool,
}

/// `(Γ_{t+dt}(u) - Γ_{t-dt}(u)) / (2 dt)` at grid index `k`; one-sided at
/// the ends of the grid.
pub fn dt_gamma_index(flow: &FlowSpec, k: usize, u: &[f64]) -> Result<DtGamma> {
    let last = flow.grid().n_steps();
    let (lo, hi, one_sided) = if k == 0 {
        (0, 1, true)
    } else if k == last {
        (last - 1, last, true)
    } else {
        (k - 1, k + 1, false)
    };
    let a = GeneratorSnapshot::from_flow(flow, lo).gamma(u, u)?;
    let b = GeneratorSnapshot::from_flow(flow, hi).gamma(u, u)?;
    let span = (hi - lo) as f64 * flow.grid().dt();
    Ok(DtGamma {
        field: b.zip_map(&a, |p, q| (p - q) / span),
        one_sided,
    })
}

/// [`dt_gamma_index`] at grid time `t`.
pub fn dt_gamma(flow: &FlowSpec, t: f64, u: &[f64]) -> Result<DtGamma> {
    dt_gamma_index(flow, flow.grid().index_of(t)?, u)
}
