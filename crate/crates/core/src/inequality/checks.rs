//! Margins of the individual inequalities.
//!
//! Every check is written as `RHS - LHS`, so a nonnegative margin means the
//! inequality holds. Dynamic checks compare data at two grid times through
//! the dense propagator `P_{t,s}`; static checks use `exp(τΔ)` of a frozen
//! snapshot with curvature-dependent constants.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::flow::FlowSpec;
use crate::gamma::GeneratorSnapshot;
use crate::inequality::bank::clamp_positive;
use crate::propagator::{adjoint_index, forward_index, forward_matrices};
use crate::report::{CheckReport, Witness};

/// `(1 - e^{-2Kτ}) / K`, equal to `2τ` at `K = 0`.
pub fn c1(k: f64, tau: f64) -> f64 {
    if k == 0.0 {
        2.0 * tau
    } else {
        -(-2.0 * k * tau).exp_m1() / k
    }
}

/// `(e^{2Kτ} - 1) / K`, equal to `2τ` at `K = 0`.
pub fn c2(k: f64, tau: f64) -> f64 {
    if k == 0.0 {
        2.0 * tau
    } else {
        (2.0 * k * tau).exp_m1() / k
    }
}

/// Constants multiplying the gradient terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    /// Upper Poincaré: `Var ≤ a P(Γu)`.
    pub poincare_upper: f64,
    /// Lower Poincaré: `Var ≥ b Γ(Pu)`.
    pub poincare_lower: f64,
    /// `c` in the Harnack cost `α d² / ((α-1) c)` and log-Harnack cost `d² / c`.
    pub harnack: f64,
    /// Elapsed time, for the uniform gradient bound.
    pub duration: f64,
}

impl Coefficients {
    /// Constants of the time-dependent inequalities over `[s, t]`.
    pub fn dynamic(duration: f64) -> Coefficients {
        Coefficients {
            poincare_upper: 2.0 * duration,
            poincare_lower: 2.0 * duration,
            harnack: 4.0 * duration,
            duration,
        }
    }

    /// Constants of the static inequalities under a curvature bound `K`.
    pub fn curvature(k: f64, duration: f64) -> Coefficients {
        Coefficients {
            poincare_upper: c1(k, duration),
            poincare_lower: c2(k, duration),
            harnack: 2.0 * c1(k, duration),
            duration,
        }
    }
}

/// Everything needed to evaluate checks between two times.
#[derive(Clone, Debug)]
pub struct PairContext {
    pub s: f64,
    pub t: f64,
    /// `P_{t,s}` as a dense matrix.
    pub propagator: DMatrix<f64>,
    pub snap_s: GeneratorSnapshot,
    pub snap_t: GeneratorSnapshot,
    /// `d_t`.
    pub dist: DMatrix<f64>,
    pub coefficients: Coefficients,
}

impl PairContext {
    /// Time-dependent context for grid indices `ks < kt`.
    pub fn new(flow: &FlowSpec, ks: usize, kt: usize) -> Result<PairContext> {
        let p = forward_matrices(flow, ks, &[kt])?.remove(0);
        Ok(PairContext::with_propagator(flow, ks, kt, p))
    }

    pub fn with_propagator(flow: &FlowSpec, ks: usize, kt: usize, propagator: DMatrix<f64>) -> PairContext {
        let grid = flow.grid();
        let (s, t) = (grid.time(ks), grid.time(kt));
        PairContext {
            s,
            t,
            propagator,
            snap_s: GeneratorSnapshot::from_flow(flow, ks),
            snap_t: GeneratorSnapshot::from_flow(flow, kt),
            dist: flow.metric_matrix(kt),
            coefficients: Coefficients::dynamic(t - s),
        }
    }

    /// Static context: `exp(τΔ)` of `snap` with the constants of curvature `k`.
    pub fn frozen(snap: &GeneratorSnapshot, dist: DMatrix<f64>, k: f64, duration: f64) -> Result<PairContext> {
        if !(duration > 0.0) {
            return Err(Error::Invalid(format!("duration {duration} must be positive")));
        }
        Ok(PairContext {
            s: snap.t(),
            t: snap.t() + duration,
            propagator: snap.semigroup_matrix(duration)?,
            snap_s: snap.clone(),
            snap_t: snap.clone(),
            dist,
            coefficients: Coefficients::curvature(k, duration),
        })
    }

    pub fn n(&self) -> usize {
        self.propagator.nrows()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|x| (0..n).map(|y| self.propagator[(x, y)] * u[y]).sum())
            .collect()
    }
}

/// Checks that produce one margin per state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointCheck {
    /// `P(Γ_s u) - Γ_t(Pu)`.
    GradientL2,
    /// `P(√Γ_s u) - √Γ_t(Pu)`.
    GradientL1,
    /// `a P(Γ_s u) - [P(u²) - (Pu)²]`.
    PoincareUpper,
    /// `[P(u²) - (Pu)²] - b Γ_t(Pu)`.
    PoincareLower,
    /// `‖u‖²_∞ / (2(t-s)) - Γ_t(Pu)`.
    UniformBound,
    /// `(a/2) P(Γ_s u / u) - [P(u log u) - Pu log Pu]`.
    LogSobolevUpper,
    /// `[P(u log u) - Pu log Pu] - (b/2) Γ_t(Pu) / Pu`.
    LogSobolevLower,
}

impl PointCheck {
    /// Whether the check takes logarithms of `u`.
    pub fn needs_positive(self) -> bool {
        matches!(self, PointCheck::LogSobolevUpper | PointCheck::LogSobolevLower)
    }
}

fn gamma_field(snap: &GeneratorSnapshot, u: &[f64]) -> Vec<f64> {
    (0..snap.n()).map(|x| snap.gamma_at(u, u, x)).collect()
}

/// Per-state margins of `check` for the function `u`. Log-type checks clamp
/// `u` from below by `1e-8 ‖u‖_∞` first.
pub fn point_margins(ctx: &PairContext, check: PointCheck, u: &[f64]) -> Vec<f64> {
    let clamped;
    let u = if check.needs_positive() {
        clamped = clamp_positive(u).0;
        &clamped[..]
    } else {
        u
    };
    let n = ctx.n();
    let co = ctx.coefficients;
    let pu = ctx.apply(u);
    let gamma_t_pu = gamma_field(&ctx.snap_t, &pu);
    match check {
        PointCheck::GradientL2 => {
            let p_gamma = ctx.apply(&gamma_field(&ctx.snap_s, u));
            (0..n).map(|x| p_gamma[x] - gamma_t_pu[x]).collect()
        }
        PointCheck::GradientL1 => {
            let root: Vec<f64> = gamma_field(&ctx.snap_s, u).iter().map(|g| g.sqrt()).collect();
            let p_root = ctx.apply(&root);
            (0..n).map(|x| p_root[x] - gamma_t_pu[x].sqrt()).collect()
        }
        PointCheck::PoincareUpper | PointCheck::PoincareLower => {
            let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
            let p_sq = ctx.apply(&sq);
            let var: Vec<f64> = (0..n).map(|x| p_sq[x] - pu[x] * pu[x]).collect();
            if check == PointCheck::PoincareUpper {
                let p_gamma = ctx.apply(&gamma_field(&ctx.snap_s, u));
                (0..n).map(|x| co.poincare_upper * p_gamma[x] - var[x]).collect()
            } else {
                (0..n).map(|x| var[x] - co.poincare_lower * gamma_t_pu[x]).collect()
            }
        }
        PointCheck::UniformBound => {
            let sup = u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            (0..n)
                .map(|x| sup * sup / (2.0 * co.duration) - gamma_t_pu[x])
                .collect()
        }
        PointCheck::LogSobolevUpper | PointCheck::LogSobolevLower => {
            let ulogu: Vec<f64> = u.iter().map(|v| v * v.ln()).collect();
            let p_ulogu = ctx.apply(&ulogu);
            let ent: Vec<f64> = (0..n).map(|x| p_ulogu[x] - pu[x] * pu[x].ln()).collect();
            if check == PointCheck::LogSobolevUpper {
                let ratio: Vec<f64> = gamma_field(&ctx.snap_s, u)
                    .iter()
                    .zip(u)
                    .map(|(g, v)| g / v)
                    .collect();
                let p_ratio = ctx.apply(&ratio);
                (0..n)
                    .map(|x| 0.5 * co.poincare_upper * p_ratio[x] - ent[x])
                    .collect()
            } else {
                (0..n)
                    .map(|x| ent[x] - 0.5 * co.poincare_lower * gamma_t_pu[x] / pu[x])
                    .collect()
            }
        }
    }
}

/// `log P(u^α)(x) + α d²(x,y) / ((α-1) c) - α log Pu(y)` for all `(x, y)`.
pub fn harnack_margins(ctx: &PairContext, u: &[f64], alpha: f64) -> DMatrix<f64> {
    let (u, _) = clamp_positive(u);
    let pu = ctx.apply(&u);
    let ua: Vec<f64> = u.iter().map(|v| v.powf(alpha)).collect();
    let pua = ctx.apply(&ua);
    let c = ctx.coefficients.harnack;
    let n = ctx.n();
    DMatrix::from_fn(n, n, |x, y| {
        let d = ctx.dist[(x, y)];
        pua[x].ln() + alpha * d * d / ((alpha - 1.0) * c) - alpha * pu[y].ln()
    })
}

/// `log Pu(y) + d²(x,y) / c - P(log u)(x)` for all `(x, y)`.
pub fn log_harnack_margins(ctx: &PairContext, u: &[f64]) -> DMatrix<f64> {
    let (u, _) = clamp_positive(u);
    let pu = ctx.apply(&u);
    let logu: Vec<f64> = u.iter().map(|v| v.ln()).collect();
    let plog = ctx.apply(&logu);
    let c = ctx.coefficients.harnack;
    let n = ctx.n();
    DMatrix::from_fn(n, n, |x, y| {
        let d = ctx.dist[(x, y)];
        pu[y].ln() + d * d / c - plog[x]
    })
}

/// Minimum entry and its index, first occurrence on ties.
pub fn min_with_index(v: &[f64]) -> (f64, usize) {
    v.iter()
        .copied()
        .enumerate()
        .fold((f64::INFINITY, 0), |acc, (i, m)| if m < acc.0 { (m, i) } else { acc })
}

/// Minimum entry of a matrix and its `(row, column)`, row-major first occurrence.
pub fn min_with_pair(m: &DMatrix<f64>) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for x in 0..m.nrows() {
        for y in 0..m.ncols() {
            if m[(x, y)] < best.0 {
                best = (m[(x, y)], x, y);
            }
        }
    }
    best
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

fn pointwise_report(id: &str, flow: &FlowSpec, s: f64, t: f64, u: &[f64], check: PointCheck, tol: f64) -> Result<CheckReport> {
    check_len(flow, u)?;
    let (ks, kt) = flow.grid().pair(s, t)?;
    let ctx = PairContext::new(flow, ks, kt)?;
    let (margin, x) = min_with_index(&point_margins(&ctx, check, u));
    Ok(CheckReport::new(
        id,
        margin,
        Witness {
            s: Some(s),
            t: Some(t),
            x: Some(x),
            ..Witness::default()
        },
        tol,
        "all states",
        flow.n(),
    ))
}

/// L² gradient estimate `Γ_t(P_{t,s}u) ≤ P_{t,s}(Γ_s u)`.
pub fn check_e3(flow: &FlowSpec, s: f64, t: f64, u: &[f64], tol: f64) -> Result<CheckReport> {
    pointwise_report("E3", flow, s, t, u, PointCheck::GradientL2, tol)
}

/// L¹ gradient estimate `√Γ_t(P_{t,s}u) ≤ P_{t,s}(√Γ_s u)`.
pub fn check_e6(flow: &FlowSpec, s: f64, t: f64, u: &[f64], tol: f64) -> Result<CheckReport> {
    pointwise_report("E6", flow, s, t, u, PointCheck::GradientL1, tol)
}

/// Local Poincaré `P(u²) - (Pu)² ≤ 2(t-s) P(Γ_s u)`.
pub fn check_e7(flow: &FlowSpec, s: f64, t: f64, u: &[f64], tol: f64) -> Result<CheckReport> {
    pointwise_report("E7", flow, s, t, u, PointCheck::PoincareUpper, tol)
}

/// Reverse local Poincaré `P(u²) - (Pu)² ≥ 2(t-s) Γ_t(Pu)`.
pub fn check_e8(flow: &FlowSpec, s: f64, t: f64, u: &[f64], tol: f64) -> Result<CheckReport> {
    pointwise_report("E8", flow, s, t, u, PointCheck::PoincareLower, tol)
}

/// Local log-Sobolev `P(u log u) - Pu log Pu ≤ (t-s) P(Γ_s u / u)`.
pub fn check_e9(flow: &FlowSpec, s: f64, t: f64, u: &[f64], tol: f64) -> Result<CheckReport> {
    pointwise_report("E9", flow, s, t, u, PointCheck::LogSobolevUpper, tol)
}

/// Reverse local log-Sobolev `P(u log u) - Pu log Pu ≥ (t-s) Γ_t(Pu) / Pu`.
pub fn check_e10(flow: &FlowSpec, s: f64, t: f64, u: &[f64], tol: f64) -> Result<CheckReport> {
    pointwise_report("E10", flow, s, t, u, PointCheck::LogSobolevLower, tol)
}

/// Dimension-free Harnack inequality at exponent `alpha > 1`, in log form.
pub fn check_e11(flow: &FlowSpec, s: f64, t: f64, u: &[f64], alpha: f64, tol: f64) -> Result<CheckReport> {
    check_len(flow, u)?;
    if !(alpha > 1.0) {
        return Err(Error::Invalid(format!("Harnack exponent must exceed 1, got {alpha}")));
    }
    let (ks, kt) = flow.grid().pair(s, t)?;
    let ctx = PairContext::new(flow, ks, kt)?;
    let (margin, x, y) = min_with_pair(&harnack_margins(&ctx, u, alpha));
    Ok(CheckReport::new(
        "E11",
        margin,
        Witness {
            s: Some(s),
            t: Some(t),
            x: Some(x),
            y: Some(y),
            alpha: Some(alpha),
            ..Witness::default()
        },
        tol,
        "all state pairs",
        flow.n() * flow.n(),
    ))
}

/// Log-Harnack inequality `P(log u)(x) ≤ log Pu(y) + d_t²(x,y) / (4(t-s))`.
pub fn check_e12(flow: &FlowSpec, s: f64, t: f64, u: &[f64], tol: f64) -> Result<CheckReport> {
    check_len(flow, u)?;
    let (ks, kt) = flow.grid().pair(s, t)?;
    let ctx = PairContext::new(flow, ks, kt)?;
    let (margin, x, y) = min_with_pair(&log_harnack_margins(&ctx, u));
    Ok(CheckReport::new(
        "E12",
        margin,
        Witness {
            s: Some(s),
            t: Some(t),
            x: Some(x),
            y: Some(y),
            ..Witness::default()
        },
        tol,
        "all state pairs",
        flow.n() * flow.n(),
    ))
}

/// `Γ₂`-form of `(u, g)` on `snaps[1]` minus `½ ∫ ∂_tΓ(u) g dm`, where
/// `∂_tΓ` is the difference quotient of `snaps[2]` and `snaps[0]` over `span`.
pub(crate) fn bochner_value(snaps: [&GeneratorSnapshot; 3], span: f64, u: &[f64], g: &[f64]) -> Result<f64> {
    let form = snaps[1].gamma2_form(u, g)?.value;
    let m = snaps[1].weights();
    let mut dot = 0.0;
    for x in 0..snaps[1].n() {
        let rate = (snaps[2].gamma_at(u, u, x) - snaps[0].gamma_at(u, u, x)) / span;
        dot += rate * g[x] * m[x];
    }
    Ok(form - 0.5 * dot)
}

/// Neighbouring grid indices used for the time derivative at `k`.
pub(crate) fn stencil(flow: &FlowSpec, k: usize) -> (usize, usize) {
    let last = flow.grid().n_steps();
    if k == 0 {
        (0, 1)
    } else if k == last {
        (last - 1, last)
    } else {
        (k - 1, k + 1)
    }
}

/// `Γ₂`-form of `(u, g)` at grid index `k` minus `½ ∫ ∂_tΓ(u) g dm`.
pub fn bochner_integrand(flow: &FlowSpec, k: usize, u: &[f64], g: &[f64]) -> Result<f64> {
    let (lo, hi) = stencil(flow, k);
    let snaps = [
        GeneratorSnapshot::from_flow(flow, lo),
        GeneratorSnapshot::from_flow(flow, k),
        GeneratorSnapshot::from_flow(flow, hi),
    ];
    let span = (hi - lo) as f64 * flow.grid().dt();
    bochner_value([&snaps[0], &snaps[1], &snaps[2]], span, u, g)
}

/// Integrated dynamic Bochner inequality along `u_r = P_{r,S}u`,
/// `g_r = P*_{T,r}g` at every interior grid time `r`.
pub fn check_e4(flow: &FlowSpec, s: f64, t: f64, u: &[f64], g: &[f64], tol: f64) -> Result<CheckReport> {
    check_len(flow, u)?;
    check_len(flow, g)?;
    if g.iter().any(|v| *v < 0.0) {
        return Err(Error::Invalid("Bochner weight g must be nonnegative".into()));
    }
    let (ks, kt) = flow.grid().pair(s, t)?;
    let fwd = forward_index(flow, ks, kt, u)?;
    let adj = adjoint_index(flow, kt, ks, g)?;
    let mut best = (f64::INFINITY, ks);
    for k in (ks + 1)..kt {
        let v = bochner_integrand(flow, k, fwd.at(k), adj.at(k))?;
        if v < best.0 {
            best = (v, k);
        }
    }
    let evaluations = kt.saturating_sub(ks + 1);
    let margin = if evaluations == 0 { 0.0 } else { best.0 };
    Ok(CheckReport::new(
        "E4",
        margin,
        Witness {
            s: Some(s),
            t: Some(t),
            r: (evaluations > 0).then(|| flow.grid().time(best.1)),
            ..Witness::default()
        },
        tol,
        "interior grid times",
        evaluations,
    ))
}

/// Pointwise dynamic Bochner inequality at an interior grid time.
pub fn check_e5(flow: &FlowSpec, t: f64, u: &[f64], g: &[f64], tol: f64) -> Result<CheckReport> {
    check_len(flow, u)?;
    check_len(flow, g)?;
    let k = flow.grid().index_of(t)?;
    let margin = 2.0 * bochner_integrand(flow, k, u, g)?;
    Ok(CheckReport::new(
        "E5",
        margin,
        Witness {
            t: Some(t),
            ..Witness::default()
        },
        tol,
        "single time",
        1,
    ))
}

/// The static inequalities under a curvature bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StaticVariant {
    PoincareUpper,
    PoincareLower,
    LogSobolevUpper,
    LogSobolevLower,
    Harnack(f64),
    LogHarnack,
}

impl StaticVariant {
    pub fn id(self) -> &'static str {
        match self {
            StaticVariant::PoincareUpper => "static-iia",
            StaticVariant::PoincareLower => "static-iib",
            StaticVariant::LogSobolevUpper => "static-iiia",
            StaticVariant::LogSobolevLower => "static-iiib",
            StaticVariant::Harnack(_) => "static-iv",
            StaticVariant::LogHarnack => "static-v",
        }
    }

    pub fn all(alpha: f64) -> [StaticVariant; 6] {
        [
            StaticVariant::PoincareUpper,
            StaticVariant::PoincareLower,
            StaticVariant::LogSobolevUpper,
            StaticVariant::LogSobolevLower,
            StaticVariant::Harnack(alpha),
            StaticVariant::LogHarnack,
        ]
    }
}

/// Minimum margin and witness `(x, y)` of a static variant on a frozen context.
pub fn static_margin(ctx: &PairContext, variant: StaticVariant, u: &[f64]) -> (f64, usize, Option<usize>) {
    let point = |c| {
        let (m, x) = min_with_index(&point_margins(ctx, c, u));
        (m, x, None)
    };
    match variant {
        StaticVariant::PoincareUpper => point(PointCheck::PoincareUpper),
        StaticVariant::PoincareLower => point(PointCheck::PoincareLower),
        StaticVariant::LogSobolevUpper => point(PointCheck::LogSobolevUpper),
        StaticVariant::LogSobolevLower => point(PointCheck::LogSobolevLower),
        StaticVariant::Harnack(alpha) => {
            let (m, x, y) = min_with_pair(&harnack_margins(ctx, u, alpha));
            (m, x, Some(y))
        }
        StaticVariant::LogHarnack => {
            let (m, x, y) = min_with_pair(&log_harnack_margins(ctx, u));
            (m, x, Some(y))
        }
    }
}

/// A static inequality for `exp(τΔ)` with the constants of curvature `k`.
pub fn check_static(snap: &GeneratorSnapshot, dist: &DMatrix<f64>, k: f64, duration: f64, u: &Field, variant: StaticVariant, tol: f64) -> Result<CheckReport> {
    if u.len() != snap.n() {
        return Err(Error::Shape {
            expected: snap.n(),
            got: u.len(),
        });
    }
    let ctx = PairContext::frozen(snap, dist.clone(), k, duration)?;
    let (margin, x, y) = static_margin(&ctx, variant, u);
    Ok(CheckReport::new(
        variant.id(),
        margin,
        Witness {
            t: Some(duration),
            x: Some(x),
            y,
            alpha: match variant {
                StaticVariant::Harnack(a) => Some(a),
                _ => None,
            },
            ..Witness::default()
        },
        tol,
        format!("frozen at t = {}, K = {k}", snap.t()),
        if y.is_some() { snap.n() * snap.n() } else { snap.n() },
    ))
}
