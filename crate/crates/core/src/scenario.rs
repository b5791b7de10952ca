//! Named flows with expected verdicts: static spaces, their super-Ricci
//! reparametrization and flows built to violate the inequalities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curvature::estimate_curvature;
use crate::error::{Error, Result};
use crate::flow::{build_circle1d, validate_a1, Backend, FlowSpec, TimeGrid};
use crate::gamma::GeneratorSnapshot;
use crate::inequality::suite::{SuiteConfig, SuiteResult};
use crate::report::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Pass,
    Fail,
    Informational,
}

impl Expectation {
    pub fn as_str(self) -> &'static str {
        match self {
            Expectation::Pass => "pass",
            Expectation::Fail => "fail",
            Expectation::Informational => "informational",
        }
    }
}

/// Checks whose proofs need the chain rule; graded only on the circle.
pub fn needs_chain_rule(id: &str) -> bool {
    let base = id.split('[').next().unwrap_or(id);
    matches!(
        base,
        "E6" | "E9" | "E10" | "E11" | "E12" | "static-iiia" | "static-iiib" | "static-iv" | "static-v"
    )
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub note: String,
    pub flow: FlowSpec,
    pub expected: BTreeMap<String, Expectation>,
    /// Curvature used by the static forms.
    pub curvature: Option<f64>,
    pub suite: SuiteConfig,
    pub bank_seed: u64,
    pub bank_size: usize,
}

/// An expected verdict that the suite did not reproduce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub id: String,
    pub expected: Expectation,
    pub observed: Option<Verdict>,
    pub margin: Option<f64>,
}

impl Scenario {
    /// Fails when a chain-rule check is graded on the graph backend.
    pub fn new(
        name: impl Into<String>,
        note: impl Into<String>,
        flow: FlowSpec,
        expected: BTreeMap<String, Expectation>,
        curvature: Option<f64>,
    ) -> Result<Scenario> {
        if flow.backend() == Backend::Graph {
            if let Some((id, _)) = expected
                .iter()
                .find(|(id, e)| **e != Expectation::Informational && needs_chain_rule(id))
            {
                return Err(Error::Invalid(format!(
                    "{id} is informational on the graph backend and cannot carry an expected verdict"
                )));
            }
        }
        let mut suite = SuiteConfig::for_flow(&flow);
        suite.curvature = curvature;
        Ok(Scenario {
            name: name.into(),
            note: note.into(),
            flow,
            expected,
            curvature,
            suite,
            bank_seed: 0,
            bank_size: 20,
        })
    }

    pub fn graded(&self) -> impl Iterator<Item = (&str, Expectation)> {
        self.expected
            .iter()
            .filter(|(_, e)| **e != Expectation::Informational)
            .map(|(id, e)| (id.as_str(), *e))
    }

    /// Graded expectations not matched by `result`.
    pub fn compare(&self, result: &SuiteResult) -> Vec<Mismatch> {
        self.graded()
            .filter_map(|(id, e)| {
                let report = result.report(id);
                let observed = report.map(|r| r.verdict);
                let ok = matches!(
                    (e, observed),
                    (Expectation::Pass, Some(Verdict::Pass)) | (Expectation::Fail, Some(Verdict::Fail))
                );
                (!ok).then(|| Mismatch {
                    id: id.to_string(),
                    expected: e,
                    observed,
                    margin: report.map(|r| r.margin),
                })
            })
            .collect()
    }
}

fn expect(ids: &[&str], e: Expectation, out: &mut BTreeMap<String, Expectation>) {
    for id in ids {
        out.insert((*id).to_string(), e);
    }
}

const ALL_DYNAMIC: [&str; 13] = [
    "E2", "E3", "E4", "E5", "E6", "E7", "E8", "E8-bound", "E9", "E10", "E11", "E12", "E11[2]",
];

fn informational_all(out: &mut BTreeMap<String, Expectation>) {
    expect(&ALL_DYNAMIC, Expectation::Informational, out);
}

/// Declared Lipschitz constant from the brute-force regularity sweep.
pub fn auto_lipschitz(flow: FlowSpec) -> Result<FlowSpec> {
    let report = validate_a1(&flow)?;
    let l = report.l_prime.max(report.ellipticity);
    flow.with_lipschitz(l)
}

fn curvature_of(flow: &FlowSpec) -> Result<f64> {
    Ok(estimate_curvature(&GeneratorSnapshot::from_flow(flow, 0))?.k_star)
}

/// Tolerance below which an estimated curvature counts as nonnegative.
const CURVATURE_SLACK: f64 = 1e-6;

/// Time-independent flow graded with the estimated curvature.
///
/// The static forms are expected to pass. The dynamic checks are expected
/// to pass only when the curvature is nonnegative, since only then is the
/// constant flow a super-Ricci flow. The static Harnack forms use constants
/// that are too strong for negative curvature and stay informational there.
pub fn static_scenario(name: &str, flow: FlowSpec) -> Result<Scenario> {
    if !flow.is_static() {
        return Err(Error::Invalid("static scenario needs a time-independent flow".into()));
    }
    let k = curvature_of(&flow)?;
    let circle = flow.backend() == Backend::Circle1d;
    let mut expected = BTreeMap::new();
    informational_all(&mut expected);
    expect(&["static-iia", "static-iib"], Expectation::Pass, &mut expected);
    expect(
        &["static-iiia", "static-iiib", "static-iv", "static-v"],
        Expectation::Informational,
        &mut expected,
    );
    if circle {
        expect(&["static-iiia", "static-iiib"], Expectation::Pass, &mut expected);
        if k >= -CURVATURE_SLACK {
            expect(&["static-iv", "static-v"], Expectation::Pass, &mut expected);
        }
    }
    if k >= -CURVATURE_SLACK {
        expect(&["E2", "E3", "E4", "E5", "E7", "E8", "E8-bound"], Expectation::Pass, &mut expected);
        if circle {
            expect(&["E6", "E9", "E10", "E11", "E11[2]", "E12"], Expectation::Pass, &mut expected);
        }
    }
    let note = format!("constant flow, estimated curvature {k:.6}");
    Scenario::new(name, note, flow, expected, Some(k))
}

/// `τ(t) = -ln(C - 2Kt) / (2K)`.
pub fn reparametrized_time(k: f64, c: f64, t: f64) -> f64 {
    -(c - 2.0 * k * t).ln() / (2.0 * k)
}

/// Time-dependent flow `(X, e^{-Kτ(t)} d, m)` run at speed `τ'(t)`: the
/// conductances carry the factor `1/(C - 2Kt)` and distances the factor
/// `(C - 2Kt)^{1/2}`. It is a super-Ricci flow when the static space has
/// curvature at least `K`.
pub fn reparametrize_k(name: &str, base: &FlowSpec, k: Option<f64>, c: f64, grid: TimeGrid) -> Result<Scenario> {
    if !base.is_static() {
        return Err(Error::Invalid("reparametrization needs a time-independent base".into()));
    }
    let k = match k {
        Some(k) => k,
        None => curvature_of(base)?,
    };
    if k == 0.0 || !k.is_finite() {
        return Err(Error::Domain(format!("reparametrization needs K != 0, got {k}")));
    }
    for t in [grid.t_start(), grid.t_end()] {
        if c - 2.0 * k * t <= 0.0 {
            return Err(Error::Domain(format!("2Kt = {} reaches C = {c} at t = {t}", 2.0 * k * t)));
        }
    }
    let flow = FlowSpec::from_static_base(
        base,
        grid,
        &|t| 1.0 / (c - 2.0 * k * t),
        &|t| 0.5 * (c - 2.0 * k * t).ln(),
        0.0,
    )?;
    let flow = auto_lipschitz(flow)?;
    let mut expected = BTreeMap::new();
    informational_all(&mut expected);
    expect(&["E2", "E3", "E7", "E8", "E8-bound"], Expectation::Pass, &mut expected);
    if flow.backend() == Backend::Circle1d {
        expect(&["E6", "E9", "E10", "E11", "E11[2]", "E12"], Expectation::Pass, &mut expected);
    }
    let note = format!("reparametrized with K = {k:.6}, C = {c}");
    Scenario::new(name, note, flow, expected, None)
}

/// Static circle with `f = a cos x`, whose curvature is `-a` at `x = 0`.
/// For `a > 0` the gradient and transport contraction fail; `a = 0` is the
/// flat circle.
pub fn concave_weight(name: &str, n: usize, a: f64, grid: TimeGrid) -> Result<Scenario> {
    let flow = build_circle1d(n, &|_, _| 0.0, &move |_, x: f64| a * x.cos(), grid, a.abs())?;
    let k = curvature_of(&flow)?;
    let mut expected = BTreeMap::new();
    informational_all(&mut expected);
    let verdict = if a > 0.0 { Expectation::Fail } else { Expectation::Pass };
    expect(&["E2", "E3"], verdict, &mut expected);
    let note = format!("static circle with f = {a} cos x, estimated curvature {k:.6}");
    let grid = *flow.grid();
    let mut s = Scenario::new(name, note, flow, expected, Some(k))?;
    s.suite.run_static = false;
    s.suite.pairs = short_pairs(&grid);
    Ok(s)
}

/// Pairs from `t_start` over 1/16, 1/8, 1/4, 1/2 and all of the window,
/// where local violations have not yet been smoothed out.
fn short_pairs(grid: &TimeGrid) -> Vec<(f64, f64)> {
    let n = grid.n_steps();
    let mut ks: Vec<usize> = [16, 8, 4, 2, 1].iter().map(|d| (n / d).max(1)).collect();
    ks.dedup();
    ks.into_iter().map(|k| (grid.t_start(), grid.time(k))).collect()
}

/// Horizon `ln(ratio) / (4 ratio K)` over which the shrinking flow is run.
pub fn shrink_horizon(k: f64, ratio: f64) -> f64 {
    ratio.ln() / (4.0 * ratio * k)
}

/// Static base sped up at rate `e^{2a(t-t0)}` with distances shrunk by
/// `e^{-a(t-t0)}`, where `a = ratio K*`. Shrinking at a rate above the
/// curvature budget breaks gradient and transport contraction; `ratio = 0`
/// gives back the static base.
pub fn shrink_too_fast(name: &str, base: &FlowSpec, ratio: f64, grid: TimeGrid) -> Result<Scenario> {
    if !base.is_static() {
        return Err(Error::Invalid("shrinking flow needs a time-independent base".into()));
    }
    let k = curvature_of(base)?;
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::Domain(format!("shrink ratio {ratio}")));
    }
    let a = ratio * k.max(0.0);
    let t0 = grid.t_start();
    let flow = FlowSpec::from_static_base(base, grid, &|t| (2.0 * a * (t - t0)).exp(), &|t| -a * (t - t0), a)?;
    let mut expected = BTreeMap::new();
    informational_all(&mut expected);
    let verdict = if a > 0.0 { Expectation::Fail } else { Expectation::Pass };
    expect(&["E2", "E3"], verdict, &mut expected);
    let note = format!("distances shrink at rate {a:.6} = {ratio} x curvature {k:.6}");
    Scenario::new(name, note, flow, expected, None)
}
