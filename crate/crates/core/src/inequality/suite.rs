//! Batch evaluation of every check over a bank, a set of time pairs and the
//! grid, with an implication matrix over the aggregated verdicts.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::estimate_curvature;
use crate::error::{Error, Result};
use crate::field::ProbabilityMeasure;
use crate::flow::{Backend, FlowSpec};
use crate::gamma::GeneratorSnapshot;
use crate::inequality::bank::{positive_variant, TestFunctionBank};
use crate::inequality::checks::{
    bochner_value, harnack_margins, log_harnack_margins, min_with_index, min_with_pair, point_margins, stencil,
    static_margin, PairContext, PointCheck, StaticVariant,
};
use crate::propagator::{adjoint_index, forward_index, forward_matrices};
use crate::report::{CheckReport, Verdict, Witness};
use crate::transport::wasserstein_with_metric;

/// Default tolerance of a flow: `1e-9` on graphs, `5e-3 + 10h² + 10dt²` on the circle.
pub fn default_tolerance(flow: &FlowSpec) -> f64 {
    match flow.circle() {
        Some(geom) => {
            let dt = flow.grid().dt();
            5e-3 + 10.0 * geom.spacing * geom.spacing + 10.0 * dt * dt
        }
        None => 1e-9,
    }
}

/// Checks whose proofs use the chain rule; on graphs they are informational.
pub const CHAIN_RULE_CHECKS: [&str; 6] = ["E6", "E9", "E10", "E11", "E12", "E8-bound"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub tol: f64,
    /// Number of equal segments whose endpoints form the time anchors.
    pub segments: usize,
    /// Explicit `(s, t)` pairs; anchors are used when empty.
    pub pairs: Vec<(f64, f64)>,
    pub alphas: Vec<f64>,
    /// Exponent of the transport cost.
    pub transport_p: u32,
    /// Number of nonnegative weights `g` for the Bochner checks.
    pub bochner_weights: usize,
    /// Number of random measure pairs for the contraction check.
    pub random_measures: usize,
    pub seed: u64,
    /// Curvature for the static forms; estimated when `None`.
    pub curvature: Option<f64>,
    pub run_static: bool,
    pub run_bochner: bool,
    pub run_transport: bool,
}

impl SuiteConfig {
    pub fn for_flow(flow: &FlowSpec) -> SuiteConfig {
        SuiteConfig {
            tol: default_tolerance(flow),
            segments: 4,
            pairs: Vec::new(),
            alphas: vec![2.0, 4.0, 8.0, 16.0],
            transport_p: match flow.backend() {
                Backend::Graph => 1,
                Backend::Circle1d => 2,
            },
            bochner_weights: 4,
            random_measures: 4,
            seed: 0,
            curvature: None,
            run_static: flow.is_static(),
            run_bochner: true,
            run_transport: true,
        }
    }
}

/// What a row measures; enough to recompute its margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RowKey {
    Point { check: PointCheck, ks: usize, kt: usize, function: usize, positive: bool },
    Harnack { alpha: f64, ks: usize, kt: usize, function: usize },
    LogHarnack { ks: usize, kt: usize, function: usize },
    Transport { ks: usize, kt: usize, pair: usize },
    Bochner { ks: usize, kt: usize, function: usize, weight: usize },
    BochnerPointwise { k: usize, function: usize, weight: usize },
    Static { variant: StaticVariant, duration: f64, function: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Row {
    pub inequality: String,
    pub function: String,
    pub s: f64,
    pub t: f64,
    pub witness: Witness,
    pub margin: f64,
    pub tol: f64,
    pub verdict: Verdict,
    #[serde(skip)]
    pub key: Option<RowKey>,
}

/// Two probability measures compared by the contraction check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurePair {
    pub id: String,
    pub mu: ProbabilityMeasure,
    pub nu: ProbabilityMeasure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImplicationStatus {
    Holds,
    Vacuous,
    Violated,
    /// Some ingredient was not evaluated.
    Skipped,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Implication {
    pub name: String,
    pub premise: Option<bool>,
    pub conclusion: Option<bool>,
    pub status: ImplicationStatus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteResult {
    pub tol: f64,
    pub seed: u64,
    pub transport_p: u32,
    pub pairs: Vec<(f64, f64)>,
    pub curvature: Option<f64>,
    pub rows: Vec<Row>,
    pub reports: BTreeMap<String, CheckReport>,
    pub implications: Vec<Implication>,
    #[serde(skip)]
    pub measures: Vec<MeasurePair>,
    #[serde(skip)]
    pub weights: Vec<Vec<f64>>,
    #[serde(skip)]
    pub weight_ids: Vec<String>,
}

impl SuiteResult {
    pub fn report(&self, id: &str) -> Option<&CheckReport> {
        self.reports.get(id)
    }

    pub fn verdict(&self, id: &str) -> Option<bool> {
        self.reports.get(id).map(|r| r.passed())
    }

    pub fn implication(&self, name: &str) -> Option<&Implication> {
        self.implications.iter().find(|i| i.name == name)
    }

    /// One CSV line per row.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["inequality", "u_id", "s", "t", "witness", "margin", "tol", "verdict"])?;
        for r in &self.rows {
            w.write_record([
                r.inequality.clone(),
                r.function.clone(),
                format!("{}", r.s),
                format!("{}", r.t),
                r.witness.describe(),
                format!("{:e}", r.margin),
                format!("{:e}", r.tol),
                r.verdict.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Time-anchor grid indices `round(i N / segments)`.
pub fn anchors(flow: &FlowSpec, segments: usize) -> Vec<usize> {
    let n = flow.grid().n_steps();
    let seg = segments.clamp(1, n);
    let mut out: Vec<usize> = (0..=seg).map(|i| (i * n + seg / 2) / seg).collect();
    out.dedup();
    out
}

fn pair_indices(flow: &FlowSpec, config: &SuiteConfig) -> Result<Vec<(usize, usize)>> {
    if config.pairs.is_empty() {
        let a = anchors(flow, config.segments);
        let mut out = Vec::new();
        for i in 0..a.len() {
            for j in (i + 1)..a.len() {
                out.push((a[i], a[j]));
            }
        }
        Ok(out)
    } else {
        config.pairs.iter().map(|&(s, t)| flow.grid().pair(s, t)).collect()
    }
}

/// Dirac pairs and seeded random pairs for the contraction check.
pub fn measure_pairs(flow: &FlowSpec, count: usize, seed: u64) -> Vec<MeasurePair> {
    let n = flow.n();
    let mut out = Vec::new();
    let mut dirac = |x: usize, y: usize| {
        if x != y {
            out.push(MeasurePair {
                id: format!("dirac({x},{y})"),
                mu: ProbabilityMeasure::dirac(n, x),
                nu: ProbabilityMeasure::dirac(n, y),
            });
        }
    };
    if flow.circle().is_some() {
        let stride = (n / 16).max(1);
        for x in (0..n).step_by(stride) {
            for k in [1, 2, 4, n / 8] {
                dirac(x, (x + k) % n);
            }
        }
    } else if n <= 8 {
        for x in 0..n {
            for y in (x + 1)..n {
                dirac(x, y);
            }
        }
    } else {
        for x in 0..n {
            dirac(x, (x + 1) % n);
            dirac(x, (x + n / 2) % n);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_d0e2);
    for i in 0..count {
        let mut draw = || {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
            ProbabilityMeasure::normalized(w).expect("positive weights")
        };
        let (mu, nu) = (draw(), draw());
        out.push(MeasurePair {
            id: format!("random{i}"),
            mu,
            nu,
        });
    }
    out
}

/// `P̂_{t,s}μ = (P*_{t,s}(dμ/dm_t)) m_s` through a dense adjoint matrix.
fn dual_image(adj: &DMatrix<f64>, mt: &[f64], ms: &[f64], mu: &ProbabilityMeasure) -> Result<ProbabilityMeasure> {
    let n = mt.len();
    let density: Vec<f64> = mu.weights().iter().zip(mt).map(|(a, m)| a / m).collect();
    let w: Vec<f64> = (0..n)
        .map(|x| {
            let v: f64 = (0..n).map(|y| adj[(x, y)] * density[y]).sum();
            (v * ms[x]).max(0.0)
        })
        .collect();
    ProbabilityMeasure::normalized(w)
}

fn adjoint_dense(flow: &FlowSpec, ks: usize, kt: usize) -> Result<DMatrix<f64>> {
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

fn transport_margin(flow: &FlowSpec, adj: &DMatrix<f64>, ks: usize, kt: usize, pair: &MeasurePair, p: u32) -> Result<f64> {
    let mt = flow.measure_weights(kt);
    let ms = flow.measure_weights(ks);
    let wt = wasserstein_with_metric(&flow.metric_matrix(kt), &pair.mu, &pair.nu, p)?.distance();
    let pmu = dual_image(adj, &mt, &ms, &pair.mu)?;
    let pnu = dual_image(adj, &mt, &ms, &pair.nu)?;
    let ws = wasserstein_with_metric(&flow.metric_matrix(ks), &pmu, &pnu, p)?.distance();
    Ok(wt - ws)
}

fn point_id(check: PointCheck) -> &'static str {
    match check {
        PointCheck::GradientL2 => "E3",
        PointCheck::GradientL1 => "E6",
        PointCheck::PoincareUpper => "E7",
        PointCheck::PoincareLower => "E8",
        PointCheck::UniformBound => "E8-bound",
        PointCheck::LogSobolevUpper => "E9",
        PointCheck::LogSobolevLower => "E10",
    }
}

fn harnack_id(alpha: f64) -> String {
    format!("E11[{alpha}]")
}

struct Work<'a> {
    flow: &'a FlowSpec,
    bank: &'a TestFunctionBank,
    positives: Vec<Vec<f64>>,
    tol: f64,
}

impl Work<'_> {
    fn function_id(&self, i: usize, positive: bool) -> String {
        let id = &self.bank.functions[i].id;
        if positive {
            format!("pos({id})")
        } else {
            id.clone()
        }
    }

    fn values(&self, i: usize, positive: bool) -> &[f64] {
        if positive {
            &self.positives[i]
        } else {
            self.bank.functions[i].values.values()
        }
    }

    fn row(&self, inequality: String, function: String, s: f64, t: f64, witness: Witness, margin: f64, key: RowKey) -> Row {
        Row {
            inequality,
            function,
            s,
            t,
            witness,
            margin,
            tol: self.tol,
            verdict: Verdict::from_margin(margin, self.tol),
            key: Some(key),
        }
    }

    fn pair_rows(&self, ctx: &PairContext, ks: usize, kt: usize, alphas: &[f64]) -> Vec<Row> {
        let mut rows = Vec::new();
        let checks = [
            PointCheck::GradientL2,
            PointCheck::GradientL1,
            PointCheck::PoincareUpper,
            PointCheck::PoincareLower,
            PointCheck::UniformBound,
            PointCheck::LogSobolevUpper,
            PointCheck::LogSobolevLower,
        ];
        for f in 0..self.bank.len() {
            for check in checks {
                let positive = check.needs_positive();
                let (margin, x) = min_with_index(&point_margins(ctx, check, self.values(f, positive)));
                rows.push(self.row(
                    point_id(check).into(),
                    self.function_id(f, positive),
                    ctx.s,
                    ctx.t,
                    Witness {
                        s: Some(ctx.s),
                        t: Some(ctx.t),
                        x: Some(x),
                        function: Some(self.function_id(f, positive)),
                        ..Witness::default()
                    },
                    margin,
                    RowKey::Point {
                        check,
                        ks,
                        kt,
                        function: f,
                        positive,
                    },
                ));
            }
            let u = self.values(f, true);
            for &alpha in alphas {
                let (margin, x, y) = min_with_pair(&harnack_margins(ctx, u, alpha));
                rows.push(self.row(
                    harnack_id(alpha),
                    self.function_id(f, true),
                    ctx.s,
                    ctx.t,
                    Witness {
                        s: Some(ctx.s),
                        t: Some(ctx.t),
                        x: Some(x),
                        y: Some(y),
                        function: Some(self.function_id(f, true)),
                        alpha: Some(alpha),
                        ..Witness::default()
                    },
                    margin,
                    RowKey::Harnack {
                        alpha,
                        ks,
                        kt,
                        function: f,
                    },
                ));
            }
            let (margin, x, y) = min_with_pair(&log_harnack_margins(ctx, u));
            rows.push(self.row(
                "E12".into(),
                self.function_id(f, true),
                ctx.s,
                ctx.t,
                Witness {
                    s: Some(ctx.s),
                    t: Some(ctx.t),
                    x: Some(x),
                    y: Some(y),
                    function: Some(self.function_id(f, true)),
                    ..Witness::default()
                },
                margin,
                RowKey::LogHarnack { ks, kt, function: f },
            ));
        }
        rows
    }
}

fn bochner_weights(bank: &TestFunctionBank, count: usize) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut w = vec![vec![1.0; bank.functions[0].values.len()]];
    let mut ids = vec!["1".to_string()];
    for f in bank.non_constant().take(count) {
        w.push(positive_variant(&f.values));
        ids.push(format!("pos({})", f.id));
    }
    (w, ids)
}

/// Runs every check of the suite.
pub fn run_suite(flow: &FlowSpec, bank: &TestFunctionBank, config: &SuiteConfig) -> Result<SuiteResult> {
    if bank.functions.iter().any(|f| f.values.len() != flow.n()) {
        return Err(Error::Shape {
            expected: flow.n(),
            got: bank.functions[0].values.len(),
        });
    }
    let pairs = pair_indices(flow, config)?;
    let grid = flow.grid();
    let work = Work {
        flow,
        bank,
        positives: bank.functions.iter().map(|f| positive_variant(&f.values)).collect(),
        tol: config.tol,
    };

    // dense propagators grouped by start index
    let mut contexts = Vec::with_capacity(pairs.len());
    let mut starts: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    starts.dedup();
    for &ks in &starts {
        let targets: Vec<usize> = pairs.iter().filter(|p| p.0 == ks).map(|p| p.1).collect();
        let mats = forward_matrices(flow, ks, &targets)?;
        for (kt, p) in targets.into_iter().zip(mats) {
            contexts.push((ks, kt, PairContext::with_propagator(flow, ks, kt, p)));
        }
    }

    let mut rows: Vec<Row> = contexts
        .par_iter()
        .map(|(ks, kt, ctx)| work.pair_rows(ctx, *ks, *kt, &config.alphas))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let measures = if config.run_transport {
        measure_pairs(flow, config.random_measures, config.seed)
    } else {
        Vec::new()
    };
    if config.run_transport {
        for &(ks, kt) in &pairs {
            let adj = adjoint_dense(flow, ks, kt)?;
            let (s, t) = (grid.time(ks), grid.time(kt));
            let margins: Vec<f64> = measures
                .par_iter()
                .map(|m| transport_margin(flow, &adj, ks, kt, m, config.transport_p))
                .collect::<Result<_>>()?;
            for (i, (m, margin)) in measures.iter().zip(margins).enumerate() {
                rows.push(work.row(
                    "E2".into(),
                    m.id.clone(),
                    s,
                    t,
                    Witness {
                        s: Some(s),
                        t: Some(t),
                        function: Some(m.id.clone()),
                        ..Witness::default()
                    },
                    margin,
                    RowKey::Transport { ks, kt, pair: i },
                ));
            }
        }
    }

    let (weights, weight_ids) = bochner_weights(bank, config.bochner_weights);
    if config.run_bochner {
        rows.extend(bochner_rows(&work, &weights, &weight_ids, config)?);
    }

    let mut curvature = None;
    if config.run_static {
        let snap = GeneratorSnapshot::from_flow(flow, 0);
        let k = match config.curvature {
            Some(k) => k,
            None => estimate_curvature(&snap)?.k_star,
        };
        curvature = Some(k);
        let dist = flow.metric_matrix(0);
        let mut durations: Vec<f64> = pairs.iter().map(|&(a, b)| grid.time(b) - grid.time(a)).collect();
        durations.sort_by(f64::total_cmp);
        durations.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        let mut variants: Vec<StaticVariant> = StaticVariant::all(2.0)[..4].to_vec();
        variants.extend(config.alphas.iter().map(|&a| StaticVariant::Harnack(a)));
        variants.push(StaticVariant::LogHarnack);
        let per_duration: Vec<Vec<Row>> = durations
            .par_iter()
            .map(|&tau| -> Result<Vec<Row>> {
                let ctx = PairContext::frozen(&snap, dist.clone(), k, tau)?;
                let mut out = Vec::new();
                for f in 0..bank.len() {
                    for &variant in &variants {
                        let positive = !matches!(variant, StaticVariant::PoincareUpper | StaticVariant::PoincareLower);
                        let (margin, x, y) = static_margin(&ctx, variant, work.values(f, positive));
                        let (id, alpha) = match variant {
                            StaticVariant::Harnack(a) => (format!("static-iv[{a}]"), Some(a)),
                            v => (v.id().to_string(), None),
                        };
                        out.push(work.row(
                            id,
                            work.function_id(f, positive),
                            snap.t(),
                            snap.t() + tau,
                            Witness {
                                t: Some(tau),
                                x: Some(x),
                                y,
                                function: Some(work.function_id(f, positive)),
                                alpha,
                                ..Witness::default()
                            },
                            margin,
                            RowKey::Static {
                                variant,
                                duration: tau,
                                function: f,
                            },
                        ));
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        rows.extend(per_duration.into_iter().flatten());
    }

    let reports = aggregate(&rows, config.tol);
    let implications = implication_matrix(&reports, &config.alphas);
    Ok(SuiteResult {
        tol: config.tol,
        seed: config.seed,
        transport_p: config.transport_p,
        pairs: pairs.iter().map(|&(a, b)| (grid.time(a), grid.time(b))).collect(),
        curvature,
        rows,
        reports,
        implications,
        measures,
        weights,
        weight_ids,
    })
}

fn bochner_rows(work: &Work, weights: &[Vec<f64>], weight_ids: &[String], config: &SuiteConfig) -> Result<Vec<Row>> {
    let flow = work.flow;
    let grid = flow.grid();
    let (ks, kt) = if config.pairs.is_empty() {
        (0, grid.n_steps())
    } else {
        pair_indices(flow, config)?
            .into_iter()
            .fold((usize::MAX, 0), |(a, b), (s, t)| (a.min(s), b.max(t)))
    };
    if kt < ks + 2 {
        return Ok(Vec::new());
    }
    let snaps: Vec<GeneratorSnapshot> = (ks..=kt).map(|k| GeneratorSnapshot::from_flow(flow, k)).collect();
    let snap = |k: usize| &snaps[k - ks];
    let dt = grid.dt();
    let nf = work.bank.len();
    let forwards: Vec<_> = (0..nf)
        .into_par_iter()
        .map(|f| forward_index(flow, ks, kt, work.values(f, false)))
        .collect::<Result<_>>()?;
    let adjoints: Vec<_> = weights
        .par_iter()
        .map(|g| adjoint_index(flow, kt, ks, g))
        .collect::<Result<_>>()?;
    let (s, t) = (grid.time(ks), grid.time(kt));

    // integrated form along trajectories
    let combos: Vec<(usize, usize)> = (0..nf).flat_map(|f| (0..weights.len()).map(move |w| (f, w))).collect();
    let mut rows: Vec<Row> = combos
        .par_iter()
        .map(|&(f, w)| -> Result<Row> {
            let mut best = (f64::INFINITY, ks + 1);
            for k in (ks + 1)..kt {
                let v = bochner_value(
                    [snap(k - 1), snap(k), snap(k + 1)],
                    2.0 * dt,
                    forwards[f].at(k),
                    adjoints[w].at(k),
                )?;
                if v < best.0 {
                    best = (v, k);
                }
            }
            let id = format!("{}|{}", work.function_id(f, false), weight_ids[w]);
            Ok(work.row(
                "E4".into(),
                id.clone(),
                s,
                t,
                Witness {
                    s: Some(s),
                    t: Some(t),
                    r: Some(grid.time(best.1)),
                    function: Some(id),
                    ..Witness::default()
                },
                best.0,
                RowKey::Bochner {
                    ks,
                    kt,
                    function: f,
                    weight: w,
                },
            ))
        })
        .collect::<Result<_>>()?;

    // pointwise form at interior anchors and segment midpoints
    let mut times: Vec<usize> = anchors(flow, 2 * config.segments.max(1))
        .into_iter()
        .filter(|&k| k > 0 && k < grid.n_steps())
        .collect();
    times.dedup();
    let pointwise: Vec<Row> = times
        .par_iter()
        .flat_map_iter(|&k| {
            let (lo, hi) = stencil(flow, k);
            let lo_s = GeneratorSnapshot::from_flow(flow, lo);
            let mid = GeneratorSnapshot::from_flow(flow, k);
            let hi_s = GeneratorSnapshot::from_flow(flow, hi);
            let span = (hi - lo) as f64 * dt;
            let tk = grid.time(k);
            let mut out = Vec::new();
            for f in 0..nf {
                for (w, g) in weights.iter().enumerate() {
                    let v = 2.0
                        * bochner_value([&lo_s, &mid, &hi_s], span, work.values(f, false), g)
                            .expect("shapes checked");
                    let id = format!("{}|{}", work.function_id(f, false), weight_ids[w]);
                    out.push(work.row(
                        "E5".into(),
                        id.clone(),
                        tk,
                        tk,
                        Witness {
                            t: Some(tk),
                            function: Some(id),
                            ..Witness::default()
                        },
                        v,
                        RowKey::BochnerPointwise { k, function: f, weight: w },
                    ));
                }
            }
            out
        })
        .collect();
    rows.extend(pointwise);
    Ok(rows)
}

/// Minimum margin per inequality id; `E11` and `static-iv` also aggregate
/// over exponents.
fn aggregate(rows: &[Row], tol: f64) -> BTreeMap<String, CheckReport> {
    let mut out: BTreeMap<String, CheckReport> = BTreeMap::new();
    for r in rows {
        let mut ids = vec![r.inequality.clone()];
        if r.inequality.starts_with("E11[") {
            ids.push("E11".into());
        }
        if r.inequality.starts_with("static-iv[") {
            ids.push("static-iv".into());
        }
        for id in ids {
            let report = CheckReport::new(id.clone(), r.margin, r.witness.clone(), tol, "suite", 1);
            match out.remove(&id) {
                Some(prev) => {
                    out.insert(id, prev.merge(report));
                }
                None => {
                    out.insert(id, report);
                }
            }
        }
    }
    out
}

fn implication(name: &str, premise: Option<bool>, conclusion: Option<bool>) -> Implication {
    let status = match (premise, conclusion) {
        (Some(false), _) => ImplicationStatus::Vacuous,
        (Some(true), Some(true)) => ImplicationStatus::Holds,
        (Some(true), Some(false)) => ImplicationStatus::Violated,
        _ => ImplicationStatus::Skipped,
    };
    Implication {
        name: name.into(),
        premise,
        conclusion,
        status,
    }
}

fn both(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    Some(a? && b?)
}

fn implication_matrix(reports: &BTreeMap<String, CheckReport>, alphas: &[f64]) -> Vec<Implication> {
    let v = |id: &str| reports.get(id).map(|r| r.passed());
    let mut out = vec![
        implication("E3 => E7 & E8", v("E3"), both(v("E7"), v("E8"))),
        implication("E7 & E8 => E3", both(v("E7"), v("E8")), v("E3")),
        implication("E6 => E3", v("E6"), v("E3")),
        implication("E6 => E9 & E10", v("E6"), both(v("E9"), v("E10"))),
    ];
    for &a in alphas.iter().filter(|&&a| a == 2.0 || a == 4.0) {
        out.push(implication(&format!("E6 => {}", harnack_id(a)), v("E6"), v(&harnack_id(a))));
    }
    for w in alphas.windows(2) {
        out.push(implication(
            &format!("{} => {}", harnack_id(w[0]), harnack_id(w[1])),
            v(&harnack_id(w[0])),
            v(&harnack_id(w[1])),
        ));
    }
    out.push(implication("E11 => E12", v("E11"), v("E12")));
    out.push(implication("E8 => E4", v("E8"), v("E4")));
    out.push(implication("E8 => E8-bound", v("E8"), v("E8-bound")));
    out.push(implication("E4 => E5", v("E4"), v("E5")));
    out
}

/// Recomputes the margin of a row from scratch.
pub fn reevaluate(flow: &FlowSpec, bank: &TestFunctionBank, result: &SuiteResult, row: &Row) -> Result<f64> {
    let key = row
        .key
        .as_ref()
        .ok_or_else(|| Error::Invalid("row carries no evaluation key".into()))?;
    let positives = |f: usize| positive_variant(&bank.functions[f].values);
    Ok(match key {
        RowKey::Point {
            check,
            ks,
            kt,
            function,
            positive,
        } => {
            let ctx = PairContext::new(flow, *ks, *kt)?;
            let u = if *positive {
                positives(*function)
            } else {
                bank.functions[*function].values.values().to_vec()
            };
            min_with_index(&point_margins(&ctx, *check, &u)).0
        }
        RowKey::Harnack { alpha, ks, kt, function } => {
            let ctx = PairContext::new(flow, *ks, *kt)?;
            min_with_pair(&harnack_margins(&ctx, &positives(*function), *alpha)).0
        }
        RowKey::LogHarnack { ks, kt, function } => {
            let ctx = PairContext::new(flow, *ks, *kt)?;
            min_with_pair(&log_harnack_margins(&ctx, &positives(*function))).0
        }
        RowKey::Transport { ks, kt, pair } => {
            let adj = adjoint_dense(flow, *ks, *kt)?;
            transport_margin(flow, &adj, *ks, *kt, &result.measures[*pair], result.transport_p)?
        }
        RowKey::Bochner {
            ks,
            kt,
            function,
            weight,
        } => {
            let fwd = forward_index(flow, *ks, *kt, bank.functions[*function].values.values())?;
            let adj = adjoint_index(flow, *kt, *ks, &result.weights[*weight])?;
            let dt = flow.grid().dt();
            let mut best = f64::INFINITY;
            for k in (ks + 1)..*kt {
                let snaps = [
                    GeneratorSnapshot::from_flow(flow, k - 1),
                    GeneratorSnapshot::from_flow(flow, k),
                    GeneratorSnapshot::from_flow(flow, k + 1),
                ];
                let v = bochner_value([&snaps[0], &snaps[1], &snaps[2]], 2.0 * dt, fwd.at(k), adj.at(k))?;
                best = best.min(v);
            }
            best
        }
        RowKey::BochnerPointwise { k, function, weight } => {
            let (lo, hi) = stencil(flow, *k);
            let snaps = [
                GeneratorSnapshot::from_flow(flow, lo),
                GeneratorSnapshot::from_flow(flow, *k),
                GeneratorSnapshot::from_flow(flow, hi),
            ];
            let span = (hi - lo) as f64 * flow.grid().dt();
            2.0 * bochner_value(
                [&snaps[0], &snaps[1], &snaps[2]],
                span,
                bank.functions[*function].values.values(),
                &result.weights[*weight],
            )?
        }
        RowKey::Static {
            variant,
            duration,
            function,
        } => {
            let snap = GeneratorSnapshot::from_flow(flow, 0);
            let k = result
                .curvature
                .ok_or_else(|| Error::Invalid("static rows need a curvature".into()))?;
            let ctx = PairContext::frozen(&snap, flow.metric_matrix(0), k, *duration)?;
            let positive = !matches!(variant, StaticVariant::PoincareUpper | StaticVariant::PoincareLower);
            let u = if positive {
                positives(*function)
            } else {
                bank.functions[*function].values.values().to_vec()
            };
            static_margin(&ctx, *variant, &u).0
        }
    })
}
