//! Scenario files: TOML with closed-form paths written as expressions in
//! `t` and `x`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{build_circle1d, FlowSpec, GraphMetric, Paths, StateSpace, TimeGrid};
use crate::scenario::{
    auto_lipschitz, concave_weight, reparametrize_k, shrink_horizon, shrink_too_fast, static_scenario, Expectation,
    Scenario,
};

pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub note: String,
    /// A number or `"auto"`.
    #[serde(default)]
    pub lipschitz: Option<Number>,
    pub grid: GridSection,
    pub space: SpaceSection,
    #[serde(default)]
    pub construction: Construction,
    #[serde(default)]
    pub bank: BankSection,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub expect: BTreeMap<String, Expectation>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Number {
    Value(f64),
    Keyword(String),
}

impl Number {
    /// `None` for `"auto"`.
    fn value(&self, what: &str) -> Result<Option<f64>> {
        match self {
            Number::Value(v) => Ok(Some(*v)),
            Number::Keyword(k) if k == "auto" => Ok(None),
            Number::Keyword(k) => Err(Error::Parse(format!("{what}: expected a number or \"auto\", got {k:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_start: f64,
    /// Omitted only for shrinking flows, whose horizon is derived.
    pub t_end: Option<f64>,
    pub n_steps: usize,
}

/// A constant or an expression in `t` and `x`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Expr {
    Value(f64),
    Text(String),
}

impl Expr {
    pub fn compile(&self, what: &str) -> Result<Box<dyn Fn(f64, f64) -> f64>> {
        match self {
            Expr::Value(v) => {
                let v = *v;
                Ok(Box::new(move |_, _| v))
            }
            Expr::Text(s) => {
                let e: meval::Expr = s
                    .parse()
                    .map_err(|e| Error::Parse(format!("{what}: cannot parse {s:?}: {e}")))?;
                let f = e
                    .bind2("t", "x")
                    .map_err(|e| Error::Parse(format!("{what}: {s:?}: {e}")))?;
                Ok(Box::new(f))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceSection {
    Graph {
        base_measure: Vec<f64>,
        #[serde(default)]
        labels: Option<Vec<String>>,
        edges: Vec<[usize; 2]>,
        /// One expression per edge; `x` is the edge index.
        #[serde(default)]
        conductance: Vec<Expr>,
        /// One expression per state; `x` is the state index. Zero when omitted.
        #[serde(default)]
        log_density: Vec<Expr>,
        #[serde(default)]
        metric: MetricSection,
        /// Grid samples replacing the expressions.
        #[serde(default)]
        tables: Option<Tables>,
    },
    Circle {
        n: usize,
        #[serde(default = "zero_expr")]
        phi: Expr,
        #[serde(default = "zero_expr")]
        f: Expr,
    },
}

fn zero_expr() -> Expr {
    Expr::Value(0.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tables {
    pub log_density: Vec<Vec<f64>>,
    pub conductance: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSection {
    #[default]
    Intrinsic,
    Keyword(String),
    Matrix {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        log_scale: Option<Expr>,
    },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Construction {
    /// The space as written, graded by `[expect]` only.
    #[default]
    Custom,
    Static,
    Reparametrize {
        #[serde(default = "auto")]
        k: Number,
        c: f64,
    },
    /// Replaces the circle weight by `a cos x`.
    ConcaveWeight { a: f64 },
    ShrinkTooFast {
        ratio: f64,
        /// Ratio fixing the horizon when `t_end` is omitted; defaults to `ratio`.
        #[serde(default)]
        horizon_ratio: Option<f64>,
    },
}

fn auto() -> Number {
    Number::Keyword("auto".into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSection {
    pub seed: u64,
    pub size: usize,
}

impl Default for BankSection {
    fn default() -> Self {
        BankSection { seed: 0, size: 20 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub pairs: Option<Vec<[f64; 2]>>,
    pub segments: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub transport_p: Option<u32>,
    pub random_measures: Option<usize>,
    pub bochner_weights: Option<usize>,
    /// Curvature for the static forms: a number or `"auto"`.
    pub curvature: Option<Number>,
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.schema != SCHEMA {
        return Err(Error::Parse(format!("unsupported schema {}, expected {SCHEMA}", file.schema)));
    }
    Ok(file)
}

/// Reads and builds a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)?.build()
}

impl ScenarioFile {
    fn grid(&self) -> Result<TimeGrid> {
        let t_end = match (self.grid.t_end, &self.construction) {
            (Some(t), _) => t,
            (None, Construction::ShrinkTooFast { ratio, horizon_ratio }) => {
                let base = self.base_flow(TimeGrid::new(self.grid.t_start, self.grid.t_start + 1.0, 1)?)?;
                let k = crate::curvature::estimate_curvature(&crate::gamma::GeneratorSnapshot::from_flow(&base, 0))?
                    .k_star;
                let r = horizon_ratio.unwrap_or(*ratio);
                let h = shrink_horizon(k, r);
                if !(h.is_finite() && h > 0.0) {
                    return Err(Error::Parse(format!(
                        "grid.t_end: derived horizon {h} is unusable; give t_end explicitly"
                    )));
                }
                self.grid.t_start + h
            }
            _ => return Err(Error::Parse("grid.t_end is required".into())),
        };
        TimeGrid::new(self.grid.t_start, t_end, self.grid.n_steps)
    }

    fn base_flow(&self, grid: TimeGrid) -> Result<FlowSpec> {
        let lipschitz = match &self.lipschitz {
            Some(n) => n.value("lipschitz")?,
            None => None,
        };
        let flow = match &self.space {
            SpaceSection::Circle { n, phi, f } => {
                let phi = phi.compile("space.phi")?;
                let f = f.compile("space.f")?;
                build_circle1d(*n, &*phi, &*f, grid, lipschitz.unwrap_or(0.0))?
            }
            SpaceSection::Graph {
                base_measure,
                labels,
                edges,
                conductance,
                log_density,
                metric,
                tables,
            } => {
                let space = StateSpace::new(base_measure.clone(), labels.clone())?;
                let n = space.n();
                let edge_list: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                let metric = graph_metric(metric, &grid, n)?;
                match tables {
                    Some(t) => FlowSpec::graph_from_tables(
                        space,
                        grid,
                        &edge_list,
                        t.log_density.clone(),
                        t.conductance.clone(),
                        metric,
                        lipschitz.unwrap_or(0.0),
                    )?,
                    None => {
                        if conductance.len() != edges.len() {
                            return Err(Error::Parse(format!(
                                "space.conductance: {} expressions for {} edges",
                                conductance.len(),
                                edges.len()
                            )));
                        }
                        if !log_density.is_empty() && log_density.len() != n {
                            return Err(Error::Parse(format!(
                                "space.log_density: {} expressions for {n} states",
                                log_density.len()
                            )));
                        }
                        let cs = conductance
                            .iter()
                            .map(|e| e.compile("space.conductance"))
                            .collect::<Result<Vec<_>>>()?;
                        let fs = log_density
                            .iter()
                            .map(|e| e.compile("space.log_density"))
                            .collect::<Result<Vec<_>>>()?;
                        let log_density_fn = |t: f64, out: &mut [f64]| {
                            for (i, o) in out.iter_mut().enumerate() {
                                *o = fs.get(i).map_or(0.0, |f| f(t, i as f64));
                            }
                        };
                        let conductance_fn = |t: f64, out: &mut [f64]| {
                            for (i, o) in out.iter_mut().enumerate() {
                                *o = cs[i](t, i as f64);
                            }
                        };
                        let paths = Paths {
                            log_density: &log_density_fn,
                            conductance: &conductance_fn,
                        };
                        FlowSpec::graph(space, grid, &edge_list, &paths, metric, lipschitz.unwrap_or(0.0))?
                    }
                }
            }
        };
        if lipschitz.is_none() && !matches!(self.construction, Construction::Reparametrize { .. }) {
            auto_lipschitz(flow)
        } else {
            Ok(flow)
        }
    }

    /// Builds the flow and its expectations; `[expect]` entries override
    /// the construction's defaults.
    pub fn build(&self) -> Result<Scenario> {
        let grid = self.grid()?;
        let mut scenario = match &self.construction {
            Construction::Custom => {
                Scenario::new(&self.name, &self.note, self.base_flow(grid)?, BTreeMap::new(), None)?
            }
            Construction::Static => static_scenario(&self.name, self.base_flow(grid)?)?,
            Construction::Reparametrize { k, c } => {
                let base = self.base_flow(grid)?;
                reparametrize_k(&self.name, &base, k.value("construction.k")?, *c, grid)?
            }
            Construction::ConcaveWeight { a } => {
                let n = match &self.space {
                    SpaceSection::Circle { n, .. } => *n,
                    _ => return Err(Error::Parse("concave-weight needs a circle space".into())),
                };
                concave_weight(&self.name, n, *a, grid)?
            }
            Construction::ShrinkTooFast { ratio, .. } => {
                let base = self.base_flow(grid)?;
                shrink_too_fast(&self.name, &base, *ratio, grid)?
            }
        };
        if !self.note.is_empty() {
            scenario.note = format!("{} ({})", self.note, scenario.note);
        }
        let mut expected = scenario.expected.clone();
        expected.extend(self.expect.clone());
        let curvature = match &self.check.curvature {
            Some(n) => n.value("check.curvature")?.or(scenario.curvature),
            None => scenario.curvature,
        };
        let suite = scenario.suite.clone();
        let mut out = Scenario::new(scenario.name, scenario.note, scenario.flow, expected, curvature)?;
        out.suite = suite;
        out.suite.curvature = curvature;
        out.bank_seed = self.bank.seed;
        out.bank_size = self.bank.size;
        out.suite.seed = self.bank.seed;
        let c = &self.check;
        if let Some(p) = &c.pairs {
            out.suite.pairs = p.iter().map(|p| (p[0], p[1])).collect();
        }
        if let Some(v) = c.segments {
            out.suite.segments = v;
        }
        if let Some(v) = &c.alphas {
            if v.iter().any(|a| !(*a > 1.0)) {
                return Err(Error::Parse("check.alphas must exceed 1".into()));
            }
            out.suite.alphas = v.clone();
        }
        if let Some(v) = c.tol {
            out.suite.tol = v;
        }
        if let Some(v) = c.transport_p {
            if !(v == 1 || v == 2) {
                return Err(Error::Parse(format!("check.transport_p must be 1 or 2, got {v}")));
            }
            out.suite.transport_p = v;
        }
        if let Some(v) = c.random_measures {
            out.suite.random_measures = v;
        }
        if let Some(v) = c.bochner_weights {
            out.suite.bochner_weights = v;
        }
        Ok(out)
    }
}

fn graph_metric(section: &MetricSection, grid: &TimeGrid, n: usize) -> Result<GraphMetric> {
    match section {
        MetricSection::Intrinsic => Ok(GraphMetric::Intrinsic),
        MetricSection::Keyword(k) if k == "intrinsic" => Ok(GraphMetric::Intrinsic),
        MetricSection::Keyword(k) => Err(Error::Parse(format!("space.metric: unknown metric {k:?}"))),
        MetricSection::Matrix { matrix, log_scale } => {
            if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                return Err(Error::Parse(format!("space.metric.matrix must be {n} x {n}")));
            }
            let base = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
            match log_scale {
                None => Ok(GraphMetric::Static(base)),
                Some(e) => {
                    let f = e.compile("space.metric.log_scale")?;
                    Ok(GraphMetric::Scaled {
                        base,
                        log_scale: grid.times().map(|t| f(t, 0.0)).collect(),
                    })
                }
            }
        }
    }
}
