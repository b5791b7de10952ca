//! Time-dependent finite metric measure spaces.
//!
//! A [`FlowSpec`] samples a log-density path `f_t`, a symmetric conductance
//! path `c_t` and a metric path `d_t` on a uniform [`TimeGrid`]. The measure
//! at time `t` is `m_t = exp(-f_t) m` for a fixed base measure `m`, and the
//! Laplacian is `Δ_t u(x) = (1/m_t(x)) Σ_y c_t(x,y) (u(y) - u(x))`.
//!
//! Besides the grid samples, every flow stores per-step averaged transition
//! rates `(1/dt) ∫ c_τ(x,y) / m_τ(x) dτ` over each grid step. The propagator
//! freezes the generator to this average on each step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Measure;

/// Relative tolerance used to decide whether a time lies on the grid.
const GRID_SNAP: f64 = 1e-7;

/// Gauss-Legendre nodes and weights on [-1, 1], four points.
const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// The state set together with its base measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    base_measure: Vec<f64>,
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(base_measure: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = base_measure.len();
        if n < 2 {
            return Err(Error::Structure(format!("need at least 2 states, got {n}")));
        }
        if let Some(i) = base_measure
            .iter()
            .position(|m| !(m.is_finite() && *m > 0.0))
        {
            return Err(Error::Structure(format!(
                "base measure must be positive, m({i}) = {}",
                base_measure[i]
            )));
        }
        let labels = match labels {
            Some(l) if l.len() != n => {
                return Err(Error::Shape {
                    expected: n,
                    got: l.len(),
                })
            }
            Some(l) => l,
            None => (0..n).map(|i| i.to_string()).collect(),
        };
        Ok(StateSpace {
            base_measure,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.base_measure.len()
    }

    pub fn base_measure(&self) -> &[f64] {
        &self.base_measure
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Uniform time grid `t_start = t_0 < t_1 < ... < t_{n_steps} = t_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_start <= 0.0 || t_end <= t_start {
            return Err(Error::Invalid(format!(
                "time grid needs 0 < t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(Error::Invalid("time grid needs at least one step".into()));
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            n_steps,
        })
    }

    /// Grid with spacing as close as possible to `dt`.
    pub fn with_step(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        let n = ((t_end - t_start) / dt).round().max(1.0) as usize;
        TimeGrid::new(t_start, t_end, n)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid times, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    /// Index of the grid time equal to `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let pos = (t - self.t_start) / dt;
        let k = pos.round();
        if !pos.is_finite() || (pos - k).abs() > GRID_SNAP || k < 0.0 || k > self.n_steps as f64
        {
            return Err(Error::OffGrid {
                t,
                t_start: self.t_start,
                t_end: self.t_end,
                dt,
            });
        }
        Ok(k as usize)
    }

    /// Indices of an ordered pair `s < t`.
    pub fn pair(&self, s: f64, t: f64) -> Result<(usize, usize)> {
        let ks = self.index_of(s)?;
        let kt = self.index_of(t)?;
        if ks >= kt {
            return Err(Error::Ordering { s, t });
        }
        Ok((ks, kt))
    }

    /// Same interval, `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            n_steps: self.n_steps * factor.max(1),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Graph,
    Circle1d,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Graph => "graph",
            Backend::Circle1d => "circle1d",
        }
    }
}

/// Provenance of the metric path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    UserSupplied,
    /// Shortest paths with edge lengths `c_t(x,y)^{-1/2}`.
    Intrinsic,
    /// Arc length on the circle.
    ArcLength,
}

/// Metric `d_t` at every grid time.
#[derive(Clone, Debug)]
pub enum MetricPath {
    Static(DMatrix<f64>),
    /// `d_t = exp(log_scale[k]) · base`.
    Scaled {
        base: DMatrix<f64>,
        log_scale: Vec<f64>,
    },
    /// Circular arc length from cumulative edge lengths (`n + 1` entries per time).
    Circle { cumulative: Vec<Vec<f64>> },
    Sampled(Vec<DMatrix<f64>>),
}

impl MetricPath {
    pub fn dist(&self, k: usize, x: usize, y: usize) -> f64 {
        match self {
            MetricPath::Static(d) => d[(x, y)],
            MetricPath::Scaled { base, log_scale } => log_scale[k].exp() * base[(x, y)],
            MetricPath::Circle { cumulative } => {
                let c = &cumulative[k];
                let total = c[c.len() - 1];
                let fwd = (c[y] - c[x]).abs();
                fwd.min(total - fwd)
            }
            MetricPath::Sampled(ds) => ds[k][(x, y)],
        }
    }

    pub fn matrix(&self, k: usize, n: usize) -> DMatrix<f64> {
        match self {
            MetricPath::Static(d) => d.clone(),
            MetricPath::Scaled { base, log_scale } => base * log_scale[k].exp(),
            MetricPath::Sampled(ds) => ds[k].clone(),
            MetricPath::Circle { .. } => DMatrix::from_fn(n, n, |x, y| self.dist(k, x, y)),
        }
    }

    fn is_time_independent(&self) -> bool {
        match self {
            MetricPath::Static(_) => true,
            MetricPath::Scaled { log_scale, .. } => log_scale.iter().all(|&v| v == log_scale[0]),
            MetricPath::Circle { cumulative } => cumulative.iter().all(|c| c == &cumulative[0]),
            MetricPath::Sampled(ds) => ds.iter().all(|d| d == &ds[0]),
        }
    }
}

/// Geometry of the circle backend: states at `x_i = i·h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleGeometry {
    pub points: usize,
    pub spacing: f64,
}

impl CircleGeometry {
    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }
}

/// A sampled-in-time finite metric measure space.
#[derive(Clone, Debug)]
pub struct FlowSpec {
    space: StateSpace,
    grid: TimeGrid,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<(usize, usize)>>,
    log_density: Vec<Vec<f64>>,
    conductance: Vec<Vec<f64>>,
    step_rates: Vec<Vec<[f64; 2]>>,
    metric: MetricPath,
    metric_kind: MetricKind,
    backend: Backend,
    lipschitz: f64,
    circle: Option<CircleGeometry>,
}

/// Closed-form paths evaluated at arbitrary times.
pub struct Paths<'a> {
    /// Writes `f_t(x)` for every state.
    pub log_density: &'a dyn Fn(f64, &mut [f64]),
    /// Writes `c_t(e)` for every edge.
    pub conductance: &'a dyn Fn(f64, &mut [f64]),
}

/// How the graph metric is obtained.
#[derive(Clone, Debug)]
pub enum GraphMetric {
    Intrinsic,
    Static(DMatrix<f64>),
    /// `d_t = exp(log_scale(t)) · base`.
    Scaled {
        base: DMatrix<f64>,
        log_scale: Vec<f64>,
    },
    Sampled(Vec<DMatrix<f64>>),
}

fn normalize_edges(n: usize, edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(edges.len());
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return Err(Error::Structure(format!("invalid edge ({a}, {b})")));
        }
        let e = (a.min(b), a.max(b));
        if out.contains(&e) {
            return Err(Error::Structure(format!("duplicate edge ({a}, {b})")));
        }
        out.push(e);
    }
    Ok(out)
}

fn neighbor_lists(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let mut nb = vec![Vec::new(); n];
    for (e, &(a, b)) in edges.iter().enumerate() {
        nb[a].push((b, e));
        nb[b].push((a, e));
    }
    nb
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn connected(n: usize, edges: &[(usize, usize)], c: &[f64]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    let mut components = n;
    for (&(a, b), &w) in edges.iter().zip(c) {
        if w > 0.0 {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                components -= 1;
            }
        }
    }
    components == 1
}

/// All-pairs shortest paths with edge lengths `c^{-1/2}`.
fn intrinsic_metric(n: usize, edges: &[(usize, usize)], c: &[f64]) -> DMatrix<f64> {
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    for x in 0..n {
        d[(x, x)] = 0.0;
    }
    for (&(a, b), &w) in edges.iter().zip(c) {
        if w > 0.0 {
            let len = w.powf(-0.5);
            if len < d[(a, b)] {
                d[(a, b)] = len;
                d[(b, a)] = len;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[(i, k)];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let via = dik + d[(k, j)];
                if via < d[(i, j)] {
                    d[(i, j)] = via;
                }
            }
        }
    }
    d
}

/// Checks symmetry, positivity and the triangle inequality.
pub fn check_metric(d: &DMatrix<f64>, t: f64) -> Result<()> {
    let n = d.nrows();
    for x in 0..n {
        if d[(x, x)].abs() > 0.0 {
            return Err(Error::Structure(format!(
                "d_t({x},{x}) = {} is not zero at t = {t}",
                d[(x, x)]
            )));
        }
        for y in 0..n {
            if x != y && !(d[(x, y)] > 0.0 && d[(x, y)].is_finite()) {
                return Err(Error::Structure(format!(
                    "d_t({x},{y}) = {} is not positive at t = {t}",
                    d[(x, y)]
                )));
            }
            if (d[(x, y)] - d[(y, x)]).abs() > 1e-12 * d[(x, y)].abs().max(1.0) {
                return Err(Error::Structure(format!(
                    "d_t is not symmetric at ({x},{y}), t = {t}"
                )));
            }
        }
    }
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let via = d[(x, y)] + d[(y, z)];
                if d[(x, z)] > via * (1.0 + 1e-12) {
                    return Err(Error::Triangle {
                        t,
                        x,
                        y,
                        z,
                        dxz: d[(x, z)],
                        via,
                    });
                }
            }
        }
    }
    Ok(())
}

struct Samples {
    log_density: Vec<Vec<f64>>,
    conductance: Vec<Vec<f64>>,
    step_rates: Vec<Vec<[f64; 2]>>,
}

fn rates_at(
    base: &[f64],
    edges: &[(usize, usize)],
    f: &[f64],
    c: &[f64],
    weight: f64,
    acc: &mut [[f64; 2]],
) {
    for (e, &(a, b)) in edges.iter().enumerate() {
        acc[e][0] += weight * c[e] / (base[a] * (-f[a]).exp());
        acc[e][1] += weight * c[e] / (base[b] * (-f[b]).exp());
    }
}

fn sample_paths(space: &StateSpace, grid: &TimeGrid, edges: &[(usize, usize)], paths: &Paths) -> Samples {
    let n = space.n();
    let ne = edges.len();
    let mut log_density = Vec::with_capacity(grid.len());
    let mut conductance = Vec::with_capacity(grid.len());
    for t in grid.times() {
        let mut f = vec![0.0; n];
        let mut c = vec![0.0; ne];
        (paths.log_density)(t, &mut f);
        (paths.conductance)(t, &mut c);
        log_density.push(f);
        conductance.push(c);
    }
    let dt = grid.dt();
    let mut f = vec![0.0; n];
    let mut c = vec![0.0; ne];
    let step_rates = (0..grid.n_steps())
        .map(|k| {
            let mid = grid.time(k) + 0.5 * dt;
            let mut acc = vec![[0.0; 2]; ne];
            for (node, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let tau = mid + 0.5 * dt * node;
                (paths.log_density)(tau, &mut f);
                (paths.conductance)(tau, &mut c);
                rates_at(space.base_measure(), edges, &f, &c, 0.5 * w, &mut acc);
            }
            acc
        })
        .collect();
    Samples {
        log_density,
        conductance,
        step_rates,
    }
}

impl FlowSpec {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        space: StateSpace,
        grid: TimeGrid,
        edges: Vec<(usize, usize)>,
        samples: Samples,
        metric: MetricPath,
        metric_kind: MetricKind,
        backend: Backend,
        lipschitz: f64,
        circle: Option<CircleGeometry>,
    ) -> Result<FlowSpec> {
        let n = space.n();
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::Invalid(format!("Lipschitz constant {lipschitz}")));
        }
        for (k, (f, c)) in samples
            .log_density
            .iter()
            .zip(&samples.conductance)
            .enumerate()
        {
            let t = grid.time(k);
            if f.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: f.len(),
                });
            }
            if c.len() != edges.len() {
                return Err(Error::Shape {
                    expected: edges.len(),
                    got: c.len(),
                });
            }
            if let Some(x) = f.iter().position(|v| !v.is_finite()) {
                return Err(Error::Structure(format!("f_t({x}) not finite at t = {t}")));
            }
            if let Some(e) = c.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Structure(format!(
                    "conductance on edge {:?} is {} at t = {t}",
                    edges[e], c[e]
                )));
            }
            if !connected(n, &edges, c) {
                return Err(Error::Structure(format!(
                    "conductance support is disconnected at t = {t}"
                )));
            }
        }
        let neighbors = neighbor_lists(n, &edges);
        Ok(FlowSpec {
            space,
            grid,
            edges,
            neighbors,
            log_density: samples.log_density,
            conductance: samples.conductance,
            step_rates: samples.step_rates,
            metric,
            metric_kind,
            backend,
            lipschitz,
            circle,
        })
    }

    /// Graph backend from closed-form paths.
    pub fn graph(
        space: StateSpace,
        grid: TimeGrid,
        edges: &[(usize, usize)],
        paths: &Paths,
        metric: GraphMetric,
        lipschitz: f64,
    ) -> Result<FlowSpec> {
        let edges = normalize_edges(space.n(), edges)?;
        let samples = sample_paths(&space, &grid, &edges, paths);
        let (metric, kind) = graph_metric(&space, &grid, &edges, &samples.conductance, metric)?;
        FlowSpec::assemble(
            space,
            grid,
            edges,
            samples,
            metric,
            kind,
            Backend::Graph,
            lipschitz,
            None,
        )
    }

    /// Graph backend from tabulated grid samples. Step rates use the
    /// trapezoidal average of the two endpoint samples.
    pub fn graph_from_tables(
        space: StateSpace,
        grid: TimeGrid,
        edges: &[(usize, usize)],
        log_density: Vec<Vec<f64>>,
        conductance: Vec<Vec<f64>>,
        metric: GraphMetric,
        lipschitz: f64,
    ) -> Result<FlowSpec> {
        let edges = normalize_edges(space.n(), edges)?;
        for table in [&log_density, &conductance] {
            if table.len() != grid.len() {
                return Err(Error::Shape {
                    expected: grid.len(),
                    got: table.len(),
                });
            }
        }
        let base = space.base_measure();
        let step_rates = (0..grid.n_steps())
            .map(|k| {
                let mut acc = vec![[0.0; 2]; edges.len()];
                for j in [k, k + 1] {
                    if log_density[j].len() == base.len() && conductance[j].len() == edges.len() {
                        rates_at(base, &edges, &log_density[j], &conductance[j], 0.5, &mut acc);
                    }
                }
                acc
            })
            .collect();
        let samples = Samples {
            log_density,
            conductance,
            step_rates,
        };
        let (metric, kind) = graph_metric(&space, &grid, &edges, &samples.conductance, metric)?;
        FlowSpec::assemble(
            space,
            grid,
            edges,
            samples,
            metric,
            kind,
            Backend::Graph,
            lipschitz,
            None,
        )
    }

    /// Constant-in-time graph flow.
    pub fn static_graph(
        base_measure: Vec<f64>,
        edges: &[(usize, usize)],
        conductance: Vec<f64>,
        metric: GraphMetric,
        grid: TimeGrid,
    ) -> Result<FlowSpec> {
        let space = StateSpace::new(base_measure, None)?;
        let c = conductance.clone();
        let paths = Paths {
            log_density: &|_, f: &mut [f64]| f.iter_mut().for_each(|v| *v = 0.0),
            conductance: &move |_, out: &mut [f64]| out.copy_from_slice(&c),
        };
        if conductance.len() != edges.len() {
            return Err(Error::Shape {
                expected: edges.len(),
                got: conductance.len(),
            });
        }
        FlowSpec::graph(space, grid, edges, &paths, metric, 0.0)
    }

    /// Same paths with rescaled time-dependence applied by the caller:
    /// rebuilds this flow on `grid` with conductances multiplied by
    /// `conductance_factor(t)` and distances by `exp(log_metric_scale(t))`,
    /// starting from the grid-time-0 sample of a time-independent flow.
    pub fn from_static_base(
        base: &FlowSpec,
        grid: TimeGrid,
        conductance_factor: &dyn Fn(f64) -> f64,
        log_metric_scale: &dyn Fn(f64) -> f64,
        lipschitz: f64,
    ) -> Result<FlowSpec> {
        let f0 = base.log_density[0].clone();
        let c0 = base.conductance[0].clone();
        let paths = Paths {
            log_density: &|_, out: &mut [f64]| out.copy_from_slice(&f0),
            conductance: &|t, out: &mut [f64]| {
                let s = conductance_factor(t);
                for (o, c) in out.iter_mut().zip(&c0) {
                    *o = s * c;
                }
            },
        };
        let samples = sample_paths(&base.space, &grid, &base.edges, &paths);
        let scale: Vec<f64> = grid.times().map(log_metric_scale).collect();
        let metric = match &base.metric {
            MetricPath::Circle { cumulative } => MetricPath::Circle {
                cumulative: scale
                    .iter()
                    .map(|s| cumulative[0].iter().map(|c| c * s.exp()).collect())
                    .collect(),
            },
            other => MetricPath::Scaled {
                base: other.matrix(0, base.n()),
                log_scale: scale,
            },
        };
        FlowSpec::assemble(
            base.space.clone(),
            grid,
            base.edges.clone(),
            samples,
            metric,
            base.metric_kind,
            base.backend,
            lipschitz,
            base.circle,
        )
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.space.n()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(neighbor, edge index)` pairs of state `x`.
    pub fn neighbors(&self, x: usize) -> &[(usize, usize)] {
        &self.neighbors[x]
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric_kind
    }

    pub fn metric(&self) -> &MetricPath {
        &self.metric
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn circle(&self) -> Option<CircleGeometry> {
        self.circle
    }

    pub fn log_density_at(&self, k: usize) -> &[f64] {
        &self.log_density[k]
    }

    pub fn conductance_at(&self, k: usize) -> &[f64] {
        &self.conductance[k]
    }

    /// Averaged rates `[x→y, y→x]` per edge over step `[t_k, t_{k+1}]`.
    pub fn step_rates(&self, k: usize) -> &[[f64; 2]] {
        &self.step_rates[k]
    }

    /// `f_{k+1} - f_k` per state.
    pub fn log_density_increment(&self, k: usize) -> Vec<f64> {
        self.log_density[k + 1]
            .iter()
            .zip(&self.log_density[k])
            .map(|(a, b)| a - b)
            .collect()
    }

    /// `∂_t f_t` at grid index `k` by central differences (one-sided at the ends).
    pub fn log_density_rate(&self, k: usize) -> Vec<f64> {
        let last = self.grid.n_steps();
        let (lo, hi) = if k == 0 {
            (0, 1)
        } else if k == last {
            (last - 1, last)
        } else {
            (k - 1, k + 1)
        };
        let span = (hi - lo) as f64 * self.grid.dt();
        self.log_density[hi]
            .iter()
            .zip(&self.log_density[lo])
            .map(|(a, b)| (a - b) / span)
            .collect()
    }

    /// `m_t(x) = exp(-f_t(x)) m(x)` at grid index `k`.
    pub fn measure_weights(&self, k: usize) -> Vec<f64> {
        self.space
            .base_measure()
            .iter()
            .zip(&self.log_density[k])
            .map(|(m, f)| (-f).exp() * m)
            .collect()
    }

    pub fn dist(&self, k: usize, x: usize, y: usize) -> f64 {
        self.metric.dist(k, x, y)
    }

    pub fn metric_matrix(&self, k: usize) -> DMatrix<f64> {
        self.metric.matrix(k, self.n())
    }

    /// True when `f`, `c` and `d` do not depend on time.
    pub fn is_static(&self) -> bool {
        self.log_density.iter().all(|f| f == &self.log_density[0])
            && self.conductance.iter().all(|c| c == &self.conductance[0])
            && self.metric.is_time_independent()
    }

    /// Rebuilds the flow on a new grid from its grid-time-0 sample; valid
    /// only for static flows.
    pub fn with_static_grid(&self, grid: TimeGrid) -> Result<FlowSpec> {
        if !self.is_static() {
            return Err(Error::Invalid(
                "with_static_grid needs a time-independent flow".into(),
            ));
        }
        FlowSpec::from_static_base(self, grid, &|_| 1.0, &|_| 0.0, self.lipschitz)
    }

    /// Same flow with a different declared Lipschitz constant.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Result<FlowSpec> {
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::Invalid(format!("Lipschitz constant {lipschitz}")));
        }
        self.lipschitz = lipschitz;
        Ok(self)
    }
}

fn graph_metric(
    space: &StateSpace,
    grid: &TimeGrid,
    edges: &[(usize, usize)],
    conductance: &[Vec<f64>],
    metric: GraphMetric,
) -> Result<(MetricPath, MetricKind)> {
    let n = space.n();
    let check_shape = |d: &DMatrix<f64>| -> Result<()> {
        if d.nrows() != n || d.ncols() != n {
            return Err(Error::Shape {
                expected: n,
                got: d.nrows(),
            });
        }
        Ok(())
    };
    Ok(match metric {
        GraphMetric::Intrinsic => {
            let path = if conductance.iter().all(|c| c == &conductance[0]) {
                MetricPath::Static(intrinsic_metric(n, edges, &conductance[0]))
            } else {
                MetricPath::Sampled(
                    conductance
                        .iter()
                        .map(|c| intrinsic_metric(n, edges, c))
                        .collect(),
                )
            };
            (path, MetricKind::Intrinsic)
        }
        GraphMetric::Static(d) => {
            check_shape(&d)?;
            (MetricPath::Static(d), MetricKind::UserSupplied)
        }
        GraphMetric::Scaled { base, log_scale } => {
            check_shape(&base)?;
            if log_scale.len() != grid.len() {
                return Err(Error::Shape {
                    expected: grid.len(),
                    got: log_scale.len(),
                });
            }
            (MetricPath::Scaled { base, log_scale }, MetricKind::UserSupplied)
        }
        GraphMetric::Sampled(ds) => {
            if ds.len() != grid.len() {
                return Err(Error::Shape {
                    expected: grid.len(),
                    got: ds.len(),
                });
            }
            for d in &ds {
                check_shape(d)?;
            }
            (MetricPath::Sampled(ds), MetricKind::UserSupplied)
        }
    })
}

/// `m_t = exp(-f_t) m` at grid time `t`.
pub fn measure_at(flow: &FlowSpec, t: f64) -> Result<Measure> {
    let k = flow.grid().index_of(t)?;
    Ok(Measure::from_raw(flow.measure_weights(k)))
}

/// Builds the circle backend: `n` equispaced points on `[0, 2π)`, metric
/// `e^{φ_t} dx`, and conductances chosen so that the generator is the
/// central second-order discretization of `e^{-2φ_t}(u'' - ∂_x f_t u')`.
///
/// The induced measure is `m_t = e^{-f_t + 2φ_t} dx`, so the flow's
/// log-density path is `f_t - 2φ_t` against the base measure `h` per point.
pub fn build_circle1d(
    n: usize,
    phi: &dyn Fn(f64, f64) -> f64,
    f: &dyn Fn(f64, f64) -> f64,
    grid: TimeGrid,
    lipschitz: f64,
) -> Result<FlowSpec> {
    if n < 16 {
        return Err(Error::Resolution(n));
    }
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let space = StateSpace::new(vec![h; n], None)?;
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let edges = normalize_edges(n, &edges)?;
    // normalize_edges sorts endpoints, so the wrap edge is (0, n-1); its
    // midpoint is still at x_{n-1} + h/2.
    let midpoints: Vec<f64> = edges
        .iter()
        .map(|&(a, b)| {
            if a == 0 && b == n - 1 {
                (n as f64 - 0.5) * h
            } else {
                (a as f64 + 0.5) * h
            }
        })
        .collect();
    let log_density = |t: f64, out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            let x = i as f64 * h;
            *o = f(t, x) - 2.0 * phi(t, x);
        }
    };
    let conductance = |t: f64, out: &mut [f64]| {
        for (o, &xm) in out.iter_mut().zip(&midpoints) {
            *o = (-f(t, xm)).exp() / h;
        }
    };
    let paths = Paths {
        log_density: &log_density,
        conductance: &conductance,
    };
    let samples = sample_paths(&space, &grid, &edges, &paths);
    let cumulative = grid
        .times()
        .map(|t| {
            let mut acc = Vec::with_capacity(n + 1);
            acc.push(0.0);
            let mut total = 0.0;
            for i in 0..n {
                let a = phi(t, i as f64 * h).exp();
                let b = phi(t, (i + 1) as f64 * h).exp();
                total += 0.5 * h * (a + b);
                acc.push(total);
            }
            acc
        })
        .collect();
    FlowSpec::assemble(
        space,
        grid,
        edges,
        samples,
        MetricPath::Circle { cumulative },
        MetricKind::ArcLength,
        Backend::Circle1d,
        lipschitz,
        Some(CircleGeometry {
            points: n,
            spacing: h,
        }),
    )
}

/// Location attaining a Lipschitz bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub s: f64,
    pub t: f64,
    pub x: usize,
    pub y: usize,
}

/// Outcome of the time-regularity validation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct A1Report {
    /// Smallest constant for `|f_t(x) - f_s(y)| ≤ L|t-s| + L d_t(x,y)`.
    pub density_part: f64,
    pub density_witness: Option<PairWitness>,
    /// Smallest constant for `|log(d_t/d_s)| ≤ L|t-s|`.
    pub time_part: f64,
    pub time_witness: Option<PairWitness>,
    /// `max(density_part, time_part)`.
    pub l_prime: f64,
    pub declared: f64,
    pub pass: bool,
    /// Smallest `L` with `e^{-2L|t-s|} Γ_s ≤ Γ_t ≤ e^{2L|t-s|} Γ_s`.
    pub ellipticity: f64,
    pub ellipticity_pass: bool,
}

/// Brute-force smallest constants for the log-Lipschitz time regularity of
/// `f_t` and `d_t`, plus the uniform-ellipticity constant of the conductances.
pub fn validate_a1(flow: &FlowSpec) -> Result<A1Report> {
    use rayon::prelude::*;

    let grid = flow.grid();
    let n = flow.n();
    let nt = grid.len();

    match flow.metric() {
        MetricPath::Static(d) => check_metric(d, grid.t_start())?,
        MetricPath::Scaled { base, .. } => check_metric(base, grid.t_start())?,
        MetricPath::Sampled(ds) => {
            for (k, d) in ds.iter().enumerate() {
                check_metric(d, grid.time(k))?;
            }
        }
        MetricPath::Circle { .. } => {}
    }

    // density part: all ordered time pairs and state pairs.
    let best = (0..nt)
        .into_par_iter()
        .map(|kt| {
            let t = grid.time(kt);
            let ft = flow.log_density_at(kt);
            let mut best = (0.0_f64, None);
            for ks in 0..nt {
                let s = grid.time(ks);
                let fs = flow.log_density_at(ks);
                let dtime = (t - s).abs();
                for x in 0..n {
                    for y in 0..n {
                        let denom = dtime + flow.dist(kt, x, y);
                        let num = (ft[x] - fs[y]).abs();
                        if denom > 0.0 {
                            let q = num / denom;
                            if q > best.0 {
                                best = (q, Some(PairWitness { s, t, x, y }));
                            }
                        }
                    }
                }
            }
            best
        })
        .reduce(
            || (0.0, None),
            |a, b| if b.0 > a.0 { b } else { a },
        );
    let (density_part, density_witness) = best;

    // Time part. A difference quotient over [s, t] is an average of the
    // adjacent-step quotients, so the maximum over all pairs is attained on
    // adjacent grid times.
    let dt = grid.dt();
    let mut time_part = 0.0_f64;
    let mut time_witness = None;
    if !flow.metric().is_time_independent() {
        for k in 0..grid.n_steps() {
            for x in 0..n {
                for y in (x + 1)..n {
                    let a = flow.dist(k, x, y);
                    let b = flow.dist(k + 1, x, y);
                    let q = (b / a).ln().abs() / dt;
                    if q > time_part {
                        time_part = q;
                        time_witness = Some(PairWitness {
                            s: grid.time(k),
                            t: grid.time(k + 1),
                            x,
                            y,
                        });
                    }
                }
            }
        }
    }

    // Γ_t(u)(x) is a positive combination of c_t(x,y)/m_t(x) weights, so the
    // two-sided bound for all u holds iff it holds for every such weight; the
    // adjacent-step argument applies again to their logarithms.
    let mut ellipticity = 0.0_f64;
    let base = flow.space().base_measure();
    for k in 0..grid.n_steps() {
        let (f0, f1) = (flow.log_density_at(k), flow.log_density_at(k + 1));
        let (c0, c1) = (flow.conductance_at(k), flow.conductance_at(k + 1));
        for (e, &(a, b)) in flow.edges().iter().enumerate() {
            if c0[e] == 0.0 && c1[e] == 0.0 {
                continue;
            }
            if c0[e] == 0.0 || c1[e] == 0.0 {
                ellipticity = f64::INFINITY;
                continue;
            }
            for x in [a, b] {
                let r0 = c0[e] / (base[x] * (-f0[x]).exp());
                let r1 = c1[e] / (base[x] * (-f1[x]).exp());
                ellipticity = ellipticity.max((r1 / r0).ln().abs() / (2.0 * dt));
            }
        }
    }

    let l_prime = density_part.max(time_part);
    let declared = flow.lipschitz();
    Ok(A1Report {
        density_part,
        density_witness,
        time_part,
        time_witness,
        l_prime,
        declared,
        pass: l_prime <= declared * (1.0 + 1e-12),
        ellipticity,
        ellipticity_pass: ellipticity <= declared * (1.0 + 1e-12),
    })
}
