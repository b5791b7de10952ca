//! Python bindings.
//!
//! Fields and measures cross the boundary as lists of floats; times must lie
//! on the flow's grid.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ricci_lab::config::{load_scenario, parse_scenario, Expr};
use ricci_lab::curvature::estimate_curvature;
use ricci_lab::flow::GraphMetric;
use ricci_lab::inequality::{run_suite, TestFunctionBank};
use ricci_lab::scenario::auto_lipschitz;
use ricci_lab::{build_circle1d, propagator, transport, FlowSpec, GeneratorSnapshot, ProbabilityMeasure, TimeGrid};

fn err(e: ricci_lab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn probability(w: Vec<f64>) -> PyResult<ProbabilityMeasure> {
    ProbabilityMeasure::normalized(w).map_err(err)
}

/// A time-dependent finite metric measure space on a uniform time grid.
#[pyclass(name = "Flow", module = "riccilab", frozen)]
struct PyFlow {
    inner: FlowSpec,
}

impl PyFlow {
    fn snapshot(&self, t: f64) -> PyResult<GeneratorSnapshot> {
        GeneratorSnapshot::at(&self.inner, t).map_err(err)
    }
}

#[pymethods]
impl PyFlow {
    /// Time-independent weighted graph with the intrinsic metric.
    #[staticmethod]
    fn static_graph(
        base_measure: Vec<f64>,
        edges: Vec<(usize, usize)>,
        conductance: Vec<f64>,
        t_start: f64,
        t_end: f64,
        n_steps: usize,
    ) -> PyResult<Self> {
        let grid = TimeGrid::new(t_start, t_end, n_steps).map_err(err)?;
        let flow = FlowSpec::static_graph(base_measure, &edges, conductance, GraphMetric::Intrinsic, grid)
            .and_then(auto_lipschitz)
            .map_err(err)?;
        Ok(PyFlow { inner: flow })
    }

    /// Circle of `n` points with log-density `f(t, x)` and conformal factor
    /// `phi(t, x)`, both given as expressions.
    #[staticmethod]
    #[pyo3(signature = (n, t_start, t_end, n_steps, f = "0", phi = "0"))]
    fn circle(n: usize, t_start: f64, t_end: f64, n_steps: usize, f: &str, phi: &str) -> PyResult<Self> {
        let grid = TimeGrid::new(t_start, t_end, n_steps).map_err(err)?;
        let f = Expr::Text(f.into()).compile("f").map_err(err)?;
        let phi = Expr::Text(phi.into()).compile("phi").map_err(err)?;
        let flow = build_circle1d(n, &*phi, &*f, grid, 0.0)
            .and_then(auto_lipschitz)
            .map_err(err)?;
        Ok(PyFlow { inner: flow })
    }

    /// Flow of a scenario file.
    #[staticmethod]
    fn from_scenario(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyFlow {
            inner: load_scenario(&path).map_err(err)?.flow,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.grid().times().collect()
    }

    #[getter]
    fn backend(&self) -> &'static str {
        self.inner.backend().name()
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn measure(&self, t: f64) -> PyResult<Vec<f64>> {
        Ok(ricci_lab::measure_at(&self.inner, t).map_err(err)?.weights().to_vec())
    }

    fn metric(&self, t: f64) -> PyResult<Vec<Vec<f64>>> {
        let k = self.inner.grid().index_of(t).map_err(err)?;
        let d = self.inner.metric_matrix(k);
        Ok(d.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn curvature(&self, t: f64) -> PyResult<f64> {
        Ok(estimate_curvature(&self.snapshot(t)?).map_err(err)?.k_star)
    }

    fn laplacian(&self, t: f64, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.snapshot(t)?.laplacian(&u).map_err(err)?.into_vec())
    }

    fn gamma(&self, t: f64, u: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.snapshot(t)?.gamma(&u, &v).map_err(err)?.into_vec())
    }

    fn dirichlet_form(&self, t: f64, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.snapshot(t)?.dirichlet_form(&u, &v).map_err(err)
    }

    /// `P_{t,s} u`.
    fn forward(&self, s: f64, t: f64, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let run = propagator::forward(&self.inner, s, t, &u).map_err(err)?;
        Ok(run.result().values().to_vec())
    }

    /// `P*_{t,s} g`.
    fn adjoint(&self, t: f64, s: f64, g: Vec<f64>) -> PyResult<Vec<f64>> {
        let run = propagator::adjoint(&self.inner, t, s, &g).map_err(err)?;
        Ok(run.result().values().to_vec())
    }

    fn duality_defect(&self, s: f64, t: f64, h: Vec<f64>, g: Vec<f64>) -> PyResult<f64> {
        propagator::duality_check(&self.inner, s, t, &h, &g).map_err(err)
    }

    /// `(lhs, rhs, relative defect)` of the variance identity.
    fn variance_identity(&self, s: f64, t: f64, u: Vec<f64>, g: Vec<f64>) -> PyResult<(f64, f64, f64)> {
        let v = propagator::variance_identity(&self.inner, s, t, &u, &g).map_err(err)?;
        Ok((v.lhs, v.rhs, v.relative))
    }

    #[pyo3(signature = (t, mu, nu, p = 2))]
    fn wasserstein(&self, t: f64, mu: Vec<f64>, nu: Vec<f64>, p: u32) -> PyResult<f64> {
        let plan = transport::wasserstein(&self.inner, t, &probability(mu)?, &probability(nu)?, p).map_err(err)?;
        Ok(plan.distance())
    }

    fn hopf_lax(&self, t: f64, r: f64, phi: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(transport::hopf_lax(&self.inner, t, r, &phi).map_err(err)?.into_vec())
    }

    fn entropy(&self, t: f64, mu: Vec<f64>) -> PyResult<f64> {
        transport::entropy(&self.inner, t, &probability(mu)?).map_err(err)
    }

    /// Regularity constants as a dict.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = ricci_lab::validate_a1(&self.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("l_prime", r.l_prime)?;
        d.set_item("density_part", r.density_part)?;
        d.set_item("time_part", r.time_part)?;
        d.set_item("declared", r.declared)?;
        d.set_item("pass", r.pass)?;
        d.set_item("ellipticity", r.ellipticity)?;
        d.set_item("ellipticity_pass", r.ellipticity_pass)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let g = self.inner.grid();
        format!(
            "Flow(backend={}, n={}, grid=[{}, {}] x {})",
            self.inner.backend().name(),
            self.inner.n(),
            g.t_start(),
            g.t_end(),
            g.n_steps()
        )
    }
}

/// Runs the inequality suite of a scenario file, or of scenario TOML text when
/// `text=True`. Returns `{"reports": {id: (margin, verdict)}, "mismatches":
/// [...], "verdicts_match": bool}`.
#[pyfunction]
#[pyo3(signature = (source, seed = None, text = false))]
fn check<'py>(py: Python<'py>, source: &str, seed: Option<u64>, text: bool) -> PyResult<Bound<'py, PyDict>> {
    let mut s = if text {
        parse_scenario(source).and_then(|f| f.build())
    } else {
        load_scenario(std::path::Path::new(source))
    }
    .map_err(err)?;
    if let Some(seed) = seed {
        s.bank_seed = seed;
        s.suite.seed = seed;
    }
    let bank = TestFunctionBank::for_flow(&s.flow, s.bank_seed, s.bank_size);
    let res = py
        .detach(|| run_suite(&s.flow, &bank, &s.suite))
        .map_err(err)?;
    let mismatches = s.compare(&res);
    let reports = PyDict::new(py);
    for (id, r) in &res.reports {
        reports.set_item(id, (r.margin, r.verdict.as_str()))?;
    }
    let out = PyDict::new(py);
    out.set_item("name", &s.name)?;
    out.set_item("tol", res.tol)?;
    out.set_item("reports", reports)?;
    out.set_item("mismatches", mismatches.iter().map(|m| m.id.clone()).collect::<Vec<_>>())?;
    out.set_item("verdicts_match", mismatches.is_empty())?;
    Ok(out)
}

/// Exact transport cost between two weight vectors under a cost matrix.
#[pyfunction]
fn transport_cost(a: Vec<f64>, b: Vec<f64>, cost: Vec<Vec<f64>>) -> PyResult<f64> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    if cost.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("cost matrix rows differ in length"));
    }
    let c = nalgebra::DMatrix::from_fn(rows, cols, |i, j| cost[i][j]);
    let plan = transport::transportation_simplex(&a, &b, &c).map_err(err)?;
    Ok(plan.component_mul(&c).sum())
}

#[pymodule]
fn riccilab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFlow>()?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(transport_cost, m)?)?;
    Ok(())
}
