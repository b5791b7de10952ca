//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ricci_lab::flow::{GraphMetric, Paths};
use ricci_lab::scenario::auto_lipschitz;
use ricci_lab::{build_circle1d, FlowSpec, StateSpace, TimeGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Static two-point space with unit weights and conductance.
pub fn two_point(t_start: f64, t_end: f64, dt: f64) -> FlowSpec {
    let grid = TimeGrid::with_step(t_start, t_end, dt).unwrap();
    FlowSpec::static_graph(vec![1.0, 1.0], &[(0, 1)], vec![1.0], GraphMetric::Intrinsic, grid).unwrap()
}

/// Connected random graph: a ring plus a few chords.
pub fn random_edges(n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut r = rng(seed);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for _ in 0..n / 2 {
        let a = r.random_range(0..n);
        let b = r.random_range(0..n);
        let e = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == e) {
            edges.push(e);
        }
    }
    edges
}

/// Smooth random time-dependent graph flow on `[0.5, 0.5 + horizon]`.
///
/// `f_t(x) = a_x sin(ω_x t + θ_x)` and `c_t(e) = b_e exp(β_e sin(ν_e t))`.
pub fn random_flow_steps(n: usize, seed: u64, horizon: f64, n_steps: usize) -> FlowSpec {
    let mut r = rng(seed);
    let edges = random_edges(n, seed ^ 0x5eed);
    let base: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
    let fx: Vec<[f64; 3]> = (0..n)
        .map(|_| [r.random_range(-0.5..0.5), r.random_range(0.5..2.0), r.random_range(0.0..6.0)])
        .collect();
    let ce: Vec<[f64; 3]> = edges
        .iter()
        .map(|_| [r.random_range(0.5..2.0), r.random_range(-0.4..0.4), r.random_range(0.5..2.0)])
        .collect();
    let paths = Paths {
        log_density: &|t, out: &mut [f64]| {
            for (o, p) in out.iter_mut().zip(&fx) {
                *o = p[0] * (p[1] * t + p[2]).sin();
            }
        },
        conductance: &|t, out: &mut [f64]| {
            for (o, p) in out.iter_mut().zip(&ce) {
                *o = p[0] * (p[1] * (p[2] * t).sin()).exp();
            }
        },
    };
    let space = StateSpace::new(base, None).unwrap();
    let grid = TimeGrid::new(0.5, 0.5 + horizon, n_steps).unwrap();
    let flow = FlowSpec::graph(space, grid, &edges, &paths, GraphMetric::Intrinsic, 0.0).unwrap();
    auto_lipschitz(flow).unwrap()
}

pub fn random_flow(n: usize, seed: u64, dt: f64) -> FlowSpec {
    let horizon = 0.5;
    random_flow_steps(n, seed, horizon, (horizon / dt).round() as usize)
}

/// Circle with `f = a cos x` and a slowly breathing conformal factor.
pub fn breathing_circle(n: usize, a: f64, horizon: f64, n_steps: usize) -> FlowSpec {
    let grid = TimeGrid::new(0.5, 0.5 + horizon, n_steps).unwrap();
    let flow = build_circle1d(
        n,
        &|t, x: f64| 0.2 * t * x.sin(),
        &move |t, x: f64| a * x.cos() + 0.3 * t * (2.0 * x).cos(),
        grid,
        0.0,
    )
    .unwrap();
    auto_lipschitz(flow).unwrap()
}

pub fn random_field(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn random_positive(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(0.1..2.0)).collect()
}

pub fn random_probability(n: usize, r: &mut ChaCha8Rng) -> ricci_lab::ProbabilityMeasure {
    let w: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    ricci_lab::ProbabilityMeasure::normalized(w).unwrap()
}

/// Refinement order from defects at steps `dt` and `dt/2`.
pub fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Minimum cost over all vertices of the coupling polytope: every choice of
/// `m + n - 1` cells whose marginal system has a unique nonnegative solution.
pub fn vertex_enumeration(a: &[f64], b: &[f64], cost: &DMatrix<f64>) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let rhs = DVector::from_iterator(m + n, a.iter().chain(b).cloned());
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..k).collect();
    loop {
        let mat = DMatrix::from_fn(m + n, k, |r, c| {
            let (i, j) = cells[pick[c]];
            if r == i || r == m + j {
                1.0
            } else {
                0.0
            }
        });
        let svd = mat.clone().svd(true, true);
        if svd.rank(1e-9) == k {
            let x = svd.solve(&rhs, 1e-9).unwrap();
            let residual = (&mat * &x - &rhs).amax();
            if residual < 1e-12 && x.iter().all(|v| *v >= -1e-13) {
                let c: f64 = pick.iter().zip(x.iter()).map(|(&p, v)| v * cost[cells[p]]).sum();
                best = best.min(c);
            }
        }
        // next combination
        let mut i = k;
        while i > 0 && pick[i - 1] == cells.len() - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        pick[i - 1] += 1;
        for j in i..k {
            pick[j] = pick[j - 1] + 1;
        }
    }
}
