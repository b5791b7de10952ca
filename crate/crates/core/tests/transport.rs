mod common;

use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use ricci_lab::transport::{
    entropy, hopf_lax_with_metric, transportation_simplex, wasserstein, wasserstein_with_metric,
};
use ricci_lab::{Error, ProbabilityMeasure};

/// Kantorovich dual `max Σ a φ + Σ b ψ` subject to `φ_i + ψ_j ≤ c_ij`.
fn dual_lp(a: &[f64], b: &[f64], cost: &DMatrix<f64>) -> f64 {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let bound = 1e3;
    let phi: Vec<_> = a.iter().map(|w| p.add_var(*w, (-bound, bound))).collect();
    let psi: Vec<_> = b.iter().map(|w| p.add_var(*w, (-bound, bound))).collect();
    for (i, f) in phi.iter().enumerate() {
        for (j, g) in psi.iter().enumerate() {
            p.add_constraint([(*f, 1.0), (*g, 1.0)], ComparisonOp::Le, cost[(i, j)]);
        }
    }
    p.solve().unwrap().objective()
}

fn random_metric(n: usize, r: &mut rand_chacha::ChaCha8Rng) -> DMatrix<f64> {
    // shortest paths of a random complete weighted graph
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let w = r.random_range(0.2..2.0);
            d[(i, j)] = w;
            d[(j, i)] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[(i, j)] = d[(i, j)].min(d[(i, k)] + d[(k, j)]);
            }
        }
    }
    d
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut r = rng(21);
    for trial in 0..40 {
        let n = 2 + trial % 3;
        let m = 2 + (trial / 3) % 3;
        let a = random_probability(m, &mut r);
        let b = random_probability(n, &mut r);
        let cost = DMatrix::from_fn(m, n, |_, _| r.random_range(0.0..3.0));
        let plan = transportation_simplex(a.weights(), b.weights(), &cost).unwrap();
        let got = plan.component_mul(&cost).sum();
        let want = vertex_enumeration(a.weights(), b.weights(), &cost);
        assert!((got - want).abs() < 1e-10, "trial {trial}: {got} vs {want}");
        for i in 0..m {
            assert!((plan.row(i).sum() - a.weights()[i]).abs() < 1e-10);
        }
        for j in 0..n {
            assert!((plan.column(j).sum() - b.weights()[j]).abs() < 1e-10);
        }
        assert!(plan.min() >= 0.0);
    }
}

#[test]
fn simplex_handles_degenerate_marginals() {
    let a = [0.5, 0.5, 0.0, 0.0];
    let b = [0.25, 0.25, 0.25, 0.25];
    let cost = DMatrix::from_fn(4, 4, |i, j| (i as f64 - j as f64).abs());
    let plan = transportation_simplex(&a, &b, &cost).unwrap();
    let got = plan.component_mul(&cost).sum();
    assert!((got - vertex_enumeration(&a, &b, &cost)).abs() < 1e-10);
}

#[test]
fn primal_matches_dual_lp_for_distances() {
    let mut r = rng(22);
    for n in 2..=6 {
        let d = random_metric(n, &mut r);
        let mu = random_probability(n, &mut r);
        let nu = random_probability(n, &mut r);
        let w1 = wasserstein_with_metric(&d, &mu, &nu, 1).unwrap();
        let dual = dual_lp(mu.weights(), nu.weights(), &d);
        assert!((w1.distance() - dual).abs() < 1e-8, "n = {n}");
    }
}

#[test]
fn plan_reports_cost_and_marginals() {
    let mut r = rng(23);
    let d = random_metric(5, &mut r);
    let mu = random_probability(5, &mut r);
    let nu = random_probability(5, &mut r);
    let plan = wasserstein_with_metric(&d, &mu, &nu, 2).unwrap();
    let cost: f64 = (0..5).flat_map(|i| (0..5).map(move |j| (i, j))).map(|(i, j)| plan.coupling[(i, j)] * d[(i, j)].powi(2)).sum();
    assert!((plan.cost - cost).abs() < 1e-12);
    assert!((plan.distance() - cost.sqrt()).abs() < 1e-12);
}

#[test]
fn metric_axioms_on_random_triples() {
    let flow = random_flow_steps(12, 4, 0.5, 10);
    let mut r = rng(24);
    for p in [1, 2] {
        for k in [0.5, 0.75, 1.0] {
            for _ in 0..8 {
                let a = random_probability(12, &mut r);
                let b = random_probability(12, &mut r);
                let c = random_probability(12, &mut r);
                let w = |x: &ProbabilityMeasure, y: &ProbabilityMeasure| wasserstein(&flow, k, x, y, p).unwrap().distance();
                assert!(w(&a, &a) < 1e-8);
                assert!((w(&a, &b) - w(&b, &a)).abs() < 1e-8);
                assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-8);
                assert!(w(&a, &b) > 0.0);
            }
        }
    }
}

#[test]
fn diracs_are_at_their_distance() {
    let flow = random_flow_steps(8, 5, 0.5, 4);
    for p in [1, 2] {
        let w = wasserstein(&flow, 0.5, &ProbabilityMeasure::dirac(8, 1), &ProbabilityMeasure::dirac(8, 6), p).unwrap();
        assert!((w.distance() - flow.dist(0, 1, 6)).abs() < 1e-12);
    }
}

#[test]
fn hopf_lax_is_monotone_and_below_the_datum() {
    let mut r = rng(25);
    let d = random_metric(10, &mut r);
    for _ in 0..20 {
        let phi = random_field(10, &mut r);
        let bump: Vec<f64> = phi.iter().map(|v| v + r.random_range(0.0..0.5)).collect();
        let q1 = hopf_lax_with_metric(&d, 0.3, &phi).unwrap();
        let q2 = hopf_lax_with_metric(&d, 0.3, &bump).unwrap();
        let q_later = hopf_lax_with_metric(&d, 0.6, &phi).unwrap();
        for x in 0..10 {
            assert!(q1[x] <= q2[x]);
            assert!(q1[x] <= phi[x]);
            assert!(q_later[x] <= q1[x]);
        }
    }
}

#[test]
fn hopf_lax_of_constant_is_constant() {
    let mut r = rng(26);
    let d = random_metric(6, &mut r);
    let q = hopf_lax_with_metric(&d, 0.7, &[1.5; 6]).unwrap();
    assert!(q.iter().all(|v| *v == 1.5));
}

#[test]
fn entropy_of_reference_measure() {
    let flow = random_flow_steps(6, 7, 0.5, 4);
    let m = flow.measure_weights(2);
    let total: f64 = m.iter().sum();
    let mu = ProbabilityMeasure::normalized(m).unwrap();
    let s = entropy(&flow, flow.grid().time(2), &mu).unwrap();
    assert!((s + total.ln()).abs() < 1e-12);
}

#[test]
fn unbalanced_marginals_are_rejected() {
    let cost = DMatrix::from_element(2, 2, 1.0);
    assert!(matches!(
        transportation_simplex(&[0.5, 0.5], &[0.5, 0.6], &cost),
        Err(Error::Marginals(..))
    ));
}
