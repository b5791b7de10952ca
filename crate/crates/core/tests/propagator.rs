mod common;

use common::*;
use nalgebra::DMatrix;
use ricci_lab::flow::{GraphMetric, TimeGrid};
use ricci_lab::propagator::{
    adjoint, adjoint_matrix, dual_on_measures, duality_check, forward, forward_matrix, regularity_report,
    variance_identity,
};
use ricci_lab::{build_circle1d, FlowSpec, ProbabilityMeasure};

fn two_state_exp(t: f64) -> DMatrix<f64> {
    let e = (-2.0 * t).exp();
    DMatrix::from_row_slice(2, 2, &[0.5 + 0.5 * e, 0.5 - 0.5 * e, 0.5 - 0.5 * e, 0.5 + 0.5 * e])
}

#[test]
fn two_point_trajectories_match_matrix_exponential() {
    let flow = two_point(0.5, 1.5, 1e-3);
    let u = [0.3, -1.1];
    let fwd = forward(&flow, 0.5, 1.5, &u).unwrap();
    let adj = adjoint(&flow, 1.5, 0.5, &u).unwrap();
    let grid = flow.grid();
    for k in (0..=grid.n_steps()).step_by(100) {
        let r = grid.time(k) - 0.5;
        let want = two_state_exp(r) * nalgebra::DVector::from_column_slice(&u);
        let back = two_state_exp(1.0 - r) * nalgebra::DVector::from_column_slice(&u);
        for x in 0..2 {
            assert!((fwd.at(k)[x] - want[x]).abs() < 1e-8);
            assert!((adj.at(k)[x] - back[x]).abs() < 1e-8);
        }
    }
}

#[test]
fn static_adjoint_is_forward_reversed() {
    let grid = TimeGrid::new(0.5, 1.0, 50).unwrap();
    let edges = random_edges(7, 4);
    let mut r = rng(4);
    let c = random_positive(edges.len(), &mut r);
    let m = random_positive(7, &mut r);
    let flow = FlowSpec::static_graph(m, &edges, c, GraphMetric::Intrinsic, grid).unwrap();
    let g = random_field(7, &mut r);
    let fwd = forward(&flow, 0.5, 1.0, &g).unwrap();
    let adj = adjoint(&flow, 1.0, 0.5, &g).unwrap();
    for x in 0..7 {
        assert!((fwd.result()[x] - adj.result()[x]).abs() < 1e-12);
    }
}

#[test]
fn two_point_dual_of_dirac() {
    let flow = two_point(0.5, 1.5, 1e-3);
    let img = dual_on_measures(&flow, 1.5, 0.5, &ProbabilityMeasure::dirac(2, 0)).unwrap();
    let e = (-2.0f64).exp();
    assert!((img.measure.weights()[0] - 0.5 * (1.0 + e)).abs() < 1e-8);
    assert!((img.measure.weights()[1] - 0.5 * (1.0 - e)).abs() < 1e-8);
}

#[test]
fn static_invariant_measure_is_fixed() {
    let grid = TimeGrid::new(0.5, 1.0, 20).unwrap();
    let m = vec![1.0, 2.0, 0.5, 1.5];
    let flow =
        FlowSpec::static_graph(m.clone(), &[(0, 1), (1, 2), (2, 3)], vec![1.0, 0.3, 2.0], GraphMetric::Intrinsic, grid)
            .unwrap();
    let mu = ProbabilityMeasure::normalized(m).unwrap();
    let img = dual_on_measures(&flow, 1.0, 0.5, &mu).unwrap();
    for (a, b) in img.measure.weights().iter().zip(mu.weights()) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn dual_mass_defect_is_small() {
    let flow = random_flow(10, 8, 1e-3);
    let mut r = rng(8);
    for _ in 0..5 {
        let mu = random_probability(10, &mut r);
        let img = dual_on_measures(&flow, 1.0, 0.5, &mu).unwrap();
        assert!(img.mass_defect < 1e-6, "{}", img.mass_defect);
    }
}

#[test]
fn composition_matches_direct_run() {
    let flow = random_flow(8, 5, 1e-2);
    let a = forward_matrix(&flow, 0.5, 0.7).unwrap();
    let b = forward_matrix(&flow, 0.7, 1.0).unwrap();
    let ab = forward_matrix(&flow, 0.5, 1.0).unwrap();
    assert!((b * a - ab).amax() < 1e-10);
}

#[test]
fn trivial_duality_cases() {
    let flow = random_flow(6, 2, 1e-2);
    let mut r = rng(2);
    let g = random_field(6, &mut r);
    let h = random_field(6, &mut r);
    assert_eq!(duality_check(&flow, 0.5, 1.0, &h, &[0.0; 6]).unwrap(), 0.0);
    // h = 1 gives ∫g dm_t against ∫P*g dm_s: mass conservation of the adjoint
    assert!(duality_check(&flow, 0.5, 1.0, &[1.0; 6], &g).unwrap() < 1e-4);
    let grid = TimeGrid::new(0.5, 1.0, 10).unwrap();
    let stat = FlowSpec::static_graph(vec![1.0, 2.0, 3.0], &[(0, 1), (1, 2)], vec![1.0, 1.0], GraphMetric::Intrinsic, grid)
        .unwrap();
    assert!(duality_check(&stat, 0.5, 1.0, &h[..3], &g[..3]).unwrap() < 1e-12);
}

#[test]
fn duality_defect_refines_at_second_order() {
    for seed in [1, 2, 3] {
        let mut r = rng(seed + 100);
        let h = random_field(10, &mut r);
        let g = random_positive(10, &mut r);
        let coarse = duality_check(&random_flow(10, seed, 2e-3), 0.5, 1.0, &h, &g).unwrap();
        let fine = duality_check(&random_flow(10, seed, 1e-3), 0.5, 1.0, &h, &g).unwrap();
        assert!(fine <= 1e-6, "seed {seed}: {fine:e}");
        assert!(order(coarse, fine) >= 1.8, "seed {seed}: order {}", order(coarse, fine));
    }
}

#[test]
fn positivity_maximum_principle_and_lp_bounds() {
    for seed in 0..4 {
        let n = 6 + 4 * seed as usize;
        let flow = random_flow_steps(n, seed, 0.5, 100);
        let l = flow.lipschitz();
        let kt = flow.grid().n_steps();
        let ms = flow.measure_weights(0);
        let mt = flow.measure_weights(kt);
        let p = forward_matrix(&flow, 0.5, 1.0).unwrap();
        assert!(p.min() >= 0.0);
        let mut r = rng(seed);
        for _ in 0..10 {
            let u = random_field(n, &mut r);
            let pu = ricci_lab::propagator::apply(&p, &u);
            let hi = u.iter().cloned().fold(f64::MIN, f64::max);
            let lo = u.iter().cloned().fold(f64::MAX, f64::min);
            assert!(pu.iter().all(|v| *v <= hi + 1e-12 && *v >= lo - 1e-12));
            for q in [1.0, 2.0] {
                let norm = |v: &[f64], m: &[f64]| v.iter().zip(m).map(|(a, w)| a.abs().powf(q) * w).sum::<f64>().powf(1.0 / q);
                let bound = (l * 0.5 / q).exp() * norm(&u, &ms);
                assert!(norm(&pu, &mt) <= bound * (1.0 + 1e-12), "p = {q}, seed {seed}");
            }
        }
    }
}

#[test]
fn adjoint_of_constant_is_bounded() {
    let flow = random_flow_steps(12, 9, 0.5, 100);
    let l = flow.lipschitz();
    let run = adjoint(&flow, 1.0, 0.5, &[2.0; 12]).unwrap();
    let grid = flow.grid();
    for k in 0..=grid.n_steps() {
        let bound = 2.0 * (l * (1.0 - grid.time(k))).exp();
        assert!(run.at(k).iter().all(|v| *v >= 0.0 && *v <= bound + 1e-12));
    }
    let p = adjoint_matrix(&flow, 1.0, 0.5).unwrap();
    assert!(p.min() >= 0.0);
}

#[test]
fn variance_identity_on_graphs() {
    for seed in [11, 12] {
        let mut r = rng(seed);
        let u = random_field(10, &mut r);
        let g = random_positive(10, &mut r);
        let coarse = variance_identity(&random_flow(10, seed, 2e-3), 0.5, 1.0, &u, &g).unwrap();
        let fine = variance_identity(&random_flow(10, seed, 1e-3), 0.5, 1.0, &u, &g).unwrap();
        assert!(fine.relative <= 1e-4, "{fine:?}");
        assert!(order(coarse.relative, fine.relative) >= 1.8);
    }
}

#[test]
fn variance_identity_on_the_circle() {
    let n = 64;
    let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
    let g: Vec<f64> = (0..n).map(|i| 1.5 + (i as f64 * 0.2).cos()).collect();
    let coarse = variance_identity(&breathing_circle(n, 0.5, 0.5, 250), 0.5, 1.0, &u, &g).unwrap();
    let fine = variance_identity(&breathing_circle(n, 0.5, 0.5, 500), 0.5, 1.0, &u, &g).unwrap();
    assert!(fine.relative <= 1e-4);
    assert!(order(coarse.relative, fine.relative) >= 1.8);
}

#[test]
fn static_dissipation_admits_unit_constant() {
    let mut r = rng(3);
    let edges = random_edges(8, 3);
    let c = random_positive(edges.len(), &mut r);
    let m = random_positive(8, &mut r);
    let grid = TimeGrid::new(0.5, 1.0, 500).unwrap();
    let stat = FlowSpec::static_graph(m, &edges, c, GraphMetric::Intrinsic, grid).unwrap();
    let u = random_field(8, &mut r);
    let run = forward(&stat, 0.5, 1.0, &u).unwrap();
    let rep = regularity_report(&stat, &run).unwrap();
    assert!(rep.constant <= 1.0 && !rep.flagged);

    let run = forward(&stat, 0.5, 1.0, &[0.7; 8]).unwrap();
    let rep = regularity_report(&stat, &run).unwrap();
    assert!(rep.dissipation.abs() < 1e-20 && rep.energy_drop.abs() < 1e-20);
}

#[test]
fn circle_dissipation_constant_is_stable() {
    let build = |steps| {
        let grid = TimeGrid::new(0.5, 1.0, steps).unwrap();
        build_circle1d(64, &|_, _| 0.0, &|_, x: f64| 0.5 * x.cos(), grid, 0.5).unwrap()
    };
    let u: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
    let c: Vec<f64> = [200, 400]
        .iter()
        .map(|&s| {
            let flow = build(s);
            let run = forward(&flow, 0.5, 1.0, &u).unwrap();
            let rep = regularity_report(&flow, &run).unwrap();
            assert!(rep.constant.is_finite() && !rep.flagged);
            rep.constant
        })
        .collect();
    // a static flow dissipates at exactly half the rate; the first-step
    // quadrature error is what remains
    assert!((c[0] - c[1]).abs() < 0.05 * c[1], "{c:?}");
    assert!((c[1] - 0.5).abs() < 0.02, "{c:?}");
}

#[test]
fn ordering_errors() {
    let flow = two_point(0.5, 1.0, 0.1);
    assert!(forward(&flow, 1.0, 0.5, &[0.0, 1.0]).is_err());
    assert!(adjoint(&flow, 0.5, 1.0, &[0.0, 1.0]).is_err());
    assert!(forward(&flow, 0.55, 1.0, &[0.0, 1.0]).is_err());
}
