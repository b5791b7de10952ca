//! Seeded families of test functions.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::flow::{Backend, FlowSpec};
use crate::gamma::GeneratorSnapshot;

/// Smallest number of non-constant functions in a bank.
pub const MIN_NON_CONSTANT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub values: Field,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionBank {
    pub seed: u64,
    pub functions: Vec<TestFunction>,
}

fn push(out: &mut Vec<TestFunction>, id: String, values: Vec<f64>) {
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let values = if scale > 0.0 {
        values.iter().map(|v| v / scale).collect()
    } else {
        values
    };
    out.push(TestFunction {
        id,
        values: Field::from_raw(values),
    });
}

impl TestFunctionBank {
    /// Bank suited to the flow's backend, built from the snapshot at `t_start`.
    pub fn for_flow(flow: &FlowSpec, seed: u64, size: usize) -> TestFunctionBank {
        match (flow.backend(), flow.circle()) {
            (Backend::Circle1d, Some(geom)) => TestFunctionBank::circle(geom.points, seed, size),
            _ => TestFunctionBank::graph(&GeneratorSnapshot::from_flow(flow, 0), seed, size),
        }
    }

    /// Indicators, Laplacian eigenmodes and uniform random fields.
    pub fn graph(snap: &GeneratorSnapshot, seed: u64, size: usize) -> TestFunctionBank {
        let n = snap.n();
        let size = size.max(MIN_NON_CONSTANT);
        let mut functions = vec![TestFunction {
            id: "const".into(),
            values: Field::constant(n, 1.0),
        }];
        for x in 0..n.min(size / 3) {
            let mut v = vec![0.0; n];
            v[x] = 1.0;
            push(&mut functions, format!("ind{x}"), v);
        }
        // eigenvectors of m^{1/2} L m^{-1/2}, mapped back
        let m = snap.weights();
        let l = snap.l_matrix();
        let sym = DMatrix::from_fn(n, n, |i, j| {
            let a = l[(i, j)] * (m[i] / m[j]).sqrt();
            let b = l[(j, i)] * (m[j] / m[i]).sqrt();
            0.5 * (a + b)
        });
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (rank, &k) in order.iter().skip(1).take((size / 3).max(1)).enumerate() {
            let v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, k)] / m[i].sqrt()).collect();
            push(&mut functions, format!("mode{}", rank + 1), v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = 0;
        while functions.len() < size + 1 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            push(&mut functions, format!("rand{r}"), v);
            r += 1;
        }
        TestFunctionBank { seed, functions }
    }

    /// Low-frequency trigonometric polynomials sampled at `x_i = 2πi/n`.
    pub fn circle(n: usize, seed: u64, size: usize) -> TestFunctionBank {
        let size = size.max(MIN_NON_CONSTANT);
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let mut functions = vec![TestFunction {
            id: "const".into(),
            values: Field::constant(n, 1.0),
        }];
        for k in 1..=3 {
            let kf = k as f64;
            push(&mut functions, format!("sin{k}"), xs.iter().map(|x| (kf * x).sin()).collect());
            push(&mut functions, format!("cos{k}"), xs.iter().map(|x| (kf * x).cos()).collect());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = 0;
        while functions.len() < size + 1 {
            let coeffs: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let offset = rng.random_range(-0.5..0.5);
            let v = xs
                .iter()
                .map(|x| {
                    offset
                        + coeffs
                            .iter()
                            .enumerate()
                            .map(|(k, (a, b))| {
                                let kf = (k + 1) as f64;
                                (a * (kf * x).cos() + b * (kf * x).sin()) / kf
                            })
                            .sum::<f64>()
                })
                .collect();
            push(&mut functions, format!("trig{r}"), v);
            r += 1;
        }
        TestFunctionBank { seed, functions }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn non_constant(&self) -> impl Iterator<Item = &TestFunction> {
        self.functions.iter().filter(|f| !f.values.is_constant(0.0))
    }

    pub fn get(&self, id: &str) -> Option<&TestFunction> {
        self.functions.iter().find(|f| f.id == id)
    }
}

/// Positive version `0.2 + (u - min u) / (max u - min u)`; constants map to 1.
pub fn positive_variant(u: &[f64]) -> Vec<f64> {
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![1.0; u.len()];
    }
    u.iter().map(|v| 0.2 + (v - lo) / (hi - lo)).collect()
}

/// `u ∨ ε` with `ε = 1e-8 ‖u‖_∞`, and the `ε` used.
pub fn clamp_positive(u: &[f64]) -> (Vec<f64>, f64) {
    let sup = u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let eps = 1e-8 * sup.max(f64::MIN_POSITIVE);
    (u.iter().map(|v| v.max(eps)).collect(), eps)
}
