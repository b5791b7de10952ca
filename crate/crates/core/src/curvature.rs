//! Lower curvature bound from the pointwise iterated square field.
//!
//! At a state `x` both `Γ(u)(x)` and `Γ₂(u)(x)` only see `u` on the 2-ball of
//! `x` and are invariant under adding constants, so we fix `u(x) = 0`. `Γ(u)(x)`
//! depends on the neighbors `A` only, while the outer shell `B` enters `Γ₂`
//! with a positive diagonal block. Minimizing over `u_B` first leaves the
//! Schur complement on `A`, and the local bound is the smallest generalized
//! eigenvalue of that form against `Γ(·)(x)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GeneratorSnapshot;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    /// `min_x K_x`.
    pub k_star: f64,
    /// State attaining the minimum.
    pub argmin: usize,
    /// Local bound per state.
    pub per_state: Vec<f64>,
}

/// Best constant `K_x` with `Γ₂(u)(x) ≥ K_x Γ(u)(x)` for all `u`.
pub fn local_curvature(snap: &GeneratorSnapshot, x: usize) -> Result<f64> {
    let n = snap.n();
    let inner: Vec<usize> = snap.adjacency(x).iter().map(|&(y, _)| y).collect();
    if inner.is_empty() {
        return Err(Error::Structure(format!("state {x} is isolated")));
    }
    let mut outer = Vec::new();
    for &a in &inner {
        for &(b, _) in snap.adjacency(a) {
            if b != x && !inner.contains(&b) && !outer.contains(&b) {
                outer.push(b);
            }
        }
    }
    let vars: Vec<usize> = inner.iter().chain(&outer).copied().collect();
    let p = vars.len();
    let na = inner.len();

    let mut q = DMatrix::zeros(p, p);
    let mut ui = vec![0.0; n];
    let mut uj = vec![0.0; n];
    for i in 0..p {
        ui[vars[i]] = 1.0;
        for j in i..p {
            uj[vars[j]] = 1.0;
            let v = snap.gamma2_bilinear_at(&ui, &uj, x);
            q[(i, j)] = v;
            q[(j, i)] = v;
            uj[vars[j]] = 0.0;
        }
        ui[vars[i]] = 0.0;
    }

    let q_aa = q.view((0, 0), (na, na)).into_owned();
    let q_eff = if outer.is_empty() {
        q_aa
    } else {
        let nb = p - na;
        let q_ab = q.view((0, na), (na, nb)).into_owned();
        let q_bb = q.view((na, na), (nb, nb)).into_owned();
        let inv = q_bb
            .clone()
            .try_inverse()
            .or_else(|| q_bb.pseudo_inverse(1e-14).ok())
            .ok_or_else(|| Error::Structure(format!("degenerate 2-ball at state {x}")))?;
        &q_aa - &q_ab * inv * q_ab.transpose()
    };

    let m = snap.weights()[x];
    let scale: Vec<f64> = snap
        .adjacency(x)
        .iter()
        .map(|&(_, c)| (c / (2.0 * m)).sqrt().recip())
        .collect();
    let mut normalized = q_eff;
    for i in 0..na {
        for j in 0..na {
            normalized[(i, j)] *= scale[i] * scale[j];
        }
    }
    let sym = (&normalized + normalized.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `K* = min_x K_x` over all states.
pub fn estimate_curvature(snap: &GeneratorSnapshot) -> Result<CurvatureEstimate> {
    use rayon::prelude::*;
    let per_state: Vec<f64> = (0..snap.n())
        .into_par_iter()
        .map(|x| local_curvature(snap, x))
        .collect::<Result<_>>()?;
    let (argmin, k_star) = per_state
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, k)| if k < acc.1 { (i, k) } else { acc });
    Ok(CurvatureEstimate {
        k_star,
        argmin,
        per_state,
    })
}
