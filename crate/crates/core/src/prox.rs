//! Closed-form thresholding operators.
//!
//! The subproblem for one group,
//!
//! ```text
//! min_z ½‖z − w‖² + t2‖z‖₂ + t1‖z‖₁
//! ```
//!
//! is solved exactly by scalar soft thresholding at `t1` followed by vector
//! soft thresholding of the result at `t2`. The collaborative version on a
//! `g × n` band uses the Frobenius norm in place of `‖·‖₂`, which is the same
//! operation on the flattened band.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Threshold levels for one proximal step: `t1 = λ₁/α`, `t2 = λ₂/α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxWeights {
    pub t1: f64,
    pub t2: f64,
}

impl ProxWeights {
    pub fn new(t1: f64, t2: f64) -> Self {
        debug_assert!(t1.is_finite() && t1 >= 0.0, "t1 = {t1}");
        debug_assert!(t2.is_finite() && t2 >= 0.0, "t2 = {t2}");
        Self { t1, t2 }
    }
}

/// `sgn(w)·max(0, |w| − t)`, with `sgn(0) = 0`.
#[inline]
pub fn scalar_soft_threshold(w: f64, t: f64) -> f64 {
    let mag = w.abs() - t;
    if mag > 0.0 {
        mag.copysign(w)
    } else {
        0.0
    }
}

/// Shrinks `h` towards zero by `t` in Euclidean norm, in place.
///
/// Returns the norm of the result.
pub fn vector_soft_threshold_in_place(h: &mut [f64], t: f64) -> f64 {
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= t || norm == 0.0 {
        h.fill(0.0);
        return 0.0;
    }
    let scale = (norm - t) / norm;
    h.iter_mut().for_each(|v| *v *= scale);
    norm - t
}

pub fn vector_soft_threshold(h: &[f64], t: f64) -> Vec<f64> {
    let mut out = h.to_vec();
    vector_soft_threshold_in_place(&mut out, t);
    out
}

/// Hierarchical thresholding of `w` in place. Linear in `w.len()`.
pub fn hilasso_prox_in_place(w: &mut [f64], weights: ProxWeights) {
    if weights.t1 > 0.0 {
        w.iter_mut().for_each(|v| *v = scalar_soft_threshold(*v, weights.t1));
    }
    if weights.t2 > 0.0 {
        vector_soft_threshold_in_place(w, weights.t2);
    }
}

/// Minimizer of `½‖z − w‖² + t2‖z‖₂ + t1‖z‖₁`.
pub fn hilasso_prox(w: &[f64], weights: ProxWeights) -> Vec<f64> {
    let mut z = w.to_vec();
    hilasso_prox_in_place(&mut z, weights);
    z
}

/// Minimizer of `½‖Z − W‖²_F + t2‖Z‖_F + t1 Σ_j ‖z_j‖₁` over `g × n` matrices.
pub fn collab_hilasso_prox(w: &DMatrix<f64>, weights: ProxWeights) -> DMatrix<f64> {
    let mut z = w.clone();
    hilasso_prox_in_place(z.as_mut_slice(), weights);
    z
}

/// Value of the single-group subproblem at `z`.
pub fn subproblem_value(z: &[f64], w: &[f64], weights: ProxWeights) -> f64 {
    let fit: f64 = z.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
    let l2 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let l1: f64 = z.iter().map(|v| v.abs()).sum();
    0.5 * fit + weights.t2 * l2 + weights.t1 * l1
}

/// Largest violation of the optimality conditions of the subproblem at `z`.
///
/// For `z ≠ 0`: `w_i − (1 + t2/‖z‖)z_i = t1·sgn(z_i)` on the support and
/// `|w_i| ≤ t1` off it. For `z = 0`: `‖soft(w, t1)‖ ≤ t2`.
pub fn optimality_violation(z: &[f64], w: &[f64], weights: ProxWeights) -> f64 {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let h = z_soft_norm(w, weights.t1);
        return (h - weights.t2).max(0.0);
    }
    let c = 1.0 + weights.t2 / norm;
    z.iter()
        .zip(w)
        .map(|(&zi, &wi)| {
            if zi != 0.0 {
                (wi - c * zi - weights.t1 * zi.signum()).abs()
            } else {
                (wi.abs() - weights.t1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn z_soft_norm(w: &[f64], t: f64) -> f64 {
    w.iter().map(|&v| scalar_soft_threshold(v, t).powi(2)).sum::<f64>().sqrt()
}
