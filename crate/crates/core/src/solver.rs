//! SpaRSA proximal-gradient solver for all five models.
//!
//! Each outer iteration picks a curvature estimate `α`, forms
//! `U = A − ∇f(A)/α` and applies the group-wise thresholding operator with
//! levels `(λ₁/α, λ₂/α)`. The candidate is accepted once it achieves
//! sufficient decrease of the composite objective; otherwise `α` grows by
//! `η` and the step is retried.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, CodeMatrix, Dictionary, GroupPartition, RegularizerSpec, SignalSet};
use crate::prox::{hilasso_prox_in_place, scalar_soft_threshold, ProxWeights};

/// Fraction of the quadratic model decrease required for acceptance.
const SUFFICIENT_DECREASE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha0: f64,
    pub eta: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub rel_tol: f64,
    pub obj_tol: f64,
    pub bb_init: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            eta: 2.0,
            alpha_min: 1e-10,
            alpha_max: 1e12,
            max_outer_iters: 5000,
            max_inner_iters: 60,
            rel_tol: 1e-6,
            obj_tol: 1e-12,
            bb_init: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Parameter(msg.to_string()));
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad("alpha0 must be positive");
        }
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return bad("eta must be > 1");
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < self.alpha_max && self.alpha_max.is_finite()) {
            return bad("require 0 < alpha_min < alpha_max < inf");
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.rel_tol > 0.0 && self.obj_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub code: CodeMatrix,
    /// Objective at the starting point followed by every accepted iterate.
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub final_alpha: f64,
}

impl SolverResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the starting objective")
    }
}

/// `Dᵀ(M∘(DA − X))`, the gradient of the masked data term.
pub fn gradient_data_term(dict: &Dictionary, signals: &SignalSet, codes: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = model::masked_residual(dict, signals, codes)?;
    Ok(dict.matrix().tr_mul(&r))
}

/// Group-wise thresholding of `u` in place, with levels scaled by `1/alpha`.
pub fn apply_prox(u: &mut DMatrix<f64>, partition: &GroupPartition, spec: &RegularizerSpec, alpha: f64) {
    let t1 = spec.lambda1 / alpha;
    let t2 = spec.lambda2 / alpha;
    if t2 == 0.0 {
        if t1 > 0.0 {
            u.apply(|v| *v = scalar_soft_threshold(*v, t1));
        }
        return;
    }
    let n = u.ncols();
    let mut buf = Vec::new();
    for group in partition.groups() {
        let scale = if spec.group_size_scaling { (group.len() as f64).sqrt() } else { 1.0 };
        let weights = ProxWeights::new(t1, t2 * scale);
        if spec.collaborative {
            buf.clear();
            for j in 0..n {
                buf.extend(group.iter().map(|&i| u[(i, j)]));
            }
            hilasso_prox_in_place(&mut buf, weights);
            let mut it = buf.iter();
            for j in 0..n {
                for &i in group {
                    u[(i, j)] = *it.next().expect("band size");
                }
            }
        } else {
            for j in 0..n {
                buf.clear();
                buf.extend(group.iter().map(|&i| u[(i, j)]));
                hilasso_prox_in_place(&mut buf, weights);
                for (&i, &v) in group.iter().zip(&buf) {
                    u[(i, j)] = v;
                }
            }
        }
    }
}

/// One proximal-gradient step from `codes` with curvature `alpha`.
pub fn proximal_step(
    dict: &Dictionary,
    signals: &SignalSet,
    codes: &DMatrix<f64>,
    spec: &RegularizerSpec,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let grad = gradient_data_term(dict, signals, codes)?;
    Ok(step_from_gradient(codes, &grad, dict.partition(), spec, alpha))
}

fn step_from_gradient(
    codes: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    partition: &GroupPartition,
    spec: &RegularizerSpec,
    alpha: f64,
) -> DMatrix<f64> {
    let mut u = codes - grad * (1.0 / alpha);
    apply_prox(&mut u, partition, spec, alpha);
    u
}

/// Objective value and data-term residual at `codes`.
fn evaluate(
    dict: &Dictionary,
    signals: &SignalSet,
    codes: &DMatrix<f64>,
    spec: &RegularizerSpec,
) -> Result<(f64, DMatrix<f64>)> {
    let r = model::masked_residual(dict, signals, codes)?;
    let f = 0.5 * r.norm_squared() + model::penalty(codes, dict.partition(), spec)?;
    Ok((f, r))
}

/// Runs SpaRSA from `initial` (zero when `None`).
pub fn sparsa_solve(
    dict: &Dictionary,
    signals: &SignalSet,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    initial: Option<&CodeMatrix>,
) -> Result<SolverResult> {
    spec.validate()?;
    config.validate()?;
    let (p, n) = (dict.num_atoms(), signals.num_signals());
    let mut codes = match initial {
        Some(a) => a.clone(),
        None => DMatrix::zeros(p, n),
    };
    model::check_dims(dict, signals, &codes)?;

    let partition = dict.partition();
    let (mut f, r) = evaluate(dict, signals, &codes, spec)?;
    if !f.is_finite() {
        return Err(Error::NonFinite("initial objective"));
    }
    let mut grad = dict.matrix().tr_mul(&r);
    let mut trace = vec![f];
    let mut previous: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut alpha = config.alpha0;
    let mut converged = false;
    let mut outer = 0;

    while outer < config.max_outer_iters {
        alpha = match (&previous, config.bb_init) {
            (Some((a_old, g_old)), true) => {
                let da = &codes - a_old;
                let dg = &grad - g_old;
                let dd = da.norm_squared();
                let bb = if dd > 0.0 { dg.dot(&da) / dd } else { config.alpha_min };
                bb.clamp(config.alpha_min, config.alpha_max)
            }
            _ => config.alpha0.clamp(config.alpha_min, config.alpha_max),
        };

        let mut accepted = None;
        for _ in 0..config.max_inner_iters {
            let cand = step_from_gradient(&codes, &grad, partition, spec, alpha);
            let (fc, rc) = evaluate(dict, signals, &cand, spec)?;
            if !fc.is_finite() {
                return Err(Error::NonFinite("candidate objective"));
            }
            let step_sq = (&cand - &codes).norm_squared();
            if fc <= f - 0.5 * SUFFICIENT_DECREASE * alpha * step_sq {
                accepted = Some((cand, fc, rc, step_sq));
                break;
            }
            if alpha >= config.alpha_max {
                break;
            }
            alpha = (alpha * config.eta).min(config.alpha_max);
        }
        outer += 1;

        let Some((cand, fc, rc, step_sq)) = accepted else {
            // No acceptable step even at the largest curvature: the current
            // iterate is stationary up to rounding, or the budget is too small.
            let probe = step_from_gradient(&codes, &grad, partition, spec, alpha);
            let change = (&probe - &codes).norm();
            converged = change <= config.rel_tol * codes.norm().max(1.0);
            break;
        };

        let change = step_sq.sqrt();
        let scale = codes.norm().max(1.0);
        let obj_change = f - fc;
        let new_grad = dict.matrix().tr_mul(&rc);
        previous = Some((std::mem::replace(&mut codes, cand), std::mem::replace(&mut grad, new_grad)));
        f = fc;
        trace.push(f);

        if change <= config.rel_tol * scale || obj_change <= config.obj_tol * f.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    Ok(SolverResult {
        code: codes,
        objective_trace: trace,
        outer_iterations: outer,
        converged,
        final_alpha: alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiselessConfig {
    /// Weight of the group term; `1 − lambda` weighs the ℓ₁ term.
    pub lambda: f64,
    pub homotopy_steps: usize,
    /// Extra halvings allowed after the schedule to meet `residual_tol`.
    pub extra_steps: usize,
    pub ratio: f64,
    /// Required `‖X − DA‖_F / ‖X‖_F`.
    pub residual_tol: f64,
    pub solver: SolverConfig,
}

impl Default for NoiselessConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            homotopy_steps: 20,
            extra_steps: 30,
            ratio: 0.5,
            residual_tol: 1e-6,
            solver: SolverConfig {
                rel_tol: 1e-10,
                obj_tol: 1e-15,
                max_outer_iters: 20_000,
                ..SolverConfig::default()
            },
        }
    }
}

/// Equality-constrained HiLasso, `min λψ(a) + (1−λ)‖a‖₁ s.t. x = Da`, by
/// continuation on the Lagrangian weight `c` with `(λ₁, λ₂) = c(1−λ, λ)`.
pub fn solve_noiseless(dict: &Dictionary, signals: &SignalSet, config: &NoiselessConfig) -> Result<SolverResult> {
    let lambda = config.lambda;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if !(config.ratio > 0.0 && config.ratio < 1.0) {
        return Err(Error::Parameter("homotopy ratio must lie in (0, 1)".into()));
    }
    if signals.mask().is_some() {
        return Err(Error::Parameter("the noiseless solver takes fully observed signals".into()));
    }
    let x = signals.matrix();
    let x_norm = x.norm();
    let p = dict.num_atoms();
    if x_norm == 0.0 {
        return Ok(SolverResult {
            code: DMatrix::zeros(p, x.ncols()),
            objective_trace: vec![0.0],
            outer_iterations: 0,
            converged: true,
            final_alpha: config.solver.alpha0,
        });
    }
    let c0 = dict.matrix().tr_mul(x).amax();
    let mut codes: DMatrix<f64> = DMatrix::zeros(p, x.ncols());
    let mut trace = Vec::new();
    let mut total_iters = 0;
    let mut converged = true;
    let mut alpha;
    let mut c = c0;
    for step in 0..config.homotopy_steps + config.extra_steps {
        c *= config.ratio;
        let spec = RegularizerSpec::new(c * (1.0 - lambda), c * lambda, false)?;
        let res = sparsa_solve(dict, signals, &spec, &config.solver, Some(&codes))?;
        total_iters += res.outer_iterations;
        converged &= res.converged;
        alpha = res.final_alpha;
        trace.push(res.objective());
        codes = res.code;
        if step + 1 >= config.homotopy_steps {
            let residual = (dict.matrix() * &codes - x).norm();
            if residual <= config.residual_tol * x_norm {
                return Ok(SolverResult {
                    code: codes,
                    objective_trace: trace,
                    outer_iterations: total_iters,
                    converged,
                    final_alpha: alpha,
                });
            }
        }
    }
    let residual = (dict.matrix() * &codes - x).norm() / x_norm;
    Err(Error::NonConvergence(format!(
        "relative residual {residual:.3e} above {:.1e} after {} continuation steps",
        config.residual_tol,
        config.homotopy_steps + config.extra_steps
    )))
}
