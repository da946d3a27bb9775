//! Accelerated proximal gradient for `phi(M) + lambda ||M||_*`.

use nalgebra::DMatrix;

use super::{SolveResult, SolverConfig, Trace, TraceRow};
use crate::error::{dim_err, Error, Result};
use crate::objective::{convex_value, psd_soft_threshold, svd_soft_threshold, ProblemInstance, SmoothLoss};

/// Symmetric instances solve `min_{M >= 0} phi(M) + lambda tr(M)`, whose
/// prox is [`psd_soft_threshold`].
pub fn solve_convex_prox(inst: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    let (d1, d2) = inst.op().domain_shape();
    solve_convex_prox_from(inst, DMatrix::zeros(d1, d2), config)
}

pub fn solve_convex_prox_from(inst: &ProblemInstance, m0: DMatrix<f64>, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    if m0.shape() != inst.op().domain_shape() {
        return Err(dim_err("initial matrix does not match the operator domain"));
    }
    let lambda = inst.lambda();
    let prox = |m: &DMatrix<f64>, t: f64| {
        if inst.is_symmetric() {
            psd_soft_threshold(m, t)
        } else {
            svd_soft_threshold(m, t)
        }
    };
    let lip = inst.op().normal_norm_estimate(200, config.seed).max(1e-12);
    let mut step = 1.0 / lip;
    let mut trace = Trace::new(config.record_trace);

    let mut x = m0;
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut fx = convex_value(inst, &x)?;
    let mut residual = f64::INFINITY;
    trace.push(TraceRow {
        iter: 0,
        objective: fx,
        grad_norm: residual,
        tr_radius: None,
        model_decrease: None,
        cauchy_decrease: None,
        accepted: true,
    });

    for iter in 1..=config.max_iters {
        let (phi_y, g_y) = inst.value_grad(&y)?;
        let (x_next, phi_next) = loop {
            let cand = prox(&(&y - &g_y * step), step * lambda);
            let diff = &cand - &y;
            let phi_c = inst.value(&cand)?;
            if phi_c <= phi_y + g_y.dot(&diff) + 0.5 / step * diff.norm_squared() + 1e-14 * phi_y.abs() {
                break (cand, phi_c);
            }
            step *= config.backtrack_shrink;
        };
        let f_next = phi_next + lambda * crate::objective::nuclear_norm(&x_next);
        if !f_next.is_finite() {
            return Err(Error::NonFinite { iter });
        }
        // restart momentum whenever the objective goes up
        let restart = f_next > fx;
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = if restart { 0.0 } else { (theta - 1.0) / theta_next };
        y = &x_next + (&x_next - &x) * beta;
        theta = if restart { 1.0 } else { theta_next };
        x = x_next;
        fx = f_next;

        // fixed-point residual of the plain prox-gradient map at x
        let g_x = inst.grad(&x)?;
        let fixed = prox(&(&x - &g_x * step), step * lambda);
        residual = (&x - fixed).norm();
        trace.push(TraceRow {
            iter,
            objective: fx,
            grad_norm: residual / step,
            tr_radius: None,
            model_decrease: None,
            cauchy_decrease: None,
            accepted: true,
        });
        if residual <= config.grad_tol * (1.0 + x.norm()) {
            return Ok(result(x, fx, residual / step, iter, true, trace));
        }
    }
    let converged = residual <= config.grad_tol * (1.0 + x.norm());
    Ok(result(x, fx, residual / step, config.max_iters, converged, trace))
}

fn result(x: DMatrix<f64>, objective: f64, grad_norm: f64, iters: usize, converged: bool, trace: Trace) -> SolveResult {
    SolveResult { point: None, matrix: x, objective, grad_norm, iters, converged, trace: trace.rows }
}
