//! Trust-region Newton-CG with the Steihaug-Toint inner solver.

use super::{finish, SolveResult, SolverConfig, Trace, TraceRow};
use crate::error::{Error, Result};
use crate::objective::{FactorPoint, Linearization, ProblemInstance};

struct Step {
    p: FactorPoint,
    /// `m(0) - m(p)` for the quadratic model.
    model_decrease: f64,
    cauchy_decrease: f64,
}

/// Positive root `tau` of `||z + tau d|| = radius`.
fn to_boundary(z: &FactorPoint, d: &FactorPoint, radius: f64) -> f64 {
    let a = d.dot(d);
    let b = 2.0 * z.dot(d);
    let c = z.dot(z) - radius * radius;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    if b >= 0.0 {
        2.0 * (-c) / (b + disc)
    } else {
        (-b + disc) / (2.0 * a)
    }
}

fn steihaug(lin: &Linearization<'_, '_, ProblemInstance>, radius: f64, max_cg: usize) -> Result<Step> {
    let g = &lin.grad;
    let gn2 = g.dot(g);
    let gn = gn2.sqrt();
    let tol = gn * gn.sqrt().min(0.5);
    let mut z = g.zeros_like();
    let mut bz = g.zeros_like();
    let mut r = g.clone();
    let mut d = g.scaled(-1.0);
    let mut rr = gn2;
    let mut cauchy = 0.0;
    let model = |z: &FactorPoint, bz: &FactorPoint| -(g.dot(z) + 0.5 * z.dot(bz));
    for j in 0..max_cg.max(1) {
        let bd = lin.hvp(&d)?;
        let dbd = d.dot(&bd);
        if j == 0 {
            // d = -g: Cauchy point along the steepest descent direction
            let t = if dbd <= 0.0 { radius / gn } else { (gn2 / dbd).min(radius / gn) };
            cauchy = t * gn2 - 0.5 * t * t * dbd;
        }
        if dbd <= 0.0 {
            let tau = to_boundary(&z, &d, radius);
            z.axpy(tau, &d);
            bz.axpy(tau, &bd);
            break;
        }
        let alpha = rr / dbd;
        let z_next = z.add_scaled(&d, alpha);
        if z_next.norm() >= radius {
            let tau = to_boundary(&z, &d, radius);
            z.axpy(tau, &d);
            bz.axpy(tau, &bd);
            break;
        }
        z = z_next;
        bz.axpy(alpha, &bd);
        r.axpy(alpha, &bd);
        let rr_next = r.dot(&r);
        if rr_next.sqrt() <= tol {
            break;
        }
        d = d.scaled(rr_next / rr).add_scaled(&r, -1.0);
        rr = rr_next;
    }
    let model_decrease = model(&z, &bz);
    Ok(Step { p: z, model_decrease, cauchy_decrease: cauchy })
}

pub(super) fn solve(inst: &ProblemInstance, init: FactorPoint, config: &SolverConfig) -> Result<SolveResult> {
    let f = inst.factored();
    let mut x = init;
    let mut radius = config.tr_initial_radius;
    let mut trace = Trace::new(config.record_trace);
    let max_cg = config.tr_max_cg.unwrap_or(usize::MAX).min(x.dim());

    let lin = f.linearize(&x)?;
    let mut fx = lin.value;
    if !fx.is_finite() {
        return Err(Error::NonFinite { iter: 0 });
    }
    let mut gn = lin.grad.norm();
    drop(lin);
    let target = config.grad_tol * gn.max(1.0);
    trace.push(TraceRow {
        iter: 0,
        objective: fx,
        grad_norm: gn,
        tr_radius: Some(radius),
        model_decrease: None,
        cauchy_decrease: None,
        accepted: true,
    });

    for iter in 1..=config.max_iters {
        if gn <= target {
            return Ok(finish(x, fx, gn, iter - 1, true, trace));
        }
        let lin = f.linearize(&x)?;
        let step = steihaug(&lin, radius, max_cg)?;
        drop(lin);
        let cand = x.add_scaled(&step.p, 1.0);
        let fc = f.value(&cand)?;
        let pnorm = step.p.norm();
        let actual = fx - fc;
        let pred = step.model_decrease;
        let roundoff = 64.0 * f64::EPSILON * fx.abs().max(1e-300);
        let rho = if !fc.is_finite() {
            -1.0
        } else if pred <= roundoff {
            // model and objective decreases are below roundoff: judge by the sign only
            if actual >= 0.0 {
                1.0
            } else {
                -1.0
            }
        } else {
            actual / pred
        };
        let accepted = rho > 1e-4 && fc <= fx;
        if rho < 0.25 {
            radius = 0.25 * pnorm.min(radius);
        } else if rho > 0.75 && pnorm >= 0.99 * radius {
            radius = (2.0 * radius).min(config.tr_max_radius);
        }
        if accepted {
            x = cand;
            fx = fc;
            gn = f.grad(&x)?.norm();
        }
        trace.push(TraceRow {
            iter,
            objective: fx,
            grad_norm: gn,
            tr_radius: Some(radius),
            model_decrease: Some(pred),
            cauchy_decrease: Some(step.cauchy_decrease),
            accepted,
        });
        if radius < 1e-15 * (1.0 + x.norm()) {
            // the model can no longer produce a decrease distinguishable from roundoff
            return Ok(finish(x, fx, gn, iter, gn <= target, trace));
        }
    }
    let converged = gn <= target;
    Ok(finish(x, fx, gn, config.max_iters, converged, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boundary_root_lands_on_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let z = FactorPoint::random(&mut rng, 3, 4, 2, false, 0.1);
            let d = z.random_like(&mut rng);
            let tau = to_boundary(&z, &d, 2.0);
            assert!(tau >= 0.0);
            assert!((z.add_scaled(&d, tau).norm() - 2.0).abs() < 1e-12);
        }
    }
}
