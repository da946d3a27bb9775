use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CounterexampleInstance, SpurCond};
use crate::certify::{certify_convex_global, certify_point, CertifyTols, GlobalOptCertificate};
use crate::error::Result;
use crate::linalg::op_norm;
use crate::objective::SmoothLoss;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyTols {
    pub dual_identity: f64,
    pub global: f64,
    pub noise: f64,
    pub grad: f64,
    pub eig: f64,
    /// A saddle must have `hess_min_eig < -saddle_margin`.
    pub saddle_margin: f64,
}

impl Default for VerifyTols {
    fn default() -> Self {
        Self { dual_identity: 1e-10, global: 1e-9, noise: 1e-10, grad: 1e-10, eig: 1e-8, saddle_margin: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalStatus {
    LocalMinimum,
    /// Equality in the spurious-point condition: second-order critical,
    /// minimality undetermined.
    SecondOrderCritical,
    Saddle,
    NotCritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub clauses: Vec<Clause>,
    pub spur_cond: SpurCond,
    pub spur_lhs: f64,
    pub spur_rhs: f64,
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    pub error: f64,
    pub status: LocalStatus,
    /// Every clause agrees with the construction.
    pub consistent: bool,
    /// Consistent and the point is a spurious second-order critical point.
    pub passed: bool,
}

impl VerificationReport {
    pub fn failed_clauses(&self) -> Vec<&str> {
        self.clauses.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect()
    }
}

fn global_residual(g: &GlobalOptCertificate) -> f64 {
    if g.lambda == 0.0 {
        return g.grad_norm;
    }
    [g.tangent_residual, g.orthogonal_excess, g.complementarity, g.dual_infeasibility]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max)
}

fn clause(id: &str, name: &str, passed: bool, value: f64, detail: String) -> Clause {
    Clause { id: id.into(), name: name.into(), passed, value, detail }
}

pub fn verify_instance(inst: &CounterexampleInstance, tols: &VerifyTols) -> Result<VerificationReport> {
    let prob = &inst.problem;
    let lambda = prob.lambda();
    let d = inst.spec.d;
    let p_q = &inst.q * inst.q.transpose();
    let p_perp = &inst.q_perp * inst.q_perp.transpose();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut clauses = Vec::with_capacity(6);

    let grad_star = prob.grad(&inst.m_star)?;
    let target = (&eye - &p_q - &p_perp) * lambda;
    let dual_gap = (&grad_star + &eye * lambda - target).norm();
    clauses.push(clause(
        "i",
        "dual certificate grad phi(M*) + lambda I = lambda (I - P_Q - P_Qperp)",
        dual_gap <= tols.dual_identity,
        dual_gap,
        format!("residual {dual_gap:.3e} (tol {:.1e})", tols.dual_identity),
    ));

    let global = certify_convex_global(prob, &inst.m_star, tols.global)?;
    clauses.push(clause(
        "ii",
        "M* certified globally optimal for the convex problem",
        global.passed,
        global_residual(&global),
        format!("{:?} certificate, tol {:.1e}", global.mode, tols.global),
    ));

    let xi = &inst.problem.truth().expect("built instances carry truth").xi;
    let noise = op_norm(&prob.op().adjoint(xi)?);
    let noise_gap = (noise - lambda).abs();
    clauses.push(clause(
        "iii",
        "||A*(xi)||_op = lambda",
        noise_gap <= tols.noise,
        noise,
        format!("||A*(xi)||_op = {noise:.12e}, lambda = {lambda:.12e}"),
    ));

    let cert = certify_point(prob, &inst.spurious_point, Some(CertifyTols { grad_tol: tols.grad, eig_tol: tols.eig }))?;
    clauses.push(clause(
        "iv",
        "spurious point is first-order critical",
        cert.grad_norm <= tols.grad,
        cert.grad_norm,
        format!("||grad f|| = {:.3e} (tol {:.1e})", cert.grad_norm, tols.grad),
    ));

    let (lhs, rhs) = inst.spec.spur_sides();
    let eig = cert.hess_min_eig;
    let (eig_ok, expectation) = if inst.spur_cond.holds() {
        (eig >= -tols.eig, format!(">= -{:.1e}", tols.eig))
    } else {
        (eig < -tols.saddle_margin, format!("< -{:.1e}", tols.saddle_margin))
    };
    clauses.push(clause(
        "v",
        "Hessian sign matches the spurious-point condition",
        eig_ok,
        eig,
        format!("hess_min_eig = {eig:.3e}, expected {expectation} ({:?}: c c_perp r* = {lhs:.6}, rhs = {rhs:.6})", inst.spur_cond),
    ));

    let error = (inst.spurious_point.product() - &inst.m_star).norm();
    let floor = (inst.spec.r_star as f64).sqrt();
    clauses.push(clause(
        "vi",
        "error ||M_sp - M*||_F >= sqrt(r_star)",
        error >= floor * (1.0 - 1e-12),
        error,
        format!("error {error:.6}, sqrt(r_star) = {floor:.6}"),
    ));

    let first_order = cert.grad_norm <= tols.grad;
    let psd = eig >= -tols.eig;
    let status = match (first_order, psd, inst.spur_cond) {
        (false, _, _) => LocalStatus::NotCritical,
        (true, false, _) => LocalStatus::Saddle,
        (true, true, SpurCond::Strict) => LocalStatus::LocalMinimum,
        (true, true, _) => LocalStatus::SecondOrderCritical,
    };
    let consistent = clauses.iter().all(|c| c.passed);
    Ok(VerificationReport {
        clauses,
        spur_cond: inst.spur_cond,
        spur_lhs: lhs,
        spur_rhs: rhs,
        grad_norm: cert.grad_norm,
        hess_min_eig: eig,
        error,
        status,
        consistent,
        passed: consistent && first_order && psd,
    })
}
