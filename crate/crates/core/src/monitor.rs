//! Convergence diagnostics: KKT residuals, the Lyapunov trace, and the
//! termination decision.

use serde::Serialize;

use crate::dynamics::RhsResult;
use crate::problem::EvalPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceSet {
    pub stationarity: f64,
    pub ec_violation: f64,
    pub iec_violation: f64,
    pub complementarity: f64,
    pub sign: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        ToleranceSet {
            stationarity: 1e-6,
            ec_violation: 1e-8,
            iec_violation: 1e-8,
            complementarity: 1e-8,
            sign: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// `|f_theta + h_theta^T pi_e + g_theta^T pi_i|_2`
    pub stationarity: f64,
    /// `|h|_2`
    pub ec_violation: f64,
    /// `|max(g, 0)|_2`
    pub iec_violation: f64,
    /// `max_i |pi_i g_i|` over every inequality row
    pub complementarity: f64,
    /// `max(0, -min_{i in W} pi_i)`
    pub sign_violation: f64,
}

impl KktReport {
    pub fn within(&self, tol: &ToleranceSet) -> bool {
        self.stationarity <= tol.stationarity
            && self.ec_violation <= tol.ec_violation
            && self.iec_violation <= tol.iec_violation
            && self.complementarity <= tol.complementarity
            && self.sign_violation <= tol.sign
    }
}

pub fn kkt_report(eval: &EvalPoint, rhs: &RhsResult) -> KktReport {
    let grad = &eval.f_grad + eval.h_jac.tr_mul(&rhs.pi_e) + eval.g_jac.tr_mul(&rhs.pi_i);
    let iec = eval.g.map(|g| g.max(0.0)).norm();
    let complementarity = rhs
        .pi_i
        .iter()
        .zip(eval.g.iter())
        .map(|(p, g)| (p * g).abs())
        .fold(0.0, f64::max);
    let min_working = rhs
        .working_set
        .working
        .iter()
        .map(|&i| rhs.pi_i[i])
        .fold(f64::INFINITY, f64::min);
    KktReport {
        stationarity: grad.norm(),
        ec_violation: eval.h.norm(),
        iec_violation: iec,
        complementarity,
        sign_violation: (-min_working).max(0.0),
    }
}

/// Rows with `g_i >= 0`: the violated-or-active set used by [`lyapunov_value`].
pub fn violated_rows(eval: &EvalPoint) -> Vec<usize> {
    (0..eval.g.len()).filter(|&i| eval.g[i] >= 0.0).collect()
}

/// `V = |h|_2 + |g_I|_2 + c1 f` for the row set `I`.
pub fn lyapunov_value(eval: &EvalPoint, rows: &[usize], c1: f64) -> f64 {
    let g_sq: f64 = rows.iter().map(|&i| eval.g[i] * eval.g[i]).sum();
    eval.h.norm() + g_sq.sqrt() + c1 * eval.f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Continue,
    Converged,
    HorizonReached,
}

/// Converged when every residual is within tolerance, otherwise
/// horizon-reached once `tau >= t_end`.
pub fn decide(report: &KktReport, tol: &ToleranceSet, tau: f64, t_end: f64) -> Decision {
    if report.within(tol) {
        Decision::Converged
    } else if tau >= t_end {
        Decision::HorizonReached
    } else {
        Decision::Continue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorConfig {
    pub tolerances: ToleranceSet,
    /// Objective weight in the Lyapunov trace.
    pub c1: f64,
    /// Integrate to `t_end` even after convergence.
    pub fixed_horizon: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            tolerances: ToleranceSet::default(),
            c1: 1e-2,
            fixed_horizon: false,
        }
    }
}
