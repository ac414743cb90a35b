//! Right-hand side of the optimization flow
//!
//! ```text
//! dtheta/dtau = -K_theta (f_theta + hbar_theta^T pi)
//! pi = -(hbar_theta K_theta hbar_theta^T)^+ (hbar_theta K_theta f_theta - [K_h h; k_g g_W])
//! ```
//!
//! where `hbar` stacks the equality rows and the inequality rows of the
//! working set `W`. On a feasible point the violation terms vanish and the
//! flow slides along the constraint surface while decreasing `f`; off it the
//! equality violations decay as `dh/dtau = -K_h h` and working inequality
//! rows as `dg_i/dtau = -k_i g_i`.
//!
//! Indices in this module are 0-based.

mod lp;
mod pts;
mod working_set;

use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector};
use crate::problem::{Dims, EvalPoint};

pub use lp::{feasibility_lp, solve_lp, FeasibilityLp, LinearProgram, LpError, LpSolution};
pub use pts::{PtsError, PtsState};
pub use working_set::{resolve_working_set, solve_fadop_qp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("working-set iteration cycled through {}", format_sets(.sets))]
    Cycling { sets: Vec<Vec<usize>> },
    #[error("working-set iteration ended with working row {} off its required dynamics by {residual:e}", .index + 1)]
    Unresolved { index: usize, residual: f64 },
    #[error("direction subproblem is infeasible (feasibility LP optimum {gamma:e} > 0)")]
    InfeasibleSubproblem { gamma: f64 },
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error("quadratic subproblem did not converge in {iterations} iterations")]
    QpNoConvergence { iterations: usize },
}

/// 1-based, as users see them.
fn format_sets(sets: &[Vec<usize>]) -> String {
    let parts: Vec<String> = sets
        .iter()
        .map(|s| {
            let inner: Vec<String> = s.iter().map(|i| (i + 1).to_string()).collect();
            format!("{{{}}}", inner.join(","))
        })
        .collect();
    parts.join(" -> ")
}

/// Gains `K_theta` (n x n SPD), `K_h` (s x s SPD), and `k_g` (positive).
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    k_theta: Matrix,
    /// Present when `K_theta` is diagonal, to skip dense products.
    k_theta_diag: Option<Vector>,
    k_h: Matrix,
    k_g: Vector,
}

const GAIN_SYMMETRY_TOL: f64 = 1e-12;

impl GainSet {
    pub fn new(k_theta: Matrix, k_h: Matrix, k_g: Vector) -> Result<Self, DynamicsError> {
        for (name, k) in [("K_theta", &k_theta), ("K_h", &k_h)] {
            if k.nrows() == 0 {
                continue;
            }
            linalg::check_spd(k, GAIN_SYMMETRY_TOL).map_err(|e| DynamicsError::InvalidGains(format!("{name}: {e}")))?;
        }
        if let Some(i) = k_g.iter().position(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(DynamicsError::InvalidGains(format!(
                "k_g[{}] = {} is not positive",
                i + 1,
                k_g[i]
            )));
        }
        let is_diagonal = (0..k_theta.nrows()).all(|i| (0..k_theta.ncols()).all(|j| i == j || k_theta[(i, j)] == 0.0));
        let k_theta_diag = is_diagonal.then(|| k_theta.diagonal());
        Ok(GainSet {
            k_theta,
            k_theta_diag,
            k_h,
            k_g,
        })
    }

    /// `K_theta = a I`, `K_h = b I`, `k_g = c 1`.
    pub fn scalar(dims: Dims, k_theta: f64, k_h: f64, k_g: f64) -> Result<Self, DynamicsError> {
        GainSet::new(
            Matrix::identity(dims.n, dims.n) * k_theta,
            Matrix::identity(dims.s, dims.s) * k_h,
            Vector::from_element(dims.r, k_g),
        )
    }

    pub fn k_theta(&self) -> &Matrix {
        &self.k_theta
    }

    pub fn k_h(&self) -> &Matrix {
        &self.k_h
    }

    pub fn k_g(&self) -> &Vector {
        &self.k_g
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.k_theta.nrows(),
            r: self.k_g.len(),
            s: self.k_h.nrows(),
        }
    }

    /// `K_theta v`
    pub fn apply_k_theta(&self, v: &Vector) -> Vector {
        match &self.k_theta_diag {
            Some(d) => v.component_mul(d),
            None => &self.k_theta * v,
        }
    }

    /// `A K_theta`
    fn right_apply_k_theta(&self, a: &Matrix) -> Matrix {
        match &self.k_theta_diag {
            Some(d) => {
                let mut out = a.clone();
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    col *= d[j];
                }
                out
            }
            None => a * &self.k_theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DynamicsConfig {
    /// Rows with `g_i >= -eps_act` count as activated.
    pub eps_act: f64,
    /// Allowed excess in `dg_i/dtau + k_i g_i` for rows outside the working set.
    pub tol_dyn: f64,
    /// Working rows with a multiplier below `-drop_tol` are dropped.
    pub drop_tol: f64,
    /// Multiplier on the default SVD rank tolerance.
    pub rank_multiplier: f64,
    /// A warning is recorded when `|pi|` exceeds this.
    pub pi_bound: f64,
    /// A lower-priority group is enabled once every higher-priority row has `g_i <= pts_tol`.
    pub pts_tol: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            eps_act: 1e-8,
            tol_dyn: 1e-8,
            drop_tol: 1e-12,
            rank_multiplier: 1.0,
            pi_bound: 1e6,
            pts_tol: 1e-6,
        }
    }
}

/// Activated rows and the working subset treated as equalities.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize)]
pub struct WorkingSet {
    pub activated: Vec<usize>,
    pub working: Vec<usize>,
    pub pts_active_groups: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhsResult {
    pub dtheta: Vector,
    pub pi_e: Vector,
    /// Zero outside the working set.
    pub pi_i: Vector,
    pub working_set: WorkingSet,
    /// Numerical rank of the stacked Gram matrix.
    pub stacked_jacobian_rank: usize,
    /// Optimum of the feasibility LP, when it ran.
    pub lp_gamma: Option<f64>,
    /// Working-set modifications made while resolving.
    pub iterations: usize,
}

impl RhsResult {
    /// `|(pi_e, pi_i)|_2`
    pub fn multiplier_norm(&self) -> f64 {
        (self.pi_e.norm_squared() + self.pi_i.norm_squared()).sqrt()
    }
}

/// Seeds the working set: activated rows are the enabled rows with
/// `g_i >= -eps_act`; the candidate working set is `warm` restricted to them.
pub fn classify(eval: &EvalPoint, eps_act: f64, pts: &PtsState, warm: &[usize]) -> WorkingSet {
    let enabled = pts.enabled_mask();
    let activated: Vec<usize> = (0..eval.g.len())
        .filter(|&i| enabled[i] && eval.g[i] >= -eps_act)
        .collect();
    let mut working: Vec<usize> = warm
        .iter()
        .copied()
        .filter(|i| activated.binary_search(i).is_ok())
        .collect();
    working.sort_unstable();
    working.dedup();
    WorkingSet {
        activated,
        working,
        pts_active_groups: pts.enabled_groups(),
    }
}

/// Multipliers and direction for a fixed working set.
pub(crate) struct Stacked {
    /// `s + |W|` multipliers, equality rows first.
    pub pi: Vector,
    pub dtheta: Vector,
    pub rank: usize,
}

/// Rows of `h_theta` followed by rows `working` of `g_theta`.
pub(crate) fn stacked_jacobian(eval: &EvalPoint, working: &[usize]) -> Matrix {
    let (n, s) = (eval.theta.len(), eval.h.len());
    let mut a = Matrix::zeros(s + working.len(), n);
    a.rows_mut(0, s).copy_from(&eval.h_jac);
    for (k, &i) in working.iter().enumerate() {
        a.row_mut(s + k).copy_from(&eval.g_jac.row(i));
    }
    a
}

/// `[K_h h; k_g g_W]`
pub(crate) fn violation_targets(eval: &EvalPoint, gains: &GainSet, working: &[usize]) -> Vector {
    let s = eval.h.len();
    let mut t = Vector::zeros(s + working.len());
    t.rows_mut(0, s).copy_from(&(gains.k_h() * &eval.h));
    for (k, &i) in working.iter().enumerate() {
        t[s + k] = gains.k_g()[i] * eval.g[i];
    }
    t
}

pub(crate) fn solve_stacked(
    eval: &EvalPoint,
    gains: &GainSet,
    working: &[usize],
    with_targets: bool,
    rank_multiplier: f64,
) -> Result<Stacked, DynamicsError> {
    let targets = with_targets.then(|| violation_targets(eval, gains, working));
    solve_stacked_with(eval, gains, working, targets.as_ref(), rank_multiplier)
}

/// `pi = -(A K A^T)^+ (A K f_theta - t)`, so that `A dtheta = -P t`.
pub(crate) fn solve_stacked_with(
    eval: &EvalPoint,
    gains: &GainSet,
    working: &[usize],
    targets: Option<&Vector>,
    rank_multiplier: f64,
) -> Result<Stacked, DynamicsError> {
    let a = stacked_jacobian(eval, working);
    let ak = gains.right_apply_k_theta(&a);
    let mut gram = &ak * a.transpose();
    gram = (&gram + gram.transpose()) * 0.5;
    let mut b = &ak * &eval.f_grad;
    if let Some(t) = targets {
        b -= t;
    }
    let fac = linalg::psd_factorization(&gram, rank_multiplier)?;
    let pi = -fac.apply_pinv(&b);
    let dtheta = -gains.apply_k_theta(&(&eval.f_grad + a.tr_mul(&pi)));
    Ok(Stacked {
        pi,
        dtheta,
        rank: fac.rank,
    })
}

fn assemble(eval: &EvalPoint, ws: &WorkingSet, st: Stacked, iterations: usize) -> RhsResult {
    let s = eval.h.len();
    let mut pi_i = Vector::zeros(eval.g.len());
    for (k, &i) in ws.working.iter().enumerate() {
        pi_i[i] = st.pi[s + k];
    }
    RhsResult {
        dtheta: st.dtheta,
        pi_e: st.pi.rows(0, s).into_owned(),
        pi_i,
        working_set: ws.clone(),
        stacked_jacobian_rank: st.rank,
        lp_gamma: None,
        iterations,
    }
}

fn check_shapes(eval: &EvalPoint, gains: &GainSet) {
    assert_eq!(eval.dims(), gains.dims(), "gains do not match the problem dimensions");
}

/// Flow for a feasible point: the working rows are held at their current
/// values, with no violation correction.
pub fn rhs_feasible(
    eval: &EvalPoint,
    gains: &GainSet,
    ws: &WorkingSet,
    cfg: &DynamicsConfig,
) -> Result<RhsResult, DynamicsError> {
    check_shapes(eval, gains);
    let st = solve_stacked(eval, gains, &ws.working, false, cfg.rank_multiplier)?;
    Ok(assemble(eval, ws, st, 0))
}

/// Flow from any point: equality violations and working-row violations decay
/// at the rates set by `K_h` and `k_g`.
pub fn rhs_general(
    eval: &EvalPoint,
    gains: &GainSet,
    ws: &WorkingSet,
    cfg: &DynamicsConfig,
) -> Result<RhsResult, DynamicsError> {
    check_shapes(eval, gains);
    let st = solve_stacked(eval, gains, &ws.working, true, cfg.rank_multiplier)?;
    Ok(assemble(eval, ws, st, 0))
}

/// Full direction: classify, resolve the working set from the warm start,
/// and fall back to the feasibility LP plus an exact QP solve if the
/// resolution cycles or leaves a working row unresolved.
pub fn direction(
    eval: &EvalPoint,
    gains: &GainSet,
    pts: &PtsState,
    warm: &[usize],
    cfg: &DynamicsConfig,
) -> Result<RhsResult, DynamicsError> {
    check_shapes(eval, gains);
    let candidate = classify(eval, cfg.eps_act, pts, warm);
    match resolve_working_set(eval, gains, &candidate, cfg) {
        Ok(r) => Ok(r),
        Err(DynamicsError::Cycling { .. } | DynamicsError::Unresolved { .. }) => {
            let lp = feasibility_lp(eval, gains, &candidate.activated, None, cfg)?;
            if lp.gamma > cfg.tol_dyn {
                return Err(DynamicsError::InfeasibleSubproblem { gamma: lp.gamma });
            }
            let mut r = solve_fadop_qp(eval, gains, &candidate, &lp.direction, cfg)?;
            r.lp_gamma = Some(lp.gamma);
            Ok(r)
        }
        Err(e) => Err(e),
    }
}
