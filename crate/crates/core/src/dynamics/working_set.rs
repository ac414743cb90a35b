//! Working-set resolution for the direction subproblem
//!
//! ```text
//! minimize   0.5 d^T K_theta^{-1} d + f_theta^T d
//! subject to h_theta d = -K_h h,   (g_i)_theta^T d <= -k_i g_i  for activated i
//! ```
//!
//! whose solution is `d = -K_theta (f_theta + hbar^T pi)` for the right
//! working set. The problem is a strictly convex QP, so that working set is
//! unique up to degeneracy.

use super::{
    assemble, solve_stacked, solve_stacked_with, stacked_jacobian, DynamicsConfig, DynamicsError, GainSet, RhsResult,
    WorkingSet,
};
use crate::linalg::Vector;
use crate::problem::EvalPoint;

/// `dg_i/dtau + k_i g_i` for row `i` under `dtheta`.
fn dynamics_excess(eval: &EvalPoint, gains: &GainSet, i: usize, dtheta: &Vector) -> f64 {
    eval.g_jac.row(i).dot(&dtheta.transpose()) + gains.k_g()[i] * eval.g[i]
}

/// Working rows must hold exactly and the equality rows must reach their
/// projected targets. A linearly dependent working set only meets both in
/// the least-squares sense.
fn check_held(
    eval: &EvalPoint,
    gains: &GainSet,
    working: &[usize],
    dtheta: &Vector,
    cfg: &DynamicsConfig,
) -> Result<(), DynamicsError> {
    let d_norm = dtheta.norm();
    let tol = |row_norm: f64, target: f64| cfg.tol_dyn * (1.0 + row_norm * d_norm + target.abs());
    let mut worst: Option<(usize, f64)> = None;
    for &i in working {
        let residual = dynamics_excess(eval, gains, i, dtheta);
        let target = gains.k_g()[i] * eval.g[i];
        if residual.abs() > tol(eval.g_jac.row(i).norm(), target)
            && worst.map_or(true, |(_, w)| residual.abs() > w.abs())
        {
            worst = Some((i, residual));
        }
    }
    if let Some((index, residual)) = worst {
        return Err(DynamicsError::Unresolved { index, residual });
    }
    if working.is_empty() || eval.h.is_empty() {
        return Ok(());
    }
    let kh = gains.k_h() * &eval.h;
    let ec = &eval.h_jac * dtheta + &kh;
    let consistent = (0..ec.len()).all(|j| ec[j].abs() <= tol(eval.h_jac.row(j).norm(), kh[j]));
    if consistent {
        return Ok(());
    }
    // h itself may lie outside the range of h_theta; compare with the projected targets.
    let projector = crate::linalg::svd_with_tolerance(&eval.h_jac, cfg.rank_multiplier)?.column_projector();
    let ec = &eval.h_jac * dtheta + projector * &kh;
    match (0..ec.len()).find(|&j| ec[j].abs() > tol(eval.h_jac.row(j).norm(), kh[j])) {
        Some(j) => Err(DynamicsError::Unresolved {
            index: *working.last().unwrap(),
            residual: ec[j],
        }),
        None => Ok(()),
    }
}

/// Iterates from `candidate.working`: drop the most negative working
/// multiplier, otherwise add the activated row whose dynamics are violated
/// the most, until neither applies. Ties go to the smallest index.
pub fn resolve_working_set(
    eval: &EvalPoint,
    gains: &GainSet,
    candidate: &WorkingSet,
    cfg: &DynamicsConfig,
) -> Result<RhsResult, DynamicsError> {
    let s = eval.h.len();
    let max_changes = 2 * eval.g.len();
    let mut ws = candidate.clone();
    let mut history = vec![ws.working.clone()];
    let mut changes = 0;
    loop {
        let st = solve_stacked(eval, gains, &ws.working, true, cfg.rank_multiplier)?;

        let mut drop: Option<(usize, f64)> = None;
        for k in 0..ws.working.len() {
            let p = st.pi[s + k];
            if p < -cfg.drop_tol && drop.map_or(true, |(_, best)| p < best) {
                drop = Some((k, p));
            }
        }

        let mut add: Option<(usize, f64)> = None;
        if drop.is_none() {
            for &i in &ws.activated {
                if ws.working.binary_search(&i).is_ok() {
                    continue;
                }
                let excess = dynamics_excess(eval, gains, i, &st.dtheta);
                if excess > cfg.tol_dyn && add.map_or(true, |(_, best)| excess > best) {
                    add = Some((i, excess));
                }
            }
        }

        match (drop, add) {
            (Some((k, _)), _) => {
                ws.working.remove(k);
            }
            (None, Some((i, _))) => {
                let at = ws.working.binary_search(&i).unwrap_err();
                ws.working.insert(at, i);
            }
            (None, None) => {
                check_held(eval, gains, &ws.working, &st.dtheta, cfg)?;
                return Ok(assemble(eval, &ws, st, changes));
            }
        }

        changes += 1;
        let repeated = history.contains(&ws.working);
        history.push(ws.working.clone());
        if repeated || changes > max_changes {
            return Err(DynamicsError::Cycling { sets: history });
        }
    }
}

const QP_STEP_TOL: f64 = 1e-9;

/// Primal active-set solve of the direction QP from a feasible `d0`
/// (typically the feasibility LP's point). Used when
/// [`resolve_working_set`] cycles.
pub fn solve_fadop_qp(
    eval: &EvalPoint,
    gains: &GainSet,
    candidate: &WorkingSet,
    d0: &Vector,
    cfg: &DynamicsConfig,
) -> Result<RhsResult, DynamicsError> {
    let s = eval.h.len();
    let rows = &candidate.activated;
    let limit = 10 * (rows.len() + eval.theta.len() + 10);
    let mut d = d0.clone();
    let mut working: Vec<usize> = Vec::new();
    for iteration in 0..limit {
        // Hold the working rows at their current values: targets t = -A d.
        let a = stacked_jacobian(eval, &working);
        let hold = -(&a * &d);
        let st = solve_stacked_with(eval, gains, &working, Some(&hold), cfg.rank_multiplier)?;
        let step = &st.dtheta - &d;
        // Rounding in K (f + A^T pi) grows with the multipliers.
        let scale = d
            .amax()
            .max(gains.apply_k_theta(&eval.f_grad).amax())
            .max(gains.apply_k_theta(&a.tr_mul(&st.pi)).amax())
            .max(1.0);
        if step.amax() <= QP_STEP_TOL * scale {
            let mut drop: Option<(usize, f64)> = None;
            for k in 0..working.len() {
                let p = st.pi[s + k];
                if p < -cfg.drop_tol && drop.map_or(true, |(_, best)| p < best) {
                    drop = Some((k, p));
                }
            }
            match drop {
                Some((k, _)) => {
                    working.remove(k);
                    continue;
                }
                None => {
                    // Recompute with the true targets so multipliers match the flow formula.
                    let final_ws = WorkingSet {
                        working,
                        ..candidate.clone()
                    };
                    let st = solve_stacked(eval, gains, &final_ws.working, true, cfg.rank_multiplier)?;
                    return Ok(assemble(eval, &final_ws, st, iteration));
                }
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in rows {
            if working.binary_search(&i).is_ok() {
                continue;
            }
            let a_step = eval.g_jac.row(i).dot(&step.transpose());
            if a_step <= 1e-14 {
                continue;
            }
            let slack = -gains.k_g()[i] * eval.g[i] - eval.g_jac.row(i).dot(&d.transpose());
            let ratio = (slack.max(0.0)) / a_step;
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(i);
            }
        }
        d += step * alpha;
        if let Some(i) = blocking {
            let at = working.binary_search(&i).unwrap_err();
            working.insert(at, i);
        }
    }
    Err(DynamicsError::QpNoConvergence { iterations: limit })
}
