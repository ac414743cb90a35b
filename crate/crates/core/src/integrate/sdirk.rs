use super::{
    error_norm, eval_rhs, step_factor, Attempt, IntegrationError, IntegrationStats, IntegratorConfig, OdeSystem,
    Stepper,
};
use crate::linalg::{Matrix, Vector};

const GAMMA: f64 = 0.25;
const STAGES: usize = 5;
const C: [f64; STAGES] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
/// Third-order embedded weights; the fourth-order weights are the last row of `A`.
const B_HAT: [f64; STAGES] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

const NEWTON_MAX_ITER: usize = 10;
const NEWTON_TOL: f64 = 1e-3;
const NEWTON_MAX_RATE: f64 = 0.9;
/// Step reduction after a Newton failure with a fresh Jacobian.
const NEWTON_SHRINK: f64 = 0.5;

/// L-stable SDIRK 4(3). The finite-difference Jacobian is kept across steps
/// and refreshed only when the simplified Newton iteration fails to
/// converge with a stale one.
#[derive(Debug, Default)]
pub struct Sdirk4 {
    jacobian: Option<Matrix>,
    /// The stored Jacobian was taken at the current step's start point.
    fresh: bool,
}

enum Newton {
    Converged(Vec<Vector>),
    Failed,
}

impl Sdirk4 {
    fn jacobian<S: OdeSystem>(
        sys: &mut S,
        t: f64,
        y: &Vector,
        f0: &Vector,
        stats: &mut IntegrationStats,
    ) -> Result<Matrix, IntegrationError<S::Error>> {
        let n = y.len();
        let mut jac = Matrix::zeros(n, n);
        let mut yp = y.clone();
        for j in 0..n {
            let delta = f64::EPSILON.sqrt() * y[j].abs().max(1.0);
            yp[j] = y[j] + delta;
            let width = yp[j] - y[j];
            let fj = eval_rhs(sys, t, &yp, stats)?;
            jac.set_column(j, &((fj - f0) / width));
            yp[j] = y[j];
        }
        stats.jacobian_evals += 1;
        Ok(jac)
    }

    #[allow(clippy::too_many_arguments)]
    fn stages<S: OdeSystem>(
        sys: &mut S,
        lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        t: f64,
        y: &Vector,
        f0: &Vector,
        h: f64,
        cfg: &IntegratorConfig,
        stats: &mut IntegrationStats,
    ) -> Result<Newton, IntegrationError<S::Error>> {
        let hg = h * GAMMA;
        let weights = y.map(|v| cfg.abs_tol + cfg.rel_tol * v.abs());
        let wnorm = |d: &Vector| {
            d.iter()
                .zip(weights.iter())
                .map(|(a, w)| (a / w).abs())
                .fold(0.0, f64::max)
        };

        let mut k: Vec<Vector> = Vec::with_capacity(STAGES);
        for i in 0..STAGES {
            let mut s = y.clone();
            for (j, kj) in k.iter().enumerate() {
                s.axpy(h * A[i][j], kj, 1.0);
            }
            let prev = k.last().unwrap_or(f0);
            let mut z = &s + prev * hg;
            let mut last_norm = f64::INFINITY;
            let mut converged = false;
            for it in 0..NEWTON_MAX_ITER {
                let f = match eval_rhs(sys, t + C[i] * h, &z, stats) {
                    Ok(f) => f,
                    Err(IntegrationError::NonFinite { .. }) => return Ok(Newton::Failed),
                    Err(e) => return Err(e),
                };
                let residual = &z - &s - f * hg;
                let Some(delta) = lu.solve(&(-residual)) else {
                    return Ok(Newton::Failed);
                };
                z += &delta;
                let norm = wnorm(&delta);
                if !norm.is_finite() {
                    return Ok(Newton::Failed);
                }
                if norm <= NEWTON_TOL {
                    converged = true;
                    break;
                }
                if it > 0 {
                    let rate = norm / last_norm;
                    if rate >= NEWTON_MAX_RATE {
                        return Ok(Newton::Failed);
                    }
                    if rate / (1.0 - rate) * norm <= NEWTON_TOL {
                        converged = true;
                        break;
                    }
                }
                last_norm = norm;
            }
            if !converged {
                return Ok(Newton::Failed);
            }
            k.push((z - s) / hg);
        }
        Ok(Newton::Converged(k))
    }
}

impl Stepper for Sdirk4 {
    fn name(&self) -> &'static str {
        "stiff"
    }

    fn attempt<S: OdeSystem>(
        &mut self,
        sys: &mut S,
        t: f64,
        y: &Vector,
        f0: &Vector,
        h: f64,
        cfg: &IntegratorConfig,
        stats: &mut IntegrationStats,
    ) -> Result<Attempt, IntegrationError<S::Error>> {
        let n = y.len();
        loop {
            if self.jacobian.is_none() {
                self.jacobian = Some(Self::jacobian(sys, t, y, f0, stats)?);
                self.fresh = true;
            }
            let jac = self.jacobian.as_ref().expect("set above");
            let m = Matrix::identity(n, n) - jac * (h * GAMMA);
            let lu = m.lu();
            stats.factorizations += 1;

            let k = match Self::stages(sys, &lu, t, y, f0, h, cfg, stats)? {
                Newton::Converged(k) => k,
                Newton::Failed if !self.fresh => {
                    self.jacobian = None;
                    continue;
                }
                Newton::Failed => {
                    return Ok(Attempt::Rejected {
                        h_next: h * NEWTON_SHRINK,
                    })
                }
            };

            let mut y_new = y.clone();
            let mut err = Vector::zeros(n);
            for (j, kj) in k.iter().enumerate() {
                y_new.axpy(h * A[STAGES - 1][j], kj, 1.0);
                err.axpy(h * (A[STAGES - 1][j] - B_HAT[j]), kj, 1.0);
            }
            // damp the stiff components of the estimate
            let err = lu.solve(&err).unwrap_or(err);
            let e = error_norm(&err, y, &y_new, cfg);
            let factor = step_factor(e, 4.0);
            return Ok(if e <= 1.0 {
                self.fresh = false;
                Attempt::Accepted {
                    y_new,
                    error: e,
                    h_next: (h * factor).min(cfg.h_max),
                    last_stage: None,
                }
            } else {
                Attempt::Rejected {
                    h_next: h * factor.min(1.0),
                }
            });
        }
    }
}
