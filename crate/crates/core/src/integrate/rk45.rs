use super::{
    error_norm, eval_rhs, step_factor, Attempt, IntegrationError, IntegrationStats, IntegratorConfig, OdeSystem,
    Stepper,
};
use crate::linalg::Vector;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Dormand-Prince 5(4) with local extrapolation and first-same-as-last.
#[derive(Debug, Default)]
pub struct Rk45;

impl Stepper for Rk45 {
    fn name(&self) -> &'static str {
        "rk45"
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
        let mut k: Vec<Vector> = Vec::with_capacity(7);
        k.push(f0.clone());
        for stage in 1..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    yi.axpy(h * a, kj, 1.0);
                }
            }
            k.push(eval_rhs(sys, t + C[stage] * h, &yi, stats)?);
        }
        // the last row of A holds the fifth-order weights
        let mut y_new = y.clone();
        for (j, kj) in k.iter().take(6).enumerate() {
            y_new.axpy(h * A[6][j], kj, 1.0);
        }
        let mut err = Vector::zeros(y.len());
        for (j, kj) in k.iter().enumerate() {
            err.axpy(h * E[j], kj, 1.0);
        }
        let e = error_norm(&err, y, &y_new, cfg);
        let factor = step_factor(e, 5.0);
        if e <= 1.0 {
            let last = k.pop();
            Ok(Attempt::Accepted {
                y_new,
                error: e,
                h_next: (h * factor).min(cfg.h_max),
                last_stage: last,
            })
        } else {
            Ok(Attempt::Rejected {
                h_next: h * factor.min(1.0),
            })
        }
    }
}
