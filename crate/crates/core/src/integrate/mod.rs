//! Adaptive integration in virtual time.
//!
//! Two steppers share one driver: the explicit Dormand-Prince 5(4) pair and
//! a stiffly accurate, L-stable five-stage SDIRK of order 4 with an embedded
//! order-3 estimate. Both accept a step when the normalized error
//! `max_i |e_i| / (atol + rtol max(|y_i|, |y_new_i|))` is at most one.

mod rk45;
mod sdirk;
mod solve;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::Vector;

pub use rk45::Rk45;
pub use sdirk::Sdirk4;
pub use solve::{solve, Event, EventKind, FailureKind, Sample, SolveConfig, SolveError, Trajectory, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Explicit Dormand-Prince 5(4).
    ExplicitRk45,
    /// Implicit SDIRK 4(3) with a finite-difference Jacobian.
    Stiff,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ExplicitRk45 => "rk45",
            Method::Stiff => "stiff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl IntegratorConfig {
    /// Defaults for a horizon: `h_init = 1e-3 t_end`, `h_max = t_end / 10`.
    pub fn new(method: Method, t_end: f64) -> Self {
        IntegratorConfig {
            method,
            rel_tol: 1e-3,
            abs_tol: 1e-6,
            t_end,
            h_init: 1e-3 * t_end,
            h_min: 1e-12,
            h_max: t_end / 10.0,
            max_steps: 200_000,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("t_end", self.t_end)?;
        positive("h_min", self.h_min)?;
        if !(self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(ConfigError(format!(
                "need h_min <= h_init <= h_max, got {} / {} / {}",
                self.h_min, self.h_init, self.h_max
            )));
        }
        if self.max_steps == 0 {
            return Err(ConfigError("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid integrator configuration: {0}")]
pub struct ConfigError(pub String);

/// What the driver should do after an accepted step.
#[derive(Debug, Clone, PartialEq)]
pub enum Accepted {
    /// Keep going. A supplied derivative at the new point replaces the
    /// stepper's own first stage for the next step.
    Continue(Option<Vector>),
    Stop,
}

/// A right-hand side `y' = f(t, y)` with a hook for accepted steps.
pub trait OdeSystem {
    type Error;

    fn rhs(&mut self, t: f64, y: &Vector) -> Result<Vector, Self::Error>;

    fn accepted(&mut self, _t: f64, _y: &Vector, _info: &StepInfo) -> Result<Accepted, Self::Error> {
        Ok(Accepted::Continue(None))
    }
}

/// Adapts a closure into an [`OdeSystem`] that never fails.
pub struct FnSystem<F>(pub F);

impl<F: FnMut(f64, &Vector) -> Vector> OdeSystem for FnSystem<F> {
    type Error = std::convert::Infallible;
    fn rhs(&mut self, t: f64, y: &Vector) -> Result<Vector, Self::Error> {
        Ok((self.0)(t, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepInfo {
    /// Start of the accepted step.
    pub t_prev: f64,
    pub h: f64,
    /// Normalized error estimate of the accepted step, at most one.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError<E> {
    #[error("step size fell below h_min = {h_min:e} at t = {t} with the {method} method{}", hint(.method))]
    StepSizeUnderflow { t: f64, h_min: f64, method: &'static str },
    #[error("maximum number of steps ({0}) reached")]
    MaxSteps(usize),
    #[error("right-hand side produced a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("{0}")]
    System(E),
}

fn hint(method: &str) -> &'static str {
    if method == "rk45" {
        " (the flow may be stiff; try the stiff method)"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IntegrationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
    pub factorizations: usize,
    /// Largest normalized error among accepted steps.
    pub max_accepted_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOutcome {
    pub t: f64,
    pub y: Vector,
    pub stats: IntegrationStats,
    /// True when the system asked to stop before `t_end`.
    pub stopped: bool,
}

/// Weighted max-norm used by both steppers.
pub(crate) fn error_norm(err: &Vector, y: &Vector, y_new: &Vector, cfg: &IntegratorConfig) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..err.len() {
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        worst = worst.max(err[i].abs() / scale);
    }
    worst
}

/// Step-size factor `safety * err^(-1/order)` clamped to `[0.2, 5]`.
pub(crate) fn step_factor(err: f64, order: f64) -> f64 {
    if err == 0.0 {
        return 5.0;
    }
    if !err.is_finite() {
        return 0.2;
    }
    (0.9 * err.powf(-1.0 / order)).clamp(0.2, 5.0)
}

/// Outcome of one attempted step.
pub(crate) enum Attempt {
    Accepted {
        y_new: Vector,
        error: f64,
        h_next: f64,
        last_stage: Option<Vector>,
    },
    Rejected {
        h_next: f64,
    },
}

pub(crate) trait Stepper {
    fn name(&self) -> &'static str;
    /// `f0` is `f(t, y)`.
    fn attempt<S: OdeSystem>(
        &mut self,
        sys: &mut S,
        t: f64,
        y: &Vector,
        f0: &Vector,
        h: f64,
        cfg: &IntegratorConfig,
        stats: &mut IntegrationStats,
    ) -> Result<Attempt, IntegrationError<S::Error>>;
}

fn finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub(crate) fn eval_rhs<S: OdeSystem>(
    sys: &mut S,
    t: f64,
    y: &Vector,
    stats: &mut IntegrationStats,
) -> Result<Vector, IntegrationError<S::Error>> {
    stats.rhs_evals += 1;
    let f = sys.rhs(t, y).map_err(IntegrationError::System)?;
    if !finite(&f) {
        return Err(IntegrationError::NonFinite { t });
    }
    Ok(f)
}

/// Integrates from `(t0, y0)` to `cfg.t_end` or until the system stops.
pub fn integrate<S: OdeSystem>(
    sys: &mut S,
    t0: f64,
    y0: &Vector,
    cfg: &IntegratorConfig,
) -> Result<IntegrationOutcome, IntegrationError<S::Error>> {
    let mut stats = IntegrationStats::default();
    let (t, y, stopped) = integrate_counted(sys, t0, y0, cfg, &mut stats)?;
    Ok(IntegrationOutcome { t, y, stats, stopped })
}

/// As [`integrate`], with counters kept in `stats` even when it fails.
pub(crate) fn integrate_counted<S: OdeSystem>(
    sys: &mut S,
    t0: f64,
    y0: &Vector,
    cfg: &IntegratorConfig,
    stats: &mut IntegrationStats,
) -> Result<(f64, Vector, bool), IntegrationError<S::Error>> {
    match cfg.method {
        Method::ExplicitRk45 => drive(&mut Rk45, sys, t0, y0, cfg, stats),
        Method::Stiff => drive(&mut Sdirk4::default(), sys, t0, y0, cfg, stats),
    }
}

const STAGE_FAILURE_SHRINK: f64 = 0.25;

/// Right-hand-side failures at trial stages reject the step; only a failure
/// at an accepted state, or at `h_min`, ends the integration.
fn drive<S: OdeSystem, M: Stepper>(
    stepper: &mut M,
    sys: &mut S,
    t0: f64,
    y0: &Vector,
    cfg: &IntegratorConfig,
    stats: &mut IntegrationStats,
) -> Result<(f64, Vector, bool), IntegrationError<S::Error>> {
    let mut t = t0;
    let mut y = y0.clone();
    let mut h = cfg.h_init;
    let mut f = eval_rhs(sys, t, &y, stats)?;
    // relative slack so the final step lands exactly on t_end
    let end_slack = 1e-12 * cfg.t_end.abs().max(1.0);
    while cfg.t_end - t > end_slack {
        if stats.accepted_steps >= cfg.max_steps {
            return Err(IntegrationError::MaxSteps(cfg.max_steps));
        }
        let remaining = cfg.t_end - t;
        let h_try = h.min(cfg.h_max);
        let (h_step, lands) = if h_try >= remaining - end_slack {
            (remaining, true)
        } else {
            (h_try, false)
        };
        let attempt = match stepper.attempt(sys, t, &y, &f, h_step, cfg, stats) {
            Ok(a) => a,
            // A trial point the right-hand side cannot handle: retry closer to y.
            Err(e @ (IntegrationError::System(_) | IntegrationError::NonFinite { .. })) => {
                stats.rejected_steps += 1;
                if h_step <= cfg.h_min {
                    return Err(e);
                }
                h = (STAGE_FAILURE_SHRINK * h_step).max(cfg.h_min);
                continue;
            }
            Err(e) => return Err(e),
        };
        match attempt {
            Attempt::Accepted {
                y_new,
                error,
                h_next,
                last_stage,
            } => {
                let t_prev = t;
                t = if lands { cfg.t_end } else { t + h_step };
                y = y_new;
                stats.accepted_steps += 1;
                stats.max_accepted_error = stats.max_accepted_error.max(error);
                let info = StepInfo {
                    t_prev,
                    h: h_step,
                    error,
                };
                // keep the pre-landing step size if the last step was shortened
                h = if lands { h_next.max(h) } else { h_next };
                match sys.accepted(t, &y, &info).map_err(IntegrationError::System)? {
                    Accepted::Stop => return Ok((t, y, true)),
                    Accepted::Continue(Some(fresh)) => f = fresh,
                    Accepted::Continue(None) => {
                        f = match last_stage {
                            Some(k) => k,
                            None => eval_rhs(sys, t, &y, stats)?,
                        }
                    }
                }
            }
            Attempt::Rejected { h_next } => {
                stats.rejected_steps += 1;
                if h_step <= cfg.h_min {
                    return Err(IntegrationError::StepSizeUnderflow {
                        t,
                        h_min: cfg.h_min,
                        method: stepper.name(),
                    });
                }
                h = h_next.max(cfg.h_min);
            }
        }
    }
    Ok((t, y, false))
}
