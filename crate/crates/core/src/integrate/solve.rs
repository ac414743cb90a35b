//! The outer loop: integrate the flow, snapshot every accepted step, and stop
//! on convergence or at the horizon.

use serde::Serialize;
use thiserror::Error;

use super::{
    integrate_counted, Accepted, ConfigError, IntegrationError, IntegrationStats, IntegratorConfig, Method, OdeSystem,
    StepInfo,
};
use crate::dynamics::{
    direction, feasibility_lp, DynamicsConfig, DynamicsError, GainSet, PtsState, RhsResult, WorkingSet,
};
use crate::linalg::Vector;
use crate::monitor::{decide, kkt_report, lyapunov_value, violated_rows, Decision, KktReport, MonitorConfig};
use crate::problem::{EvalError, EvalPoint, NlpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub integrator: IntegratorConfig,
    pub dynamics: DynamicsConfig,
    pub monitor: MonitorConfig,
    /// Extra snapshots, linearly interpolated in theta, at multiples of this stride.
    pub sample_stride: Option<f64>,
}

impl SolveConfig {
    pub fn new(method: Method, t_end: f64) -> Self {
        SolveConfig {
            integrator: IntegratorConfig::new(method, t_end),
            dynamics: DynamicsConfig::default(),
            monitor: MonitorConfig::default(),
            sample_stride: None,
        }
    }
}

/// State of the flow at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tau: f64,
    pub theta: Vector,
    pub pi_e: Vector,
    pub pi_i: Vector,
    pub objective: f64,
    pub working_set: WorkingSet,
    pub kkt: KktReport,
    pub lyapunov: f64,
    /// False for stride samples taken between accepted steps.
    pub accepted_step: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    /// The feasibility LP at the start point.
    InitialFeasibility { gamma: f64, box_size: f64 },
    /// Lower-priority groups became enforced; `enabled` counts leading groups.
    PtsGroupsEnabled { enabled: usize },
    /// The multiplier norm crossed `pi_bound`.
    MultiplierBound { norm: f64 },
    /// The working set was settled by the feasibility LP and exact QP.
    SubproblemFallback { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub tau: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    StepSizeUnderflow,
    MaxSteps,
    NonFinite,
    Evaluation,
    Dynamics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    HorizonReached,
    /// The last sample holds the last good state.
    Failed {
        kind: FailureKind,
        message: String,
    },
}

impl Verdict {
    pub fn is_failure(&self) -> bool {
        matches!(self, Verdict::Failed { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::HorizonReached => "horizon-reached",
            Verdict::Failed { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub verdict: Verdict,
    pub step_count: usize,
    pub rejected_steps: usize,
    pub rhs_eval_count: usize,
    pub jacobian_evals: usize,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a trajectory always holds the start sample")
    }
}

/// Failures before the first sample exists.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("gains are sized for {gains:?} but the problem has {problem:?}")]
    GainShape {
        gains: crate::problem::Dims,
        problem: crate::problem::Dims,
    },
    #[error("PTS groups cover {got} rows but the problem has {expected} inequality rows")]
    PtsShape { expected: usize, got: usize },
    #[error("cannot evaluate the start point: {0}")]
    Evaluation(#[from] EvalError),
    #[error("cannot form the flow at the start point: {0}")]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Error)]
enum FlowError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

struct Flow<'a> {
    problem: &'a NlpProblem,
    gains: &'a GainSet,
    cfg: &'a SolveConfig,
    pts: PtsState,
    /// Working set of the last accepted step, used to seed every evaluation.
    warm: Vec<usize>,
    samples: Vec<Sample>,
    events: Vec<Event>,
    over_bound: bool,
    last_theta: Vector,
    next_stride: f64,
}

impl Flow<'_> {
    fn state(&self, theta: &Vector) -> Result<(EvalPoint, RhsResult), FlowError> {
        let eval = self.problem.evaluate(theta)?;
        let rhs = direction(&eval, self.gains, &self.pts, &self.warm, &self.cfg.dynamics)?;
        Ok((eval, rhs))
    }

    fn sample(&self, tau: f64, eval: &EvalPoint, rhs: &RhsResult, accepted_step: bool) -> Sample {
        Sample {
            tau,
            theta: eval.theta.clone(),
            pi_e: rhs.pi_e.clone(),
            pi_i: rhs.pi_i.clone(),
            objective: eval.f,
            working_set: rhs.working_set.clone(),
            kkt: kkt_report(eval, rhs),
            lyapunov: lyapunov_value(eval, &violated_rows(eval), self.cfg.monitor.c1),
            accepted_step,
        }
    }

    fn note_events(&mut self, tau: f64, rhs: &RhsResult) {
        if let Some(gamma) = rhs.lp_gamma {
            self.events.push(Event {
                tau,
                kind: EventKind::SubproblemFallback { gamma },
            });
        }
        let norm = rhs.multiplier_norm();
        let over = norm > self.cfg.dynamics.pi_bound;
        if over && !self.over_bound {
            self.events.push(Event {
                tau,
                kind: EventKind::MultiplierBound { norm },
            });
        }
        self.over_bound = over;
    }

    fn enable_groups(&mut self, tau: f64, g: &Vector) {
        let next = self.pts.update(g, self.cfg.dynamics.pts_tol);
        if next.enabled_count() != self.pts.enabled_count() {
            self.events.push(Event {
                tau,
                kind: EventKind::PtsGroupsEnabled {
                    enabled: next.enabled_count(),
                },
            });
        }
        self.pts = next;
    }

    /// Snapshot at an accepted point: update PTS, re-resolve from the warm
    /// set, record, and decide.
    fn accept(&mut self, tau: f64, theta: &Vector) -> Result<(Decision, RhsResult), FlowError> {
        let eval = self.problem.evaluate(theta)?;
        self.enable_groups(tau, &eval.g);
        let rhs = direction(&eval, self.gains, &self.pts, &self.warm, &self.cfg.dynamics)?;
        self.warm = rhs.working_set.working.clone();
        self.note_events(tau, &rhs);
        let sample = self.sample(tau, &eval, &rhs, true);
        let decision = decide(
            &sample.kkt,
            &self.cfg.monitor.tolerances,
            tau,
            self.cfg.integrator.t_end,
        );
        self.samples.push(sample);
        self.last_theta = theta.clone();
        Ok((decision, rhs))
    }

    fn stride_samples(&mut self, t_prev: f64, t: f64, theta: &Vector) -> Result<(), FlowError> {
        let Some(stride) = self.cfg.sample_stride.filter(|s| *s > 0.0) else {
            return Ok(());
        };
        while self.next_stride < t {
            let s = self.next_stride;
            if s > t_prev {
                let w = (s - t_prev) / (t - t_prev);
                let interp = &self.last_theta * (1.0 - w) + theta * w;
                let (eval, rhs) = self.state(&interp)?;
                let sample = self.sample(s, &eval, &rhs, false);
                self.samples.push(sample);
            }
            self.next_stride += stride;
        }
        Ok(())
    }
}

impl OdeSystem for Flow<'_> {
    type Error = FlowError;

    fn rhs(&mut self, _t: f64, y: &Vector) -> Result<Vector, FlowError> {
        Ok(self.state(y)?.1.dtheta)
    }

    fn accepted(&mut self, t: f64, y: &Vector, info: &StepInfo) -> Result<Accepted, FlowError> {
        self.stride_samples(info.t_prev, t, y)?;
        let (decision, rhs) = self.accept(t, y)?;
        if decision == Decision::Converged && !self.cfg.monitor.fixed_horizon {
            return Ok(Accepted::Stop);
        }
        Ok(Accepted::Continue(Some(rhs.dtheta)))
    }
}

/// Integrates the flow from `theta0` under `pts` and reports every accepted
/// state. Failures after the start point end the trajectory with a
/// [`Verdict::Failed`] whose last sample is the last good state.
pub fn solve(
    problem: &NlpProblem,
    gains: &GainSet,
    theta0: &Vector,
    pts: PtsState,
    cfg: &SolveConfig,
) -> Result<Trajectory, SolveError> {
    cfg.integrator.validate()?;
    let dims = problem.dims();
    if gains.dims() != dims {
        return Err(SolveError::GainShape {
            gains: gains.dims(),
            problem: dims,
        });
    }
    let pts_rows: usize = pts.groups().iter().map(Vec::len).sum();
    if pts_rows != dims.r {
        return Err(SolveError::PtsShape {
            expected: dims.r,
            got: pts_rows,
        });
    }

    let mut flow = Flow {
        problem,
        gains,
        cfg,
        pts,
        warm: Vec::new(),
        samples: Vec::new(),
        events: Vec::new(),
        over_bound: false,
        last_theta: theta0.clone(),
        next_stride: cfg.sample_stride.unwrap_or(0.0),
    };

    let eval0 = problem.evaluate(theta0)?;
    flow.enable_groups(0.0, &eval0.g);
    let activated0 = crate::dynamics::classify(&eval0, cfg.dynamics.eps_act, &flow.pts, &[]).activated;
    if let Ok(lp) = feasibility_lp(&eval0, gains, &activated0, None, &cfg.dynamics) {
        flow.events.insert(
            0,
            Event {
                tau: 0.0,
                kind: EventKind::InitialFeasibility {
                    gamma: lp.gamma,
                    box_size: lp.box_size,
                },
            },
        );
    }
    let (decision, _) = flow.accept(0.0, theta0).map_err(|e| match e {
        FlowError::Eval(e) => SolveError::Evaluation(e),
        FlowError::Dynamics(e) => SolveError::Dynamics(e),
    })?;

    let trajectory = |flow: Flow, verdict, stats: IntegrationStats| Trajectory {
        samples: flow.samples,
        verdict,
        step_count: stats.accepted_steps,
        rejected_steps: stats.rejected_steps,
        rhs_eval_count: stats.rhs_evals,
        jacobian_evals: stats.jacobian_evals,
        events: flow.events,
    };

    if decision == Decision::Converged && !cfg.monitor.fixed_horizon {
        return Ok(trajectory(flow, Verdict::Converged, Default::default()));
    }

    let mut stats = IntegrationStats::default();
    let result = integrate_counted(&mut flow, 0.0, theta0, &cfg.integrator, &mut stats);
    let tol = &cfg.monitor.tolerances;
    Ok(match result {
        Ok(_) => {
            let verdict = if flow.samples.last().is_some_and(|s| s.kkt.within(tol)) {
                Verdict::Converged
            } else {
                Verdict::HorizonReached
            };
            trajectory(flow, verdict, stats)
        }
        Err(err) => {
            let (kind, message) = match err {
                IntegrationError::StepSizeUnderflow { .. } => (FailureKind::StepSizeUnderflow, err.to_string()),
                IntegrationError::MaxSteps(_) => (FailureKind::MaxSteps, err.to_string()),
                IntegrationError::NonFinite { .. } => (FailureKind::NonFinite, err.to_string()),
                IntegrationError::System(FlowError::Eval(e)) => (FailureKind::Evaluation, e.to_string()),
                IntegrationError::System(FlowError::Dynamics(e)) => (FailureKind::Dynamics, e.to_string()),
            };
            let tau = flow.samples.last().map_or(0.0, |s| s.tau);
            let message = format!("{message} (last good state at tau = {tau})");
            trajectory(flow, Verdict::Failed { kind, message }, stats)
        }
    })
}
