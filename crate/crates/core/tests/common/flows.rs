//! Flow scenarios on the built-in problems, shared by the flow properties
//! and the acceptance target.

use nlpflow::dynamics::{GainSet, PtsState};
use nlpflow::integrate::{solve, Method, SolveConfig, Trajectory};
use nlpflow::linalg::Vector;
use nlpflow::monitor::{lyapunov_value, violated_rows};
use nlpflow::problem::{builtin, EvalPoint, NlpProblem};

use super::*;

/// Monotonicity is checked at `rel_tol = abs_tol`, so that the local error
/// is comparable to the `10 abs_tol` slack.
pub const MATCHED_TOL: f64 = 1e-8;
pub const SLACK: f64 = 10.0 * MATCHED_TOL;

pub struct Case {
    pub label: &'static str,
    pub problem: NlpProblem,
    pub gains: GainSet,
    pub method: Method,
    pub t_end: f64,
    pub pts: PtsState,
    pub starts: Vec<Vector>,
}

pub fn v(x: &[f64]) -> Vector {
    Vector::from_row_slice(x)
}

pub fn example1_case(label: &'static str, pts: PtsState, starts: Vec<Vector>) -> Case {
    let problem = builtin("example1", None).unwrap();
    let gains = GainSet::scalar(problem.dims(), 0.1, 0.1, 0.1).unwrap();
    Case {
        label,
        problem,
        gains,
        method: Method::ExplicitRk45,
        t_end: 300.0,
        pts,
        starts,
    }
}

pub fn example2_case(label: &'static str, starts: Vec<Vector>) -> Case {
    let problem = builtin("example2", Some(10)).unwrap();
    let gains = GainSet::scalar(problem.dims(), 0.1, 1.0, 1.0).unwrap();
    Case {
        label,
        problem,
        gains,
        method: Method::Stiff,
        t_end: 100.0,
        pts: PtsState::single(20),
        starts,
    }
}

pub fn quadratic_case(label: &'static str, name: &str, starts: Vec<Vector>) -> Case {
    let problem = builtin(name, None).unwrap();
    let gains = GainSet::scalar(problem.dims(), 1.0, 1.0, 1.0).unwrap();
    Case {
        label,
        problem,
        gains,
        method: Method::ExplicitRk45,
        t_end: 50.0,
        pts: PtsState::single(0),
        starts,
    }
}

pub fn example1_groups() -> PtsState {
    PtsState::new(vec![vec![0, 1, 2], vec![3, 4]], 5).unwrap()
}

pub fn feasible_cases() -> Vec<Case> {
    vec![
        example1_case("example1", PtsState::single(5), sphere_cut_feasible_starts(11, 5)),
        example2_case(
            "example2",
            vec![Vector::from_element(10, 0.8), Vector::from_element(10, 1.3)],
        ),
        quadratic_case("ec-quadratic", "ec-quadratic", vec![v(&[2.0, 0.0]), v(&[-3.0, 5.0])]),
        quadratic_case(
            "unconstrained-quadratic",
            "unconstrained-quadratic",
            vec![v(&[1.0, 2.0]), v(&[-3.0, 4.0])],
        ),
    ]
}

pub fn infeasible_cases() -> Vec<Case> {
    vec![
        example1_case(
            "example1 with priorities",
            example1_groups(),
            uniform_starts(12, 5, 3, -10.0, 10.0),
        ),
        example1_case(
            "example1",
            PtsState::single(5),
            vec![v(&[2.5, 1.0, 1.0]), v(&[1.0, 0.5, 0.5]), v(&[-4.8578, 3.8180, -2.7364])],
        ),
        example2_case("example2", sine_chain_starts(13, 3, 10)),
        quadratic_case("ec-quadratic", "ec-quadratic", vec![v(&[0.0, 0.0]), v(&[5.0, -7.0])]),
    ]
}

pub fn run(case: &Case, start: &Vector, cfg: &SolveConfig) -> Trajectory {
    let tr = solve(&case.problem, &case.gains, start, case.pts.clone(), cfg).unwrap();
    assert!(
        !tr.verdict.is_failure(),
        "{} from {start}: {:?}",
        case.label,
        tr.verdict
    );
    tr
}

pub fn matched(case: &Case) -> SolveConfig {
    let mut cfg = SolveConfig::new(case.method, case.t_end);
    cfg.integrator.rel_tol = MATCHED_TOL;
    cfg.integrator.abs_tol = MATCHED_TOL;
    cfg
}

pub fn is_feasible(e: &EvalPoint) -> bool {
    e.h.amax() <= 1e-12 && e.g.iter().all(|&g| g <= 0.0)
}

/// Largest rise of `V` between accepted steps, skipping steps on which a
/// new row enters `{g >= 0}`: without event location the integrator lands
/// slightly past a constraint surface the continuous flow only touches.
pub fn lyapunov_rise(problem: &NlpProblem, tr: &Trajectory, c1: f64) -> f64 {
    let evals: Vec<EvalPoint> = tr
        .samples
        .iter()
        .filter(|s| s.accepted_step)
        .map(|s| problem.evaluate(&s.theta).unwrap())
        .collect();
    evals
        .windows(2)
        .filter(|w| {
            let before = violated_rows(&w[0]);
            violated_rows(&w[1]).iter().all(|i| before.contains(i))
        })
        .map(|w| lyapunov_value(&w[1], &violated_rows(&w[1]), c1) - lyapunov_value(&w[0], &violated_rows(&w[0]), c1))
        .fold(0.0, f64::max)
}
