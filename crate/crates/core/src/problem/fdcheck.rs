//! Central finite differences as an independent check on supplied derivatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Component, EvalError, EvalPoint, NlpProblem};
use crate::linalg::Vector;

pub const VALIDATION_REL_TOL: f64 = 1e-5;
/// Points checked when a problem is registered or parsed.
pub const REGISTRATION_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
#[error(
    "{component} derivative [{row}, {col}] is {analytic:e} but finite differences give \
     {finite_difference:e} at theta = {point:?}"
)]
pub struct DerivativeMismatch {
    pub component: Component,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub point: Vec<f64>,
}

pub fn central_difference_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Values at `theta` with every derivative replaced by a central difference.
pub fn finite_difference_eval(problem: &NlpProblem, theta: &Vector) -> Result<EvalPoint, EvalError> {
    let mut out = problem.evaluate(theta)?;
    let mut x = theta.clone();
    for j in 0..theta.len() {
        let step = central_difference_step(theta[j]);
        x[j] = theta[j] + step;
        let plus = problem.evaluate(&x)?;
        x[j] = theta[j] - step;
        let minus = problem.evaluate(&x)?;
        x[j] = theta[j];
        // the realized step, after rounding of theta +- step
        let width = (theta[j] + step) - (theta[j] - step);
        out.f_grad[j] = (plus.f - minus.f) / width;
        for i in 0..out.g.len() {
            out.g_jac[(i, j)] = (plus.g[i] - minus.g[i]) / width;
        }
        for i in 0..out.h.len() {
            out.h_jac[(i, j)] = (plus.h[i] - minus.h[i]) / width;
        }
    }
    Ok(out)
}

/// Seeded points spread around the known optimum, or the origin.
pub fn sample_points(problem: &NlpProblem, count: usize, seed: u64) -> Vec<Vector> {
    let n = problem.dims().n;
    let center = problem.known_optimum().cloned().unwrap_or_else(|| Vector::zeros(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Vector::from_fn(n, |i, _| center[i] + rng.random_range(-1.0..1.0)))
        .collect()
}

fn compare(
    component: Component,
    analytic: &[f64],
    fd: &[f64],
    rows: usize,
    theta: &Vector,
) -> Result<(), DerivativeMismatch> {
    // column-major storage
    for (k, (a, b)) in analytic.iter().zip(fd).enumerate() {
        if relative_error(*a, *b) > VALIDATION_REL_TOL {
            return Err(DerivativeMismatch {
                component,
                row: k % rows.max(1),
                col: k / rows.max(1),
                analytic: *a,
                finite_difference: *b,
                point: theta.iter().copied().collect(),
            });
        }
    }
    Ok(())
}

/// Checks every supplied derivative against central differences.
///
/// Points where the problem cannot be evaluated (outside the domain of a
/// `log`, say) are skipped.
pub fn validate_derivatives(problem: &NlpProblem, points: &[Vector]) -> Result<(), DerivativeMismatch> {
    for theta in points {
        let (Ok(exact), Ok(fd)) = (problem.evaluate(theta), finite_difference_eval(problem, theta)) else {
            continue;
        };
        compare(
            Component::Gradient,
            exact.f_grad.as_slice(),
            fd.f_grad.as_slice(),
            1,
            theta,
        )?;
        compare(
            Component::InequalityJacobian,
            exact.g_jac.as_slice(),
            fd.g_jac.as_slice(),
            exact.g_jac.nrows(),
            theta,
        )?;
        compare(
            Component::EqualityJacobian,
            exact.h_jac.as_slice(),
            fd.h_jac.as_slice(),
            exact.h_jac.nrows(),
            theta,
        )?;
    }
    Ok(())
}
