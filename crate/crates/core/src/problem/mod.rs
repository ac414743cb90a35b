//! Nonlinear programs of the form
//!
//! ```text
//! minimize f(theta)  subject to  g(theta) <= 0,  h(theta) = 0
//! ```
//!
//! with `theta` in R^n, `g` in R^r and `h` in R^s. A problem supplies its
//! values and first derivatives in one pass through [`NlpProblem::evaluate`].
//! Problems come from the built-in registry ([`builtin`]), from the text
//! format ([`parse_problem`]), or from a user implementation of
//! [`ProblemFunctions`].

mod builtin;
mod dual;
mod expr;
mod fdcheck;
mod parse;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{Matrix, Vector};

pub use builtin::{builtin, builtin_catalog, BuiltinInfo, BUILTIN_NAMES};
pub use dual::DualNumber;
pub use expr::{Expr, ExprProblem, Function};
pub use fdcheck::{
    central_difference_step, finite_difference_eval, relative_error, sample_points, validate_derivatives,
    DerivativeMismatch, REGISTRATION_POINTS, VALIDATION_REL_TOL,
};
pub use parse::{parse_expression, parse_problem, parse_problem_text, ParseError, ParseErrorKind};

/// Problem dimensions: parameters, inequality rows, equality rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Dims {
    pub n: usize,
    pub r: usize,
    pub s: usize,
}

/// Values and first derivatives of a problem at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub theta: Vector,
    pub f: f64,
    pub f_grad: Vector,
    pub g: Vector,
    /// `r x n`
    pub g_jac: Matrix,
    pub h: Vector,
    /// `s x n`
    pub h_jac: Matrix,
}

impl EvalPoint {
    pub fn zeros(dims: Dims) -> Self {
        EvalPoint {
            theta: Vector::zeros(dims.n),
            f: 0.0,
            f_grad: Vector::zeros(dims.n),
            g: Vector::zeros(dims.r),
            g_jac: Matrix::zeros(dims.r, dims.n),
            h: Vector::zeros(dims.s),
            h_jac: Matrix::zeros(dims.s, dims.n),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.theta.len(),
            r: self.g.len(),
            s: self.h.len(),
        }
    }
}

/// Which part of an [`EvalPoint`] a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Objective,
    Gradient,
    Inequality,
    InequalityJacobian,
    Equality,
    EqualityJacobian,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Component::Objective => "objective",
            Component::Gradient => "objective gradient",
            Component::Inequality => "inequality",
            Component::InequalityJacobian => "inequality jacobian",
            Component::Equality => "equality",
            Component::EqualityJacobian => "equality jacobian",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("theta has length {got}, problem expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("theta[{index}] is not finite")]
    NonFiniteInput { index: usize },
    #[error("{component} value at index {index} is not finite")]
    NonFinite { component: Component, index: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown built-in problem `{0}`")]
    UnknownProblem(String),
    #[error("invalid size {size} for `{name}`: {reason}")]
    InvalidSize {
        name: String,
        size: usize,
        reason: &'static str,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    DerivativeMismatch(#[from] DerivativeMismatch),
}

/// The user-facing evaluation hook: writes all values and first
/// derivatives at `theta` into `out` (already shaped for the problem).
///
/// Implementations must be deterministic; the flow relies on repeated
/// evaluations at the same point being identical.
pub trait ProblemFunctions: Send + Sync + fmt::Debug {
    fn dims(&self) -> Dims;
    fn evaluate_into(&self, theta: &Vector, out: &mut EvalPoint);
}

/// An immutable problem: functions plus metadata.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    name: String,
    dims: Dims,
    functions: Arc<dyn ProblemFunctions>,
    expression: Option<Arc<ExprProblem>>,
    known_optimum: Option<Vector>,
}

impl NlpProblem {
    pub fn new(name: impl Into<String>, functions: Arc<dyn ProblemFunctions>) -> Self {
        let dims = functions.dims();
        NlpProblem {
            name: name.into(),
            dims,
            functions,
            expression: None,
            known_optimum: None,
        }
    }

    pub fn from_expressions(name: impl Into<String>, expr: ExprProblem) -> Self {
        let expr = Arc::new(expr);
        let mut problem = NlpProblem::new(name, expr.clone());
        problem.expression = Some(expr);
        problem
    }

    /// Attaches a reference solution. Used by tests and reports only.
    pub fn with_known_optimum(mut self, theta: Vector) -> Self {
        assert_eq!(theta.len(), self.dims.n, "known optimum has the wrong length");
        self.known_optimum = Some(theta);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn known_optimum(&self) -> Option<&Vector> {
        self.known_optimum.as_ref()
    }

    /// The expression form, for problems built from text.
    pub fn expression(&self) -> Option<&ExprProblem> {
        self.expression.as_deref()
    }

    /// Evaluates everything at `theta`, rejecting non-finite inputs or outputs.
    pub fn evaluate(&self, theta: &Vector) -> Result<EvalPoint, EvalError> {
        if theta.len() != self.dims.n {
            return Err(EvalError::DimensionMismatch {
                expected: self.dims.n,
                got: theta.len(),
            });
        }
        if let Some(index) = theta.iter().position(|x| !x.is_finite()) {
            return Err(EvalError::NonFiniteInput { index });
        }
        let mut out = EvalPoint::zeros(self.dims);
        out.theta.copy_from(theta);
        self.functions.evaluate_into(theta, &mut out);
        check_finite(&out)?;
        Ok(out)
    }
}

fn first_non_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<usize> {
    values.into_iter().position(|x| !x.is_finite())
}

/// Jacobian indices are reported as row indices.
fn check_finite(p: &EvalPoint) -> Result<(), EvalError> {
    let fail = |component, index| Err(EvalError::NonFinite { component, index });
    if !p.f.is_finite() {
        return fail(Component::Objective, 0);
    }
    if let Some(i) = first_non_finite(p.f_grad.iter()) {
        return fail(Component::Gradient, i);
    }
    if let Some(i) = first_non_finite(p.g.iter()) {
        return fail(Component::Inequality, i);
    }
    if let Some(i) = (0..p.g_jac.nrows()).find(|&i| p.g_jac.row(i).iter().any(|x| !x.is_finite())) {
        return fail(Component::InequalityJacobian, i);
    }
    if let Some(i) = first_non_finite(p.h.iter()) {
        return fail(Component::Equality, i);
    }
    if let Some(i) = (0..p.h_jac.nrows()).find(|&i| p.h_jac.row(i).iter().any(|x| !x.is_finite())) {
        return fail(Component::EqualityJacobian, i);
    }
    Ok(())
}
