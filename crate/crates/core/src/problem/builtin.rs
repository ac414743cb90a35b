//! Built-in problems with hand-coded derivatives.

use std::f64::consts::PI;
use std::sync::Arc;

use super::fdcheck::{sample_points, validate_derivatives, REGISTRATION_POINTS};
use super::{Dims, EvalPoint, NlpProblem, ProblemError, ProblemFunctions};
use crate::linalg::Vector;

/// Registry order, which is also the listing order.
pub const BUILTIN_NAMES: [&str; 4] = ["example1", "example2", "ec-quadratic", "unconstrained-quadratic"];

#[derive(Debug, Clone, serde::Serialize)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// `None` for fixed-size problems.
    pub default_size: Option<usize>,
    pub dims: Dims,
    pub known_optimum: Vec<f64>,
}

/// Looks up a built-in problem. `size` is accepted only by the resizable ones.
///
/// The returned problem has its derivatives checked against finite
/// differences before it is handed out.
pub fn builtin(name: &str, size: Option<usize>) -> Result<NlpProblem, ProblemError> {
    let invalid = |size, reason| ProblemError::InvalidSize {
        name: name.to_string(),
        size,
        reason,
    };
    let problem = match name {
        "example1" => {
            if let Some(k) = size {
                return Err(invalid(k, "this problem has a fixed size"));
            }
            NlpProblem::new(name, Arc::new(SphereCut)).with_known_optimum(Vector::from_vec(vec![2.0, 0.5, 0.5]))
        }
        "example2" => {
            let n = size.unwrap_or(100);
            if n < 2 {
                return Err(invalid(n, "needs at least 2 parameters"));
            }
            NlpProblem::new(name, Arc::new(SineChain { n })).with_known_optimum(Vector::from_element(n, 1.0))
        }
        "ec-quadratic" => {
            let n = size.unwrap_or(2);
            if n < 1 {
                return Err(invalid(n, "needs at least 1 parameter"));
            }
            NlpProblem::new(
                name,
                Arc::new(Quadratic {
                    n,
                    with_sum_constraint: true,
                }),
            )
            .with_known_optimum(Vector::from_element(n, 1.0))
        }
        "unconstrained-quadratic" => {
            let n = size.unwrap_or(2);
            if n < 1 {
                return Err(invalid(n, "needs at least 1 parameter"));
            }
            NlpProblem::new(
                name,
                Arc::new(Quadratic {
                    n,
                    with_sum_constraint: false,
                }),
            )
            .with_known_optimum(Vector::zeros(n))
        }
        _ => return Err(ProblemError::UnknownProblem(name.to_string())),
    };
    let points = sample_points(&problem, REGISTRATION_POINTS, 0x5eed);
    validate_derivatives(&problem, &points)?;
    Ok(problem)
}

/// One entry per built-in problem at its default size.
pub fn builtin_catalog() -> Vec<BuiltinInfo> {
    BUILTIN_NAMES
        .iter()
        .map(|&name| {
            let p = builtin(name, None).expect("registry entries construct at default size");
            let (description, default_size) = match name {
                "example1" => ("three-variable bilinear objective with a redundant equality pair", None),
                "example2" => ("chained sine objective with bound and two-sided constraints", Some(100)),
                "ec-quadratic" => ("min 0.5*|theta|^2 subject to sum(theta) = size", Some(2)),
                _ => ("min 0.5*|theta|^2 without constraints", Some(2)),
            };
            BuiltinInfo {
                name,
                description,
                default_size,
                dims: p.dims(),
                known_optimum: p
                    .known_optimum()
                    .map(|v| v.iter().copied().collect())
                    .unwrap_or_default(),
            }
        })
        .collect()
}

/// `min -t1 t2 - t2 t3 - t3 t1` over the positive orthant, cut by an
/// ellipsoid and a rational constraint, with the plane `sum = 3` stated twice
/// (the second row is twice the first).
#[derive(Debug)]
struct SphereCut;

impl ProblemFunctions for SphereCut {
    fn dims(&self) -> Dims {
        Dims { n: 3, r: 5, s: 2 }
    }

    fn evaluate_into(&self, t: &Vector, out: &mut EvalPoint) {
        let (a, b, c) = (t[0], t[1], t[2]);
        out.f = -a * b - b * c - c * a;
        out.f_grad.copy_from_slice(&[-b - c, -a - c, -b - a]);

        let q = 0.5 + b * b;
        out.g.copy_from_slice(&[
            -a,
            -b,
            -c,
            0.5 * (a - 3.0).powi(2) + b * b + c * c - 1.0,
            a / q + 2.0 * c - 4.0,
        ]);
        out.g_jac.fill(0.0);
        for i in 0..3 {
            out.g_jac[(i, i)] = -1.0;
        }
        out.g_jac[(3, 0)] = a - 3.0;
        out.g_jac[(3, 1)] = 2.0 * b;
        out.g_jac[(3, 2)] = 2.0 * c;
        out.g_jac[(4, 0)] = 1.0 / q;
        out.g_jac[(4, 1)] = -2.0 * a * b / (q * q);
        out.g_jac[(4, 2)] = 2.0;

        let sum = a + b + c;
        out.h.copy_from_slice(&[sum - 3.0, 2.0 * sum - 6.0]);
        for j in 0..3 {
            out.h_jac[(0, j)] = 1.0;
            out.h_jac[(1, j)] = 2.0;
        }
    }
}

/// Chained sine objective
///
/// ```text
/// f = sin(t1 - 1 + 1.5 pi) + sum_{i=2..n} 100 sin(-t_i + 1.5 pi + t_{i-1}^2)
/// ```
///
/// subject to `0.5 <= t1 <= 1.5`, `-pi <= t_{i-1}^2 - t_i <= pi` for
/// `i = 2..n`, and `t_i = t_{i+1}` for `i = 1..n-1`.
///
/// The quadratic term is read as `t_{i-1}^2` and the factor 100 as a
/// coefficient. Reading it as `t_{i+1}^2` would reference a component past
/// `t_n` for `i = n`. With the `t_{i-1}` reading every sine argument equals
/// `1.5 pi` at the all-ones point, every cosine vanishes, and `f_theta = 0`.
/// The all-ones point is feasible with no active inequality, so it is a KKT
/// point with all multipliers zero.
///
/// Each two-sided constraint becomes an upper row then a lower row, giving
/// `r = 2n`: rows `0, 1` bound `t1`; rows `2(i-1), 2(i-1)+1` hold the pair
/// for `t_{i-1}^2 - t_i`.
#[derive(Debug)]
struct SineChain {
    n: usize,
}

impl ProblemFunctions for SineChain {
    fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            r: 2 * self.n,
            s: self.n - 1,
        }
    }

    fn evaluate_into(&self, t: &Vector, out: &mut EvalPoint) {
        let n = self.n;
        let phase = 1.5 * PI;
        out.f_grad.fill(0.0);
        let arg0 = t[0] - 1.0 + phase;
        out.f = arg0.sin();
        out.f_grad[0] = arg0.cos();
        for i in 1..n {
            let arg = -t[i] + phase + t[i - 1] * t[i - 1];
            let (s, c) = arg.sin_cos();
            out.f += 100.0 * s;
            out.f_grad[i] -= 100.0 * c;
            out.f_grad[i - 1] += 200.0 * t[i - 1] * c;
        }

        out.g_jac.fill(0.0);
        out.g[0] = t[0] - 1.5;
        out.g[1] = 0.5 - t[0];
        out.g_jac[(0, 0)] = 1.0;
        out.g_jac[(1, 0)] = -1.0;
        for i in 1..n {
            let e = t[i - 1] * t[i - 1] - t[i];
            let (up, lo) = (2 * i, 2 * i + 1);
            out.g[up] = e - PI;
            out.g[lo] = -PI - e;
            out.g_jac[(up, i - 1)] = 2.0 * t[i - 1];
            out.g_jac[(up, i)] = -1.0;
            out.g_jac[(lo, i - 1)] = -2.0 * t[i - 1];
            out.g_jac[(lo, i)] = 1.0;
        }

        out.h_jac.fill(0.0);
        for i in 0..n - 1 {
            out.h[i] = t[i] - t[i + 1];
            out.h_jac[(i, i)] = 1.0;
            out.h_jac[(i, i + 1)] = -1.0;
        }
    }
}

/// `min 0.5 |t|^2`, optionally subject to `sum(t) - n = 0`.
#[derive(Debug)]
struct Quadratic {
    n: usize,
    with_sum_constraint: bool,
}

impl ProblemFunctions for Quadratic {
    fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            r: 0,
            s: usize::from(self.with_sum_constraint),
        }
    }

    fn evaluate_into(&self, t: &Vector, out: &mut EvalPoint) {
        out.f = 0.5 * t.norm_squared();
        out.f_grad.copy_from(t);
        if self.with_sum_constraint {
            out.h[0] = t.sum() - self.n as f64;
            out.h_jac.fill(1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_vec(x.to_vec())
    }

    #[test]
    fn dimensions() {
        let d = |name, size| builtin(name, size).unwrap().dims();
        assert_eq!(d("example1", None), Dims { n: 3, r: 5, s: 2 });
        assert_eq!(d("example2", None), Dims { n: 100, r: 200, s: 99 });
        assert_eq!(d("example2", Some(5)), Dims { n: 5, r: 10, s: 4 });
        assert_eq!(d("ec-quadratic", None), Dims { n: 2, r: 0, s: 1 });
        assert_eq!(d("unconstrained-quadratic", Some(4)), Dims { n: 4, r: 0, s: 0 });
    }

    #[test]
    fn lookup_errors() {
        assert_eq!(
            builtin("nope", None).unwrap_err(),
            ProblemError::UnknownProblem("nope".into())
        );
        assert!(matches!(
            builtin("example1", Some(3)),
            Err(ProblemError::InvalidSize { .. })
        ));
        assert!(matches!(
            builtin("example2", Some(1)),
            Err(ProblemError::InvalidSize { .. })
        ));
        assert!(matches!(
            builtin("ec-quadratic", Some(0)),
            Err(ProblemError::InvalidSize { .. })
        ));
    }

    #[test]
    fn example1_at_optimum() {
        let p = builtin("example1", None).unwrap();
        let e = p.evaluate(&v(&[2.0, 0.5, 0.5])).unwrap();
        assert_eq!(e.f, -2.25);
        assert_eq!(e.h.as_slice(), &[0.0, 0.0]);
        assert_eq!(e.g[3], 0.0);
        assert!((e.g[4] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.f_grad.as_slice(), &[-1.0, -2.5, -2.5]);
    }

    #[test]
    fn example2_optimum_is_stationary_and_feasible() {
        let p = builtin("example2", None).unwrap();
        let e = p.evaluate(&Vector::from_element(100, 1.0)).unwrap();
        assert!(e.f_grad.amax() < 1e-12);
        assert!(e.g.max() < 0.0);
        assert_eq!(e.h.amax(), 0.0);
        assert!((e.f - (-1.0 - 9900.0)).abs() < 1e-9);
    }

    #[test]
    fn example2_bound_row_violated_at_designed_start() {
        let p = builtin("example2", Some(4)).unwrap();
        let e = p.evaluate(&v(&[2.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(e.g[0], 0.5);
        assert_eq!(e.g[1], -1.5);
    }

    #[test]
    fn quadratic_toys() {
        let p = builtin("unconstrained-quadratic", None).unwrap();
        let e = p.evaluate(&Vector::zeros(2)).unwrap();
        assert_eq!((e.f, e.f_grad.amax()), (0.0, 0.0));
        let q = builtin("ec-quadratic", None).unwrap();
        let e = q.evaluate(&Vector::zeros(2)).unwrap();
        assert_eq!(e.h[0], -2.0);
    }

    #[test]
    fn catalog_is_stable() {
        let names: Vec<_> = builtin_catalog().iter().map(|b| b.name).collect();
        assert_eq!(names, BUILTIN_NAMES);
    }
}
