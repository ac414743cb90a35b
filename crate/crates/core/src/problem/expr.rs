use std::fmt;

use super::dual::DualNumber;
use super::{Dims, EvalPoint, ProblemFunctions};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Function {
    pub fn from_name(name: &str) -> Option<Function> {
        Some(match name {
            "sin" => Function::Sin,
            "cos" => Function::Cos,
            "exp" => Function::Exp,
            "log" => Function::Log,
            "sqrt" => Function::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Exp => "exp",
            Function::Log => "log",
            Function::Sqrt => "sqrt",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Function::Sin => x.sin(),
            Function::Cos => x.cos(),
            Function::Exp => x.exp(),
            Function::Log => x.ln(),
            Function::Sqrt => x.sqrt(),
        }
    }

    fn apply_dual(self, x: DualNumber) -> DualNumber {
        match self {
            Function::Sin => x.sin(),
            Function::Cos => x.cos(),
            Function::Exp => x.exp(),
            Function::Log => x.ln(),
            Function::Sqrt => x.sqrt(),
        }
    }
}

/// Expression tree over the variables `x1..xn` (stored 0-based).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Call(Function, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => theta[*i],
            Expr::Neg(a) => -a.eval(theta),
            Expr::Add(a, b) => a.eval(theta) + b.eval(theta),
            Expr::Sub(a, b) => a.eval(theta) - b.eval(theta),
            Expr::Mul(a, b) => a.eval(theta) * b.eval(theta),
            Expr::Div(a, b) => a.eval(theta) / b.eval(theta),
            Expr::Pow(a, p) => pow(a.eval(theta), *p),
            Expr::Call(f, a) => f.apply(a.eval(theta)),
        }
    }

    pub fn eval_dual(&self, theta: &[f64]) -> DualNumber {
        let n = theta.len();
        match self {
            Expr::Const(c) => DualNumber::constant(*c, n),
            Expr::Var(i) => DualNumber::variable(theta[*i], *i, n),
            Expr::Neg(a) => -a.eval_dual(theta),
            Expr::Add(a, b) => a.eval_dual(theta) + b.eval_dual(theta),
            Expr::Sub(a, b) => a.eval_dual(theta) - b.eval_dual(theta),
            Expr::Mul(a, b) => a.eval_dual(theta) * b.eval_dual(theta),
            Expr::Div(a, b) => a.eval_dual(theta) / b.eval_dual(theta),
            Expr::Pow(a, p) => a.eval_dual(theta).powf(*p),
            Expr::Call(f, a) => f.apply_dual(a.eval_dual(theta)),
        }
    }

    /// Largest variable index referenced, 0-based.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// Value of a variable-free expression.
    pub fn constant_value(&self) -> Option<f64> {
        if self.max_var().is_some() {
            None
        } else {
            Some(self.eval(&[]))
        }
    }
}

/// Matches the dual-number power so values agree bit-for-bit.
fn pow(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        x.powf(p)
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c.is_sign_negative() {
        write!(f, "(-{:?})", -c)
    } else {
        write!(f, "{c:?}")
    }
}

/// Fully parenthesized; parses back to an identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_number(f, *c),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, p) => {
                write!(f, "({a} ^ ")?;
                write_number(f, *p)?;
                write!(f, ")")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A problem given by expression trees, differentiated with dual numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprProblem {
    pub n: usize,
    pub objective: Expr,
    /// Each entry means `expr <= 0`.
    pub inequalities: Vec<Expr>,
    /// Each entry means `expr = 0`.
    pub equalities: Vec<Expr>,
}

impl ExprProblem {
    /// Canonical text form accepted by the parser.
    pub fn to_text(&self) -> String {
        let mut out = format!("var {}\nmin {}\n", self.n, self.objective);
        for g in &self.inequalities {
            out.push_str(&format!("ineq {g}\n"));
        }
        for h in &self.equalities {
            out.push_str(&format!("eq {h}\n"));
        }
        out
    }
}

impl ProblemFunctions for ExprProblem {
    fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            r: self.inequalities.len(),
            s: self.equalities.len(),
        }
    }

    fn evaluate_into(&self, theta: &Vector, out: &mut EvalPoint) {
        let x = theta.as_slice();
        let f = self.objective.eval_dual(x);
        out.f = f.value;
        out.f_grad.copy_from_slice(&f.derivatives);
        for (i, e) in self.inequalities.iter().enumerate() {
            let d = e.eval_dual(x);
            out.g[i] = d.value;
            for (j, v) in d.derivatives.iter().enumerate() {
                out.g_jac[(i, j)] = *v;
            }
        }
        for (i, e) in self.equalities.iter().enumerate() {
            let d = e.eval_dual(x);
            out.h[i] = d.value;
            for (j, v) in d.derivatives.iter().enumerate() {
                out.h_jac[(i, j)] = *v;
            }
        }
    }
}
