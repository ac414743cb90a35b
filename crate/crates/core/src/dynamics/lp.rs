//! Bounded-variable two-phase primal simplex on a dense tableau, and the
//! feasibility LP built on it.

use thiserror::Error;

use super::{DynamicsConfig, DynamicsError, GainSet};
use crate::linalg::{self, Matrix, Vector};
use crate::problem::EvalPoint;

/// `minimize c^T x  s.t.  a_eq x = b_eq,  a_le x <= b_le,  lower <= x <= upper`
/// with finite bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vector,
    pub a_eq: Matrix,
    pub b_eq: Vector,
    pub a_le: Matrix,
    pub b_le: Vector,
    pub lower: Vector,
    pub upper: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vector,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("constraints are infeasible (phase-one residual {residual:e})")]
    Infeasible { residual: f64 },
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("malformed linear program: {0}")]
    Invalid(&'static str),
}

const COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-10;

struct Tableau {
    /// `m x cols`, row-major, holds `B^-1 A`.
    t: Vec<f64>,
    m: usize,
    cols: usize,
    basis: Vec<usize>,
    /// Current value of every variable (nonbasic ones sit at a bound).
    x: Vec<f64>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.at(r, j);
        for k in 0..cols {
            self.t[r * cols + k] /= p;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.at(i, j);
            if factor == 0.0 {
                continue;
            }
            for k in 0..cols {
                self.t[i * cols + k] -= factor * self.t[r * cols + k];
            }
        }
        self.is_basic[self.basis[r]] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }

    /// Minimizes `cost^T x` over the variables with `allowed[j]`, Bland's rule.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], limit: usize) -> Result<(), LpError> {
        loop {
            self.iterations += 1;
            if self.iterations > limit {
                return Err(LpError::IterationLimit(limit));
            }
            let mut entering = None;
            for j in 0..self.cols {
                if self.is_basic[j] || !allowed[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..self.m {
                    d -= cost[self.basis[i]] * self.at(i, j);
                }
                if (!self.at_upper[j] && d < -COST_TOL) || (self.at_upper[j] && d > COST_TOL) {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Ok(()) };
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            // ratio test; `None` leaving means the entering variable flips bounds
            let mut best = self.upper[j];
            let mut leaving: Option<usize> = None;
            for i in 0..self.m {
                let a = self.at(i, j) * dir;
                let b = self.basis[i];
                let ratio = if a > PIVOT_TOL {
                    self.x[b].max(0.0) / a
                } else if a < -PIVOT_TOL && self.upper[b].is_finite() {
                    (self.upper[b] - self.x[b]).max(0.0) / -a
                } else {
                    continue;
                };
                let better = match leaving {
                    _ if ratio < best - 1e-12 => true,
                    Some(l) if ratio <= best + 1e-12 => b < self.basis[l],
                    None if ratio <= best + 1e-12 => b < j,
                    _ => false,
                };
                if better {
                    best = ratio;
                    leaving = Some(i);
                }
            }
            if !best.is_finite() {
                return Err(LpError::Invalid("unbounded direction"));
            }
            let step = dir * best;
            self.x[j] += step;
            for i in 0..self.m {
                let b = self.basis[i];
                self.x[b] -= self.at(i, j) * step;
            }
            match leaving {
                None => {
                    self.at_upper[j] = !self.at_upper[j];
                    self.x[j] = if self.at_upper[j] { self.upper[j] } else { 0.0 };
                }
                Some(r) => {
                    let b = self.basis[r];
                    let to_upper = self.at(r, j) * dir < 0.0;
                    self.at_upper[b] = to_upper;
                    self.x[b] = if to_upper { self.upper[b] } else { 0.0 };
                    self.at_upper[j] = false;
                    self.pivot(r, j);
                }
            }
        }
    }
}

/// Solves a bounded LP. Bland's rule guarantees termination.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.c.len();
    let (me, ml) = (lp.a_eq.nrows(), lp.a_le.nrows());
    if lp.a_eq.ncols() != n && me > 0
        || lp.a_le.ncols() != n && ml > 0
        || lp.b_eq.len() != me
        || lp.b_le.len() != ml
        || lp.lower.len() != n
        || lp.upper.len() != n
    {
        return Err(LpError::Invalid("inconsistent shapes"));
    }
    if lp.lower.iter().chain(lp.upper.iter()).any(|b| !b.is_finite())
        || lp.lower.iter().zip(lp.upper.iter()).any(|(l, u)| l > u)
    {
        return Err(LpError::Invalid("bounds must be finite with lower <= upper"));
    }

    // shifted variables y = x - lower in [0, upper - lower], then slacks, then artificials
    let m = me + ml;
    let cols = n + ml + m;
    let mut t = vec![0.0; m * cols];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let (row, b) = if i < me {
            (lp.a_eq.row(i), lp.b_eq[i])
        } else {
            (lp.a_le.row(i - me), lp.b_le[i - me])
        };
        let mut r = b - row.dot(&lp.lower.transpose());
        let sign = if r < 0.0 { -1.0 } else { 1.0 };
        r *= sign;
        for j in 0..n {
            t[i * cols + j] = sign * row[j];
        }
        if i >= me {
            t[i * cols + n + (i - me)] = sign;
        }
        t[i * cols + n + ml + i] = 1.0;
        rhs[i] = r;
    }
    let mut upper = vec![f64::INFINITY; cols];
    for (u, (hi, lo)) in upper.iter_mut().zip(lp.upper.iter().zip(lp.lower.iter())) {
        *u = hi - lo;
    }
    let mut x = vec![0.0; cols];
    let mut is_basic = vec![false; cols];
    let basis: Vec<usize> = (0..m).map(|i| n + ml + i).collect();
    for i in 0..m {
        x[n + ml + i] = rhs[i];
        is_basic[n + ml + i] = true;
    }
    let mut tab = Tableau {
        t,
        m,
        cols,
        basis,
        x,
        upper,
        at_upper: vec![false; cols],
        is_basic,
        iterations: 0,
    };
    let limit = 50 * (cols + m + 10);

    let mut phase1 = vec![0.0; cols];
    for c in &mut phase1[n + ml..] {
        *c = 1.0;
    }
    let all = vec![true; cols];
    tab.optimize(&phase1, &all, limit)?;
    let residual: f64 = tab.x[n + ml..].iter().sum();
    let scale = rhs.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
    if residual > 1e-9 * scale {
        return Err(LpError::Infeasible { residual });
    }

    // artificials are pinned at zero for phase two
    for j in n + ml..cols {
        tab.upper[j] = 0.0;
        tab.x[j] = 0.0;
    }
    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(lp.c.as_slice());
    let mut allowed = vec![true; cols];
    for a in &mut allowed[n + ml..] {
        *a = false;
    }
    tab.optimize(&phase2, &allowed, limit)?;

    let x = Vector::from_fn(n, |j, _| (lp.lower[j] + tab.x[j]).clamp(lp.lower[j], lp.upper[j]));
    Ok(LpSolution {
        objective: lp.c.dot(&x),
        x,
        iterations: tab.iterations,
    })
}

/// Result of the feasibility LP.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityLp {
    /// `gamma <= 0` certifies a direction meeting every activated row's dynamics.
    pub gamma: f64,
    pub direction: Vector,
    /// Activated rows left out because their gradient is numerically zero.
    pub excluded_rows: Vec<usize>,
    pub box_size: f64,
}

/// ```text
/// minimize gamma over (d, gamma)
/// s.t. h_theta d = -P K_h h
///      (a_i / |a_i|)^T d + k_i g_i / |a_i| <= gamma   for i in rows
///      |d|_inf <= box,  |gamma| <= box * G
/// ```
///
/// `P` projects onto the range of `h_theta`, so the equality rows are always
/// consistent. `G = max_i (|a_i|_1 / |a_i|_2 + k_i |g_i| / (|a_i|_2 box))`
/// bounds `gamma` at every `d` in the box. When `box_size` is `None` it is
/// chosen as ten times the largest of one, the minimum-norm equality
/// correction, and the normalized violation rates, and grown while the
/// optimum is positive and sits on the box boundary.
pub fn feasibility_lp(
    eval: &EvalPoint,
    gains: &GainSet,
    rows: &[usize],
    box_size: Option<f64>,
    cfg: &DynamicsConfig,
) -> Result<FeasibilityLp, DynamicsError> {
    let n = eval.theta.len();
    let fac = linalg::svd_with_tolerance(&eval.h_jac, cfg.rank_multiplier)?;
    let kh_h = gains.k_h() * &eval.h;
    let target = -(fac.column_projector() * &kh_h);
    let d_min = -fac.apply_pinv(&kh_h);

    let grad_tol = {
        let gmax = rows.iter().map(|&i| eval.g_jac.row(i).norm()).fold(0.0, f64::max);
        linalg::default_rank_tolerance(1, n, gmax, cfg.rank_multiplier).max(f64::MIN_POSITIVE)
    };
    let mut kept = Vec::new();
    let mut excluded_rows = Vec::new();
    for &i in rows {
        let norm = eval.g_jac.row(i).norm();
        if norm > grad_tol {
            kept.push((i, norm));
        } else {
            excluded_rows.push(i);
        }
    }

    let rate = |&(i, norm): &(usize, f64)| gains.k_g()[i] * eval.g[i] / norm;
    let adaptive = box_size.is_none();
    let mut box_size = box_size.unwrap_or_else(|| {
        let violations = kept.iter().map(|r| rate(r).abs()).fold(0.0, f64::max);
        10.0 * d_min.amax().max(violations).max(1.0)
    });

    let (s, k) = (eval.h.len(), kept.len());
    let mut a_eq = Matrix::zeros(s, n + 1);
    a_eq.view_mut((0, 0), (s, n)).copy_from(&eval.h_jac);
    let mut a_le = Matrix::zeros(k, n + 1);
    let mut b_le = Vector::zeros(k);
    for (row, r @ &(i, norm)) in kept.iter().enumerate() {
        for j in 0..n {
            a_le[(row, j)] = eval.g_jac[(i, j)] / norm;
        }
        a_le[(row, n)] = -1.0;
        b_le[row] = -rate(r);
    }
    let mut c = Vector::zeros(n + 1);
    c[n] = 1.0;

    let mut growths = 0;
    loop {
        let g_bound = if kept.is_empty() {
            1.0
        } else {
            kept.iter()
                .map(|r @ &(i, norm)| eval.g_jac.row(i).abs().sum() / norm + rate(r).abs() / box_size)
                .fold(0.0, f64::max)
        };
        let mut lower = Vector::from_element(n + 1, -box_size);
        let mut upper = Vector::from_element(n + 1, box_size);
        lower[n] = -box_size * g_bound;
        upper[n] = box_size * g_bound;

        let lp = LinearProgram {
            c: c.clone(),
            a_eq: a_eq.clone(),
            b_eq: target.clone(),
            a_le: a_le.clone(),
            b_le: b_le.clone(),
            lower,
            upper,
        };
        let sol = solve_lp(&lp).map_err(|e| match e {
            LpError::Infeasible { residual } => DynamicsError::InfeasibleSubproblem { gamma: residual },
            other => DynamicsError::Lp(other),
        })?;
        let gamma = sol.x[n];
        let direction = sol.x.rows(0, n).into_owned();
        // A positive optimum on the box boundary may only reflect the box.
        let on_boundary = direction.amax() >= box_size * (1.0 - 1e-9);
        if adaptive && gamma > cfg.tol_dyn && on_boundary && growths < BOX_GROWTHS {
            box_size *= BOX_GROWTH_FACTOR;
            growths += 1;
            continue;
        }
        return Ok(FeasibilityLp {
            gamma,
            direction,
            excluded_rows,
            box_size,
        });
    }
}

const BOX_GROWTH_FACTOR: f64 = 100.0;
const BOX_GROWTHS: usize = 6;
