//! Checks shared by the property suites and the acceptance target.
#![allow(dead_code)]

pub mod flows;

use nlpflow::dynamics::{direction, rhs_general, DynamicsConfig, GainSet, PtsState, RhsResult, WorkingSet};
use nlpflow::integrate::Trajectory;
use nlpflow::linalg::{self, Matrix, Vector};
use nlpflow::problem::{Dims, EvalPoint, NlpProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The Gram matrices square the conditioning; beyond this, rounding alone
/// exceeds the absolute tolerances of the property checks.
pub const WELL_CONDITIONED: f64 = 1e3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// A random matrix with `rank <= inner`.
pub fn low_rank_matrix(rng: &mut impl Rng, rows: usize, cols: usize, inner: usize) -> Matrix {
    random_matrix(rng, rows, inner) * random_matrix(rng, inner, cols)
}

/// Random shapes up to 20x20, half of them rank-deficient products.
pub fn random_test_matrix(rng: &mut impl Rng) -> Matrix {
    let rows = rng.random_range(1..=20);
    let cols = rng.random_range(1..=20);
    if rng.random_bool(0.5) && rows.min(cols) > 1 {
        let inner = rng.random_range(1..rows.min(cols));
        low_rank_matrix(rng, rows, cols, inner)
    } else {
        random_matrix(rng, rows, cols)
    }
}

fn max_abs(m: &Matrix) -> f64 {
    m.amax()
}

/// Largest residual of the four Penrose conditions.
pub fn penrose_residual(m: &Matrix) -> f64 {
    let p = linalg::pinv(m).unwrap();
    let mp = m * &p;
    let pm = &p * m;
    [
        max_abs(&(&mp * m - m)),
        max_abs(&(&pm * &p - &p)),
        max_abs(&(mp.transpose() - &mp)),
        max_abs(&(pm.transpose() - &pm)),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Largest idempotence or symmetry defect of both projectors.
pub fn projector_residual(m: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for p in [linalg::projector_col(m).unwrap(), linalg::projector_row(m).unwrap()] {
        worst = worst.max(max_abs(&(&p * &p - &p))).max(max_abs(&(p.transpose() - &p)));
    }
    worst
}

/// `M+ = M^T (M M^T)+ = (M^T M)+ M^T`
pub fn gram_identity_residual(m: &Matrix) -> f64 {
    let p = linalg::pinv(m).unwrap();
    let left = m.transpose() * linalg::pinv(&(m * m.transpose())).unwrap();
    let right = linalg::pinv(&(m.transpose() * m)).unwrap() * m.transpose();
    max_abs(&(&left - &p)).max(max_abs(&(&right - &p)))
}

/// For consistent `M x = b` and nonsingular `S`: `M+ b = (S M)+ S b`.
pub fn scaled_system_residual(rng: &mut impl Rng, m: &Matrix) -> f64 {
    let x = Vector::from_fn(m.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let b = m * x;
    // diagonally dominant, hence nonsingular and reasonably conditioned
    let k = m.nrows();
    let s = random_matrix(rng, k, k) + Matrix::identity(k, k) * (k as f64 + 1.0);
    let direct = linalg::pinv(m).unwrap() * &b;
    let scaled = linalg::pinv(&(&s * m)).unwrap() * (&s * &b);
    (direct - scaled).amax()
}

/// `sigma_max / sigma_min` over the leading `min(rows, cols)` singular values.
pub fn condition_number(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Every working set `W` of the activated rows whose direction satisfies the
/// equality targets, holds the working rows exactly, keeps the other
/// activated rows within their dynamics, and has non-negative multipliers.
pub fn consistent_working_sets(eval: &EvalPoint, gains: &GainSet, activated: &[usize]) -> Vec<RhsResult> {
    let cfg = DynamicsConfig::default();
    let fac = linalg::svd(&eval.h_jac).unwrap();
    let eq_target = -(fac.column_projector() * (gains.k_h() * &eval.h));
    let mut found = Vec::new();
    for mask in 0u32..(1 << activated.len()) {
        let working: Vec<usize> = activated
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &i)| i)
            .collect();
        let ws = WorkingSet {
            activated: activated.to_vec(),
            working: working.clone(),
            pts_active_groups: vec![0],
        };
        let Ok(r) = rhs_general(eval, gains, &ws, &cfg) else {
            continue;
        };
        let rate = |i: usize| eval.g_jac.row(i).transpose().dot(&r.dtheta) + gains.k_g()[i] * eval.g[i];
        let eq_ok = (&eval.h_jac * &r.dtheta - &eq_target).amax() <= 1e-8;
        let held = working.iter().all(|&i| rate(i).abs() <= 1e-8 && r.pi_i[i] >= -1e-9);
        let others = activated
            .iter()
            .filter(|i| !working.contains(i))
            .all(|&i| rate(i) <= 1e-8);
        if eq_ok && held && others {
            found.push(r);
        }
    }
    found
}

/// A random problem instance, stated directly as an evaluation point.
/// Roughly half of the inequality rows are active or violated.
pub fn random_instance(rng: &mut impl Rng, n: usize, r: usize, s: usize) -> EvalPoint {
    let mut e = EvalPoint::zeros(nlpflow::problem::Dims { n, r, s });
    e.theta = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    e.f_grad = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    e.g_jac = random_matrix(rng, r, n);
    e.g = Vector::from_fn(r, |_, _| match rng.random_range(0..3) {
        0 => 0.0,
        1 => rng.random_range(0.0..0.5),
        _ => rng.random_range(-1.0..-0.1),
    });
    e.h_jac = random_matrix(rng, s, n);
    e.h = Vector::from_fn(s, |_, _| rng.random_range(-0.5..0.5));
    e
}

/// Values of `metric` at accepted steps.
pub fn accepted_series(problem: &NlpProblem, tr: &Trajectory, metric: impl Fn(&EvalPoint) -> f64) -> Vec<f64> {
    tr.samples
        .iter()
        .filter(|s| s.accepted_step)
        .map(|s| metric(&problem.evaluate(&s.theta).unwrap()))
        .collect()
}

/// Largest increase between consecutive entries.
pub fn max_increase(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
}

pub fn median(v: &Vector) -> f64 {
    let mut x: Vec<f64> = v.iter().copied().collect();
    x.sort_by(f64::total_cmp);
    let m = x.len() / 2;
    if x.len() % 2 == 0 {
        0.5 * (x[m - 1] + x[m])
    } else {
        x[m]
    }
}

/// Uniform points in `[lo, hi]^n`.
pub fn uniform_starts(seed: u64, count: usize, n: usize, lo: f64, hi: f64) -> Vec<Vector> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| Vector::from_fn(n, |_, _| rng.random_range(lo..=hi)))
        .collect()
}

/// Random starts for the chained sine problem: `theta_1 = 2`, the rest in `[0.7, 1.2]`.
pub fn sine_chain_starts(seed: u64, count: usize, n: usize) -> Vec<Vector> {
    let mut starts = uniform_starts(seed, count, n, 0.7, 1.2);
    for s in &mut starts {
        s[0] = 2.0;
    }
    starts
}

/// Feasible points of the three-variable example: positive, on the plane
/// `sum = 3`, and inside both curved constraints.
pub fn sphere_cut_feasible_starts(seed: u64, count: usize) -> Vec<Vector> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let a: f64 = rng.random_range(2.0..3.0);
        let b: f64 = rng.random_range(0.0..1.0);
        let c = 3.0 - a - b;
        if c < 0.0 {
            continue;
        }
        let g4 = 0.5 * (a - 3.0).powi(2) + b * b + c * c - 1.0;
        let g5 = a / (0.5 + b * b) + 2.0 * c - 4.0;
        if g4 < -1e-3 && g5 < -1e-3 {
            out.push(Vector::from_vec(vec![a, b, c]));
        }
    }
    out
}

pub fn random_gains(rng: &mut impl Rng, dims: Dims) -> GainSet {
    let b = random_matrix(rng, dims.n, dims.n);
    let k_theta = &b * b.transpose() + Matrix::identity(dims.n, dims.n) * 0.2;
    let k_h = Matrix::identity(dims.s, dims.s) * rng.random_range(0.1..2.0);
    let k_g = Vector::from_fn(dims.r, |_, _| rng.random_range(0.1..2.0));
    GainSet::new(k_theta, k_h, k_g).unwrap()
}

/// Same gains with `K_h = k I` resized to `s` rows.
pub fn resized(gains: &GainSet, s: usize) -> GainSet {
    let k = gains.k_h()[(0, 0)];
    GainSet::new(gains.k_theta().clone(), Matrix::identity(s, s) * k, gains.k_g().clone()).unwrap()
}

/// Appends the equality row `sum_j c_j h_j` with its value and gradient.
pub fn append_combination(eval: &EvalPoint, c: &Vector) -> EvalPoint {
    let mut e = eval.clone();
    let s = eval.h.len();
    let row = c.transpose() * &eval.h_jac;
    e.h = eval.h.clone().insert_row(s, c.dot(&eval.h));
    e.h_jac = eval.h_jac.clone().insert_row(s, 0.0);
    e.h_jac.row_mut(s).copy_from(&row);
    e
}

pub fn rescale_row(eval: &EvalPoint, k: usize, c: f64) -> EvalPoint {
    let mut e = eval.clone();
    e.h[k] *= c;
    e.h_jac.row_mut(k).scale_mut(c);
    e
}

pub fn unit(s: usize, k: usize) -> Vector {
    let mut v = Vector::zeros(s);
    v[k] = 1.0;
    v
}

/// The direction at `eval` and under duplication, rescaling and recombination
/// of its equality rows. `None` when the direction subproblem is infeasible.
pub fn redundancy_defect(rng: &mut impl Rng, eval: &EvalPoint, gains: &GainSet, pts: &PtsState) -> Option<f64> {
    let cfg = DynamicsConfig::default();
    let s = eval.h.len();
    let base = direction(eval, gains, pts, &[], &cfg).ok()?.dtheta;
    let k = rng.random_range(0..s);
    let mut c = rng.random_range(0.2..5.0);
    if rng.random_bool(0.5) {
        c = -c;
    }
    let combo = Vector::from_fn(s, |_, _| rng.random_range(-2.0..2.0));
    let variants = [
        (append_combination(eval, &unit(s, k)), s + 1),
        (rescale_row(eval, k, c), s),
        (append_combination(eval, &combo), s + 1),
    ];
    let scale = base.amax().max(1.0);
    let defect = variants
        .iter()
        .map(|(e, rows)| {
            let d = direction(e, &resized(gains, *rows), pts, &[], &cfg).unwrap().dtheta;
            (d - &base).amax() / scale
        })
        .fold(0.0, f64::max);
    Some(defect)
}
