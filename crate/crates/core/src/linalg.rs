//! Dense real linear algebra used by the flow: SVD with a numerical rank,
//! the Moore-Penrose pseudo-inverse, orthogonal projectors onto row and
//! column spaces, and the symmetric positive-definite square root.
//!
//! Matrices are `nalgebra` dense matrices. Every entry point rejects
//! non-finite input. Zero-sized matrices are accepted and produce the
//! zero-sized results one would expect (the pseudo-inverse of an `m x 0`
//! matrix is `0 x m`), which keeps callers free of empty-set special cases
//! when a problem has no equality constraints or an empty working set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Iteration cap handed to the bidiagonal QR sweeps of the SVD.
const SVD_MAX_ITERATIONS: usize = 10_000;
/// nalgebra's own default convergence threshold.
const SVD_CONVERGENCE_EPS: f64 = 5.0 * f64::EPSILON;
/// Relative reconstruction and orthonormality slack accepted from a solver.
const FACTORIZATION_CHECK_TOL: f64 = 1e-11;
const JACOBI_MAX_SWEEPS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("singular value decomposition did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Thin SVD `M = U diag(s) V^T` together with the numerical rank used to
/// build pseudo-inverses and projectors.
///
/// `u` is `m x k` and `v` is `n x k` with `k = min(m, n)`; both have
/// orthonormal columns. Singular values are sorted descending and exactly
/// the first `rank` of them exceed `rank_tolerance`.
#[derive(Debug, Clone)]
pub struct PinvFactorization {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
    pub rank: usize,
    pub rank_tolerance: f64,
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    for (idx, x) in m.iter().enumerate() {
        if !x.is_finite() {
            // nalgebra storage is column-major.
            let rows = m.nrows().max(1);
            return Err(LinalgError::NonFinite {
                row: idx % rows,
                col: idx / rows,
            });
        }
    }
    Ok(())
}

/// Rank threshold `max(m, n) * sigma_max * eps * multiplier`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64, multiplier: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON * multiplier
}

/// SVD with the default rank tolerance multiplier of one.
pub fn svd(m: &Matrix) -> Result<PinvFactorization> {
    svd_with_tolerance(m, 1.0)
}

pub fn svd_with_tolerance(m: &Matrix, multiplier: f64) -> Result<PinvFactorization> {
    ensure_finite(m)?;
    let (rows, cols) = m.shape();
    if rows.min(cols) == 0 {
        return Ok(empty_factorization(rows, cols));
    }
    let parts = match bidiagonal_svd(m) {
        Some(parts) if factorization_holds(m, &parts) => parts,
        _ => jacobi_svd(m)?,
    };
    Ok(finish(parts, rows, cols, multiplier))
}

/// Factorization of a symmetric positive semidefinite matrix through its
/// eigendecomposition, with the same contract as [`svd_with_tolerance`].
/// Falls back to the general path if the eigensolver result does not check out.
pub fn psd_factorization(m: &Matrix, multiplier: f64) -> Result<PinvFactorization> {
    ensure_finite(m)?;
    let n = m.nrows();
    if n != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: m.ncols(),
        });
    }
    if n == 0 {
        return Ok(empty_factorization(0, 0));
    }
    let eig = m.clone().symmetric_eigen();
    let u = eig.eigenvectors;
    let mut v = u.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda < 0.0 {
            v.column_mut(j).neg_mut();
        }
    }
    let parts = (u, eig.eigenvalues.abs(), v);
    if factorization_holds(m, &parts) {
        Ok(finish(parts, n, n, multiplier))
    } else {
        svd_with_tolerance(m, multiplier)
    }
}

type SvdParts = (Matrix, Vector, Matrix);

fn empty_factorization(rows: usize, cols: usize) -> PinvFactorization {
    PinvFactorization {
        u: Matrix::zeros(rows, 0),
        singular_values: Vector::zeros(0),
        v: Matrix::zeros(cols, 0),
        rank: 0,
        rank_tolerance: 0.0,
    }
}

fn bidiagonal_svd(m: &Matrix) -> Option<SvdParts> {
    let d = m.clone().try_svd(true, true, SVD_CONVERGENCE_EPS, SVD_MAX_ITERATIONS)?;
    Some((d.u?, d.singular_values, d.v_t?.transpose()))
}

/// nalgebra's Golub-Kahan SVD occasionally returns a factorization that does
/// not reproduce rank-deficient inputs, so every result is checked for
/// reconstruction and orthonormal factors.
fn factorization_holds(m: &Matrix, (u, s, v): &SvdParts) -> bool {
    if !(s.iter().all(|x| x.is_finite() && *x >= 0.0)
        && u.iter().all(|x| x.is_finite())
        && v.iter().all(|x| x.is_finite()))
    {
        return false;
    }
    let mut us = u.clone();
    for j in 0..us.ncols() {
        us.column_mut(j).scale_mut(s[j]);
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let k = s.len();
    let ident = Matrix::identity(k, k);
    (us * v.transpose() - m).norm() <= FACTORIZATION_CHECK_TOL * scale
        && (u.tr_mul(u) - &ident).amax() <= FACTORIZATION_CHECK_TOL
        && (v.tr_mul(v) - &ident).amax() <= FACTORIZATION_CHECK_TOL
}

/// One-sided (Hestenes) Jacobi SVD.
fn jacobi_svd(m: &Matrix) -> Result<SvdParts> {
    let transposed = m.nrows() < m.ncols();
    let mut w = if transposed { m.transpose() } else { m.clone() };
    let (rows, n) = w.shape();
    let mut v = Matrix::identity(n, n);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence);
    }

    let mut sigma = Vector::zeros(n);
    let mut u = Matrix::zeros(rows, n);
    let mut filled = vec![false; n];
    for j in 0..n {
        sigma[j] = w.column(j).norm();
        if sigma[j] > 0.0 {
            u.set_column(j, &(w.column(j) / sigma[j]));
            filled[j] = true;
        }
    }
    complete_orthonormal(&mut u, &mut filled);
    Ok(if transposed { (v, sigma, u) } else { (u, sigma, v) })
}

fn rotate_columns(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let (x, y) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = c * x - s * y;
        a[(i, q)] = s * x + c * y;
    }
}

/// Fills the unset columns with unit vectors orthogonal to the set ones.
fn complete_orthonormal(u: &mut Matrix, filled: &mut [bool]) {
    let rows = u.nrows();
    for j in 0..u.ncols() {
        if filled[j] {
            continue;
        }
        for k in 0..rows {
            let mut x = Vector::zeros(rows);
            x[k] = 1.0;
            for _ in 0..2 {
                for (c, _) in filled.iter().enumerate().filter(|(_, f)| **f) {
                    let col = u.column(c).into_owned();
                    x.axpy(-col.dot(&x), &col, 1.0);
                }
            }
            let norm = x.norm();
            if norm > 0.5 {
                u.set_column(j, &(x / norm));
                filled[j] = true;
                break;
            }
        }
    }
}

/// Sorts descending and sets the numerical rank.
fn finish((u_raw, s_raw, v_raw): SvdParts, rows: usize, cols: usize, multiplier: f64) -> PinvFactorization {
    let k = s_raw.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s_raw[b].total_cmp(&s_raw[a]).then(a.cmp(&b)));

    let mut u = Matrix::zeros(rows, k);
    let mut v = Matrix::zeros(cols, k);
    let mut singular_values = Vector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        singular_values[dst] = s_raw[src];
        u.set_column(dst, &u_raw.column(src));
        v.set_column(dst, &v_raw.column(src));
    }

    let rank_tolerance = default_rank_tolerance(rows, cols, singular_values[0], multiplier);
    let rank = singular_values.iter().take_while(|&&s| s > rank_tolerance).count();
    PinvFactorization {
        u,
        singular_values,
        v,
        rank,
        rank_tolerance,
    }
}

impl PinvFactorization {
    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    /// `V_r diag(1/s_r) U_r^T`.
    pub fn pinv(&self) -> Matrix {
        let r = self.rank;
        let mut scaled_v = self.v.columns(0, r).into_owned();
        for j in 0..r {
            scaled_v.column_mut(j).scale_mut(1.0 / self.singular_values[j]);
        }
        scaled_v * self.u.columns(0, r).transpose()
    }

    /// Applies the pseudo-inverse to a vector without forming it.
    pub fn apply_pinv(&self, b: &Vector) -> Vector {
        let r = self.rank;
        let mut coeffs = self.u.columns(0, r).tr_mul(b);
        for j in 0..r {
            coeffs[j] /= self.singular_values[j];
        }
        self.v.columns(0, r) * coeffs
    }

    /// Orthogonal projector onto the column space, `M M^+ = U_r U_r^T`.
    pub fn column_projector(&self) -> Matrix {
        let ur = self.u.columns(0, self.rank);
        ur * ur.transpose()
    }

    /// Orthogonal projector onto the row space, `M^+ M = V_r V_r^T`.
    pub fn row_projector(&self) -> Matrix {
        let vr = self.v.columns(0, self.rank);
        vr * vr.transpose()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for j in 0..us.ncols() {
            us.column_mut(j).scale_mut(self.singular_values[j]);
        }
        us * self.v.transpose()
    }
}

/// Moore-Penrose pseudo-inverse `M^+ = V S^+ U^T`.
pub fn pinv(m: &Matrix) -> Result<Matrix> {
    Ok(svd(m)?.pinv())
}

/// Projector onto the column space of `m` (`m m^+`).
pub fn projector_col(m: &Matrix) -> Result<Matrix> {
    Ok(svd(m)?.column_projector())
}

/// Projector onto the row space of `m` (`m^+ m`).
pub fn projector_row(m: &Matrix) -> Result<Matrix> {
    Ok(svd(m)?.row_projector())
}

pub fn max_asymmetry(k: &Matrix) -> f64 {
    let n = k.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    worst
}

/// Checks symmetry (relative to the largest entry) and returns the
/// eigendecomposition of the symmetrized matrix if all eigenvalues are
/// strictly positive.
pub fn check_spd(k: &Matrix, symmetry_tol: f64) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    ensure_finite(k)?;
    if k.nrows() != k.ncols() {
        return Err(LinalgError::NotSquare {
            rows: k.nrows(),
            cols: k.ncols(),
        });
    }
    let scale = k.amax().max(1.0);
    let asymmetry = max_asymmetry(k);
    if asymmetry > symmetry_tol * scale {
        return Err(LinalgError::NotSymmetric { asymmetry });
    }
    let sym = (k + k.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if k.nrows() > 0 && (min_eigenvalue.is_nan() || min_eigenvalue <= 0.0) {
        return Err(LinalgError::NotPositiveDefinite { min_eigenvalue });
    }
    Ok(eig)
}

/// Symmetric positive-definite square root via the spectral decomposition.
pub fn sqrt_spd(k: &Matrix) -> Result<Matrix> {
    let eig = check_spd(k, 1e-12)?;
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for j in 0..scaled.ncols() {
        scaled.column_mut(j).scale_mut(eig.eigenvalues[j].sqrt());
    }
    let s = scaled * q.transpose();
    Ok((&s + s.transpose()) * 0.5)
}
