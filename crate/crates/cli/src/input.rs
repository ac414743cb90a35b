//! Parsers for the command-line value syntaxes: start points, priority
//! groups and gain files.

use nlpflow::dynamics::GainSet;
use nlpflow::linalg::{Matrix, Vector};
use nlpflow::problem::Dims;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("invalid number `{0}`")]
    Number(String),
    #[error("theta0 is empty")]
    EmptyTheta0,
    #[error("sample range needs `lo,hi` with lo <= hi, got `{0}`")]
    SampleRange(String),
    #[error("fixed component `{0}` must look like `i=value` with 1 <= i")]
    FixedComponent(String),
    #[error("theta0 has {got} components, the problem has {expected}")]
    Theta0Length { expected: usize, got: usize },
    #[error("fixed component x{index} exceeds the problem dimension {n}")]
    FixedOutOfRange { index: usize, n: usize },
    #[error("invalid row `{0}` in priority groups (rows are numbered from 1)")]
    PtsRow(String),
    #[error("priority group {0} is empty")]
    PtsEmptyGroup(usize),
    #[error("invalid gains file: {0}")]
    GainsJson(String),
    #[error("{name} must be {expected}, got {got}")]
    GainShape {
        name: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid gains: {0}")]
    Gains(String),
    #[error("--size applies only to built-in problems")]
    SizeForFile,
    #[error("`{0}` is neither a built-in problem nor an existing file (see `nlpflow list`)")]
    NoSuchProblem(String),
}

fn number(s: &str) -> Result<f64, InputError> {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(InputError::Number(t.to_string())),
    }
}

/// Start point syntax: `v1,v2,...` or `sample:lo,hi[;i=v;...]`.
///
/// The sampled form draws every component uniformly from `[lo, hi]`, then
/// overwrites the 1-based components listed after `;`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Theta0 {
    Explicit { values: Vec<f64> },
    Sample { lo: f64, hi: f64, fixed: Vec<(usize, f64)> },
}

pub fn parse_theta0(text: &str) -> Result<Theta0, InputError> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix("sample:") {
        let mut parts = rest.split(';');
        let range = parts.next().unwrap_or_default();
        let bounds: Vec<&str> = range.split(',').collect();
        let [lo, hi] = bounds[..] else {
            return Err(InputError::SampleRange(range.to_string()));
        };
        let (lo, hi) = (number(lo)?, number(hi)?);
        if lo > hi {
            return Err(InputError::SampleRange(range.to_string()));
        }
        let mut fixed = Vec::new();
        for part in parts {
            let bad = || InputError::FixedComponent(part.to_string());
            let (i, v) = part.split_once('=').ok_or_else(bad)?;
            let i: usize = i.trim().parse().map_err(|_| bad())?;
            if i == 0 {
                return Err(bad());
            }
            fixed.push((i - 1, number(v)?));
        }
        return Ok(Theta0::Sample { lo, hi, fixed });
    }
    if text.is_empty() {
        return Err(InputError::EmptyTheta0);
    }
    let values = text.split(',').map(number).collect::<Result<Vec<_>, _>>()?;
    Ok(Theta0::Explicit { values })
}

impl Theta0 {
    /// Draws a start point; explicit points ignore `rng`.
    pub fn resolve(&self, n: usize, rng: &mut impl Rng) -> Result<Vector, InputError> {
        match self {
            Theta0::Explicit { values } => {
                if values.len() != n {
                    return Err(InputError::Theta0Length {
                        expected: n,
                        got: values.len(),
                    });
                }
                Ok(Vector::from_row_slice(values))
            }
            Theta0::Sample { lo, hi, fixed } => {
                let mut v = Vector::from_fn(n, |_, _| rng.random_range(*lo..=*hi));
                for &(i, x) in fixed {
                    if i >= n {
                        return Err(InputError::FixedOutOfRange { index: i + 1, n });
                    }
                    v[i] = x;
                }
                Ok(v)
            }
        }
    }
}

/// `"1,2,3;4,5"`: groups separated by `;`, 1-based rows separated by `,`.
/// Returns 0-based rows; whether they partition the rows is checked later.
pub fn parse_pts(text: &str) -> Result<Vec<Vec<usize>>, InputError> {
    text.split(';')
        .enumerate()
        .map(|(k, group)| {
            if group.trim().is_empty() {
                return Err(InputError::PtsEmptyGroup(k + 1));
            }
            group
                .split(',')
                .map(|row| match row.trim().parse::<usize>() {
                    Ok(i) if i >= 1 => Ok(i - 1),
                    _ => Err(InputError::PtsRow(row.trim().to_string())),
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MatrixGain {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum VectorGain {
    Scalar(f64),
    Full(Vec<f64>),
}

/// Gain file contents. Missing entries fall back to the scalar flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub k_theta: Option<MatrixGain>,
    pub k_h: Option<MatrixGain>,
    pub k_g: Option<VectorGain>,
}

pub fn parse_gains_json(text: &str) -> Result<GainsFile, InputError> {
    let file: GainsFile = serde_json::from_str(text).map_err(|e| InputError::GainsJson(e.to_string()))?;
    let check = |name, m: &Option<MatrixGain>| {
        if let Some(MatrixGain::Full(rows)) = m {
            let width = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != width) {
                return Err(InputError::GainShape {
                    name,
                    expected: "a rectangular matrix".into(),
                    got: "ragged rows".into(),
                });
            }
        }
        Ok(())
    };
    check("k_theta", &file.k_theta)?;
    check("k_h", &file.k_h)?;
    Ok(file)
}

fn matrix(name: &'static str, gain: Option<&MatrixGain>, fallback: f64, size: usize) -> Result<Matrix, InputError> {
    match gain {
        None => Ok(Matrix::identity(size, size) * fallback),
        Some(MatrixGain::Scalar(k)) => Ok(Matrix::identity(size, size) * *k),
        Some(MatrixGain::Full(rows)) => {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.len() != size || cols != size {
                return Err(InputError::GainShape {
                    name,
                    expected: format!("{size}x{size}"),
                    got: format!("{}x{cols}", rows.len()),
                });
            }
            Ok(Matrix::from_fn(size, size, |i, j| rows[i][j]))
        }
    }
}

/// Scalar gains `(k_theta, k_h, k_g)` expand to `k I` and `k 1`; entries in
/// `file` replace them.
pub fn build_gains(dims: Dims, scalars: (f64, f64, f64), file: Option<&GainsFile>) -> Result<GainSet, InputError> {
    let empty = GainsFile::default();
    let file = file.unwrap_or(&empty);
    let k_theta = matrix("k_theta", file.k_theta.as_ref(), scalars.0, dims.n)?;
    let k_h = matrix("k_h", file.k_h.as_ref(), scalars.1, dims.s)?;
    let k_g = match &file.k_g {
        None => Vector::from_element(dims.r, scalars.2),
        Some(VectorGain::Scalar(k)) => Vector::from_element(dims.r, *k),
        Some(VectorGain::Full(v)) if v.len() == dims.r => Vector::from_row_slice(v),
        Some(VectorGain::Full(v)) => {
            return Err(InputError::GainShape {
                name: "k_g",
                expected: format!("length {}", dims.r),
                got: v.len().to_string(),
            })
        }
    };
    GainSet::new(k_theta, k_h, k_g).map_err(|e| InputError::Gains(e.to_string()))
}
