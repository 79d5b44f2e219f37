//! The predictor manifold: centered, unit-norm prediction vectors and the
//! scale/shift-invariant metric between them.
//!
//! A prediction vector is any finite real vector of length >= 2. Projecting it
//! onto the manifold subtracts the mean and divides by the norm of the
//! centered vector, so two predictors that differ by a positive affine map
//! induce the same manifold point and the same rankings.

use crate::error::{Error, Result};

/// Relative threshold under which a centered vector counts as constant.
pub const ZERO_VARIANCE_TOL: f64 = 1e-12;

/// Raw predictor evaluations on a sample, one score per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector {
    values: Vec<f64>,
}

impl PredictionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooShort(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for PredictionVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// A point on the predictor manifold: zero mean, unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    values: Vec<f64>,
}

impl ManifoldPoint {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn as_prediction(&self) -> PredictionVector {
        PredictionVector {
            values: self.values.clone(),
        }
    }

    /// Inner product of two manifold points (their metric, since both are
    /// centered and unit-norm already).
    pub fn dot(&self, other: &ManifoldPoint) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

impl AsRef<[f64]> for ManifoldPoint {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Centers `v` in place and returns (norm of centered vector, norm of input).
fn center(v: &mut [f64]) -> (f64, f64) {
    let raw_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let m = mean(v);
    for x in v.iter_mut() {
        *x -= m;
    }
    let c_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (c_norm, raw_norm)
}

/// Projects a prediction vector onto the manifold by centering and
/// scale-normalization.
pub fn project_to_manifold(v: &PredictionVector) -> Result<ManifoldPoint> {
    let mut out = v.values.clone();
    let (c_norm, raw_norm) = center(&mut out);
    if c_norm < ZERO_VARIANCE_TOL * raw_norm.max(1.0) {
        return Err(Error::ZeroVariance);
    }
    for x in out.iter_mut() {
        *x /= c_norm;
    }
    Ok(ManifoldPoint { values: out })
}

/// Centered-cosine metric between two prediction vectors, in [-1, 1].
///
/// Invariant under positive affine maps of either argument; flips sign when
/// the scale factor is negative.
pub fn manifold_metric(a: &PredictionVector, b: &PredictionVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let pa = project_to_manifold(a)?;
    let pb = project_to_manifold(b)?;
    Ok(pa.dot(&pb).clamp(-1.0, 1.0))
}

/// Metric between a manifold point and a raw prediction vector.
pub fn metric_point_vec(a: &ManifoldPoint, b: &PredictionVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let pb = project_to_manifold(b)?;
    Ok(a.dot(&pb).clamp(-1.0, 1.0))
}

/// Task affinity derived from a metric value: exp(-(1 - rho^2) / sigma^2).
///
/// Strictly increasing in |rho|, equal to 1 at |rho| = 1.
pub fn task_affinity(rho: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::NonPositiveScale(sigma2));
    }
    Ok((-(1.0 - rho * rho) / sigma2).exp())
}
