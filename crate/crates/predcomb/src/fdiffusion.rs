//! One implicit-Euler denoising step of the main predictor against fixed
//! aligned references.
//!
//! The step maximizes O(p) = <p,f>_M^2 + delta * sum_k w_k <p,g^k>_M^2, a
//! generalized Rayleigh quotient p'Qp / p'Cp with Q = SS'. Because every
//! column of S is centered, the top generalized eigenvector of (Q, C) is the
//! top ordinary eigenvector of Q, which in turn is the maximal left singular
//! vector of S. We only ever form the (m+1)x(m+1) Gram S'S, so the solve is
//! O(m^2 n).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::manifold::{project_to_manifold, ManifoldPoint, PredictionVector};

/// Everything needed for one f-diffusion step: the current predictor, the
/// aligned references, their task affinities, and the step size.
#[derive(Debug, Clone)]
pub struct ScoreProblem {
    f_current: ManifoldPoint,
    aligned_refs: Vec<ManifoldPoint>,
    weights: Vec<f64>,
    delta: f64,
}

impl ScoreProblem {
    pub fn new(
        f_current: ManifoldPoint,
        aligned_refs: Vec<ManifoldPoint>,
        weights: Vec<f64>,
        delta: f64,
    ) -> Result<Self> {
        if weights.len() != aligned_refs.len() {
            return Err(Error::LengthMismatch {
                expected: aligned_refs.len(),
                got: weights.len(),
            });
        }
        let n = f_current.len();
        for g in &aligned_refs {
            if g.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: g.len(),
                });
            }
        }
        if !(delta >= 0.0) {
            return Err(Error::NonPositiveScale(delta));
        }
        Ok(Self {
            f_current,
            aligned_refs,
            weights,
            delta,
        })
    }

    pub fn n(&self) -> usize {
        self.f_current.len()
    }

    pub fn m(&self) -> usize {
        self.aligned_refs.len()
    }

    pub fn f_current(&self) -> &ManifoldPoint {
        &self.f_current
    }
}

/// Builds the n x (m+1) matrix S whose columns are the centered, normalized
/// predictor and the sqrt(delta * w_k)-scaled references.
pub fn build_s_matrix(p: &ScoreProblem) -> DMatrix<f64> {
    let n = p.n();
    let m = p.m();
    let mut s = DMatrix::zeros(n, m + 1);
    for (i, &v) in p.f_current.values().iter().enumerate() {
        s[(i, 0)] = v;
    }
    for k in 0..m {
        let scale = (p.delta * p.weights[k]).sqrt();
        for (i, &v) in p.aligned_refs[k].values().iter().enumerate() {
            s[(i, k + 1)] = scale * v;
        }
    }
    s
}

/// Evaluates the score functional at a candidate, equal to the generalized
/// Rayleigh quotient p'Qp / p'Cp.
pub fn score(p: &ScoreProblem, candidate: &PredictionVector) -> Result<f64> {
    if candidate.len() != p.n() {
        return Err(Error::LengthMismatch {
            expected: p.n(),
            got: candidate.len(),
        });
    }
    let c = project_to_manifold(candidate)?;
    let mut total = c.dot(&p.f_current).powi(2);
    for (g, &w) in p.aligned_refs.iter().zip(&p.weights) {
        total += p.delta * w * c.dot(g).powi(2);
    }
    Ok(total)
}

/// Outcome of a step: the new predictor plus a degeneracy warning when the
/// top eigenvalue was (numerically) tied.
#[derive(Debug, Clone)]
pub struct FStepOutcome {
    pub point: ManifoldPoint,
    pub degenerate_spectrum: bool,
}

/// One f-diffusion step: the maximal left singular vector of S, sign-fixed so
/// that its metric with `f_initial` is nonnegative.
pub fn diffuse_f_step(p: &ScoreProblem, f_initial: &ManifoldPoint) -> Result<FStepOutcome> {
    if f_initial.len() != p.n() {
        return Err(Error::LengthMismatch {
            expected: p.n(),
            got: f_initial.len(),
        });
    }
    let s = build_s_matrix(p);
    let gram = s.transpose() * &s; // (m+1) x (m+1)
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order[0];
    let lambda = eig.eigenvalues[top];
    let degenerate = order.len() > 1 && (lambda - eig.eigenvalues[order[1]]).abs() <= 1e-12 * lambda.max(1.0);

    let recover = |idx: usize| -> Option<DVector<f64>> {
        let lam = eig.eigenvalues[idx];
        if lam <= 0.0 {
            return None;
        }
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into();
        // deterministic sign before the final fix
        if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-12) {
            if lead < 0.0 {
                v.neg_mut();
            }
        }
        Some(&s * v / lam.sqrt())
    };

    let u = if degenerate {
        log::warn!("top singular value of S has multiplicity > 1; tie-breaking by metric with f(0)");
        // among tied eigenpairs pick the one best correlated with f(0)
        let tied: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| (lambda - eig.eigenvalues[i]).abs() <= 1e-12 * lambda.max(1.0))
            .collect();
        let f0 = DVector::from_column_slice(f_initial.values());
        tied.into_iter()
            .filter_map(&recover)
            .max_by(|a, b| {
                let ca = a.dot(&f0).abs() / a.norm();
                let cb = b.dot(&f0).abs() / b.norm();
                ca.total_cmp(&cb)
            })
    } else {
        recover(top)
    };
    let u = u.ok_or(Error::ZeroVariance)?;

    let mut raw = u.as_slice().to_vec();
    let point = project_to_manifold(&PredictionVector::new(raw.clone())?)?;
    if point.dot(f_initial) < 0.0 {
        for x in raw.iter_mut() {
            *x = -*x;
        }
        let flipped = project_to_manifold(&PredictionVector::new(raw)?)?;
        return Ok(FStepOutcome {
            point: flipped,
            degenerate_spectrum: degenerate,
        });
    }
    Ok(FStepOutcome {
        point,
        degenerate_spectrum: degenerate,
    })
}
