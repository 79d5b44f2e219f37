//! k-NN affinity graphs over a feature domain and the anisotropic normalized
//! Laplacians built from them.
//!
//! Edge weights combine feature proximity with predictor-value proximity:
//! W = W^x o W^f with W^x_ij = exp(-|x_i-x_j|^2 / sigma_x^2) on the N nearest
//! neighbors (symmetrized by max) and W^f_ij = exp(-(f_i-f_j)^2 / sigma_f^2).
//! sigma_x^2 is set to twice the mean squared distance within the local
//! N-neighborhood. The Laplacian is I - D^{-1/2} W D^{-1/2}.

use std::sync::{Arc, OnceLock};

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-major sparse matrix with column-sorted rows.
#[derive(Debug, Clone)]
pub struct SparseRows {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_cols,
            rows: vec![Vec::new(); n_rows],
        }
    }

    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, n_cols: usize) -> Self {
        Self { n_cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut Vec<Vec<(usize, f64)>> {
        &mut self.rows
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows(), self.n_cols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] = w;
            }
        }
        m
    }
}

/// k-NN affinity plus its symmetric-normalized adjacency over one feature
/// domain, anisotropically weighted by the domain's predictor evaluations.
#[derive(Debug, Clone)]
pub struct FeatureGraph {
    affinity: SparseRows,
    norm_adjacency: SparseRows,
    lap_eigen: Arc<OnceLock<(DMatrix<f64>, DVector<f64>)>>,
    sigma_x2: f64,
    sigma_f2: f64,
    n_neighbors: usize,
}

impl FeatureGraph {
    pub fn n(&self) -> usize {
        self.affinity.n_rows()
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    pub fn sigma_f2(&self) -> f64 {
        self.sigma_f2
    }

    pub fn n_neighbors(&self) -> usize {
        self.n_neighbors
    }

    pub fn affinity(&self) -> &SparseRows {
        &self.affinity
    }

    /// D^{-1/2} W D^{-1/2}, the part of the Laplacian that is not identity.
    pub fn norm_adjacency(&self) -> &SparseRows {
        &self.norm_adjacency
    }

    /// Applies the normalized Laplacian: x - D^{-1/2} W D^{-1/2} x.
    pub fn apply_laplacian(&self, x: &[f64]) -> Vec<f64> {
        let wx = self.norm_adjacency.mul_vec(x);
        x.iter().zip(wx).map(|(xi, wi)| xi - wi).collect()
    }

    /// Dense I - D^{-1/2} W D^{-1/2}, for small-n solves and oracles.
    pub fn laplacian_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::identity(n, n) - self.norm_adjacency.to_dense()
    }

    /// Eigendecomposition (vectors, values) of the dense normalized Laplacian,
    /// computed once and shared across clones of this graph.
    pub fn laplacian_eigen(&self) -> &(DMatrix<f64>, DVector<f64>) {
        self.lap_eigen.get_or_init(|| {
            let e = nalgebra::SymmetricEigen::new(self.laplacian_dense());
            (e.eigenvectors, e.eigenvalues)
        })
    }
}

/// Indices of the `n_neighbors` nearest neighbors of each row (self excluded),
/// with squared distances.
fn knn(features: &DMatrix<f64>, n_neighbors: usize) -> Vec<Vec<(usize, f64)>> {
    let n = features.nrows();
    let d = features.ncols();
    // kd-trees win on large low-dimensional sets; brute force otherwise.
    if d <= 12 && n > 2048 {
        let mut tree = KdTree::new(d);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|i| features.row(i).iter().copied().collect())
            .collect();
        for (i, p) in pts.iter().enumerate() {
            tree.add(p.as_slice(), i).expect("finite coordinates");
        }
        pts.iter()
            .enumerate()
            .map(|(i, p)| {
                tree.nearest(p.as_slice(), n_neighbors + 1, &squared_euclidean)
                    .expect("finite coordinates")
                    .into_iter()
                    .filter(|&(_, &j)| j != i)
                    .take(n_neighbors)
                    .map(|(d2, &j)| (j, d2))
                    .collect()
            })
            .collect()
    } else {
        (0..n)
            .map(|i| {
                let mut dists: Vec<(usize, f64)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let d2 = (0..d)
                            .map(|c| {
                                let diff = features[(i, c)] - features[(j, c)];
                                diff * diff
                            })
                            .sum::<f64>();
                        (j, d2)
                    })
                    .collect();
                dists.select_nth_unstable_by(n_neighbors - 1, |a, b| {
                    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
                });
                dists.truncate(n_neighbors);
                dists
            })
            .collect()
    }
}

/// Builds the anisotropic feature graph: Gaussian feature affinities over the
/// N nearest neighbors, modulated by prediction-gap affinities, symmetrized
/// by elementwise max, then normalized into D^{-1/2} W D^{-1/2}.
pub fn build_feature_graph(
    features: &DMatrix<f64>,
    predictions: &[f64],
    n_neighbors: usize,
    sigma_f2: f64,
) -> Result<FeatureGraph> {
    let n = features.nrows();
    if n_neighbors < 1 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    if n < n_neighbors + 1 {
        return Err(Error::TooFewPoints {
            needed: n_neighbors + 1,
            got: n,
        });
    }
    if predictions.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: predictions.len(),
        });
    }
    if !(sigma_f2 > 0.0) {
        return Err(Error::NonPositiveScale(sigma_f2));
    }

    let neighbors = knn(features, n_neighbors);

    // sigma_x^2: twice the mean squared distance within local N-neighborhoods
    let mut total = 0.0;
    let mut count = 0usize;
    for row in &neighbors {
        for &(_, d2) in row {
            total += d2;
            count += 1;
        }
    }
    let mean_d2 = if count > 0 { total / count as f64 } else { 0.0 };
    let sigma_x2 = if mean_d2 > 0.0 { 2.0 * mean_d2 } else { 1.0 };

    // directed affinities on the k-NN pattern
    let mut rows: Vec<Vec<(usize, f64)>> = neighbors
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            nbrs.iter()
                .map(|&(j, d2)| {
                    let wx = (-d2 / sigma_x2).exp();
                    let gap = predictions[i] - predictions[j];
                    let wf = (-(gap * gap) / sigma_f2).exp();
                    (j, wx * wf)
                })
                .collect()
        })
        .collect();

    // symmetrize by elementwise max
    let mut sym: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, w) in row {
            sym[i].push((j, w));
            sym[j].push((i, w));
        }
    }
    for row in sym.iter_mut() {
        row.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
        row.dedup_by(|later, first| {
            if later.0 == first.0 {
                first.1 = first.1.max(later.1);
                true
            } else {
                false
            }
        });
    }
    rows = sym;

    let degrees: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().map(|&(_, w)| w).sum::<f64>())
        .collect();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();

    let norm_rows: Vec<Vec<(usize, f64)>> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|&(j, w)| (j, inv_sqrt[i] * w * inv_sqrt[j]))
                .collect()
        })
        .collect();

    Ok(FeatureGraph {
        affinity: SparseRows::from_rows(rows, n),
        norm_adjacency: SparseRows::from_rows(norm_rows, n),
        lap_eigen: Arc::new(OnceLock::new()),
        sigma_x2,
        sigma_f2,
        n_neighbors,
    })
}
