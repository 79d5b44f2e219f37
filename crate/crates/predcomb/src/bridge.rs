//! Bridge matrices: row-stochastic, row-sparse alignments from the main
//! instance set to a reference instance set, initialized from a small set of
//! coupling labels and evolved by diffusion over two anisotropic Laplacians.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{FeatureGraph, SparseRows};
use crate::manifold::{manifold_metric, PredictionVector};

/// Dense bridge solves are capped at this many instances per side.
pub const DENSE_SIZE_LIMIT: usize = 10_000;

/// Known instance pairings between the main set and one reference set.
#[derive(Debug, Clone)]
pub struct CouplingLabels {
    pairs: Vec<(usize, usize)>,
    n_main: usize,
    n_ref: usize,
}

impl CouplingLabels {
    pub fn new(pairs: Vec<(usize, usize)>, n_main: usize, n_ref: usize) -> Result<Self> {
        let mut seen_main = vec![false; n_main];
        let mut seen_ref = vec![false; n_ref];
        for &(i, j) in &pairs {
            if i >= n_main {
                return Err(Error::IndexOutOfRange {
                    side: "main",
                    index: i,
                    bound: n_main,
                });
            }
            if j >= n_ref {
                return Err(Error::IndexOutOfRange {
                    side: "reference",
                    index: j,
                    bound: n_ref,
                });
            }
            if seen_main[i] {
                return Err(Error::DuplicateIndex {
                    side: "main",
                    index: i,
                });
            }
            if seen_ref[j] {
                return Err(Error::DuplicateIndex {
                    side: "reference",
                    index: j,
                });
            }
            seen_main[i] = true;
            seen_ref[j] = true;
        }
        Ok(Self {
            pairs,
            n_main,
            n_ref,
        })
    }

    /// Fully coupled: main and reference sets are the same instances in order.
    pub fn identity(n: usize) -> Self {
        Self {
            pairs: (0..n).map(|i| (i, i)).collect(),
            n_main: n,
            n_ref: n,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_main(&self) -> usize {
        self.n_main
    }

    pub fn n_ref(&self) -> usize {
        self.n_ref
    }
}

/// Row-stochastic, row-sparse alignment from main instances to reference
/// instances. Rows with no mass stay all-zero.
#[derive(Debug, Clone)]
pub struct BridgeMatrix {
    rows: SparseRows,
    sparsity_cap: usize,
}

impl BridgeMatrix {
    pub fn n_main(&self) -> usize {
        self.rows.n_rows()
    }

    pub fn n_ref(&self) -> usize {
        self.rows.n_cols()
    }

    pub fn sparsity_cap(&self) -> usize {
        self.sparsity_cap
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.rows.to_dense()
    }

    pub fn from_dense(m: &DMatrix<f64>, sparsity_cap: usize) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        let mut b = Self {
            rows: SparseRows::from_rows(rows, m.ncols()),
            sparsity_cap,
        };
        sparsify_and_normalize(&mut b);
        b
    }
}

/// Initial bridge: 1 exactly at the labeled pairs, 0 elsewhere.
pub fn init_bridge(labels: &CouplingLabels, sparsity_cap: usize) -> BridgeMatrix {
    let mut rows = vec![Vec::new(); labels.n_main()];
    for &(i, j) in labels.pairs() {
        rows[i].push((j, 1.0));
    }
    BridgeMatrix {
        rows: SparseRows::from_rows(rows, labels.n_ref()),
        sparsity_cap,
    }
}

/// Clamps negatives, keeps the K largest entries per row (ties resolved to
/// the lowest column index), then renormalizes nonzero rows to sum 1.
fn sparsify_and_normalize(b: &mut BridgeMatrix) {
    let cap = b.sparsity_cap.max(1);
    for row in b.rows.rows_mut() {
        row.retain(|&(_, w)| w > 0.0);
        if row.len() > cap {
            // largest values win; ties prefer the lower column index
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            row.truncate(cap);
            row.sort_by_key(|&(j, _)| j);
        }
        let sum: f64 = row.iter().map(|&(_, w)| w).sum();
        if sum > 0.0 {
            for e in row.iter_mut() {
                e.1 /= sum;
            }
        } else {
            row.clear();
        }
    }
}

/// One explicit-Euler sweep: B <- B - delta * Lap_f B, then
/// B <- B - delta * B Lap_k, then clamp, sparsify to K, renormalize.
pub fn bridge_step_explicit(
    b: &BridgeMatrix,
    g_f: &FeatureGraph,
    g_k: &FeatureGraph,
    delta_b: f64,
    sparsity_cap: usize,
) -> Result<BridgeMatrix> {
    if g_f.n() != b.n_main() {
        return Err(Error::LengthMismatch {
            expected: b.n_main(),
            got: g_f.n(),
        });
    }
    if g_k.n() != b.n_ref() {
        return Err(Error::LengthMismatch {
            expected: b.n_ref(),
            got: g_k.n(),
        });
    }
    let n_main = b.n_main();
    let n_ref = b.n_ref();
    let wf = g_f.norm_adjacency();
    let wk = g_k.norm_adjacency();

    let mut scratch = vec![0.0f64; n_ref];
    let mut touched: Vec<usize> = Vec::new();
    let accumulate = |scratch: &mut Vec<f64>, touched: &mut Vec<usize>, j: usize, v: f64| {
        if scratch[j] == 0.0 && v != 0.0 {
            touched.push(j);
        }
        scratch[j] += v;
    };

    // left update: rows mix with graph-neighbor rows
    // (I - d*Lap) B = (1-d) B + d * Wf_norm B
    let mut mid: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_main);
    for i in 0..n_main {
        for &(j, w) in b.rows.row(i) {
            accumulate(&mut scratch, &mut touched, j, (1.0 - delta_b) * w);
        }
        for &(nbr, a) in wf.row(i) {
            for &(j, w) in b.rows.row(nbr) {
                accumulate(&mut scratch, &mut touched, j, delta_b * a * w);
            }
        }
        touched.sort_unstable();
        let row: Vec<(usize, f64)> = touched.iter().map(|&j| (j, scratch[j])).collect();
        for &j in &touched {
            scratch[j] = 0.0;
        }
        touched.clear();
        mid.push(row);
    }

    // right update: columns mix with reference-graph neighbors
    // B (I - d*Lap_k) = (1-d) B + d * B Wk_norm
    let mut out_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_main);
    for row in &mid {
        for &(j, w) in row {
            accumulate(&mut scratch, &mut touched, j, (1.0 - delta_b) * w);
            for &(l, a) in wk.row(j) {
                accumulate(&mut scratch, &mut touched, l, delta_b * w * a);
            }
        }
        touched.sort_unstable();
        let out: Vec<(usize, f64)> = touched.iter().map(|&j| (j, scratch[j])).collect();
        for &j in &touched {
            scratch[j] = 0.0;
        }
        touched.clear();
        out_rows.push(out);
    }

    let mut out = BridgeMatrix {
        rows: SparseRows::from_rows(out_rows, n_ref),
        sparsity_cap,
    };
    sparsify_and_normalize(&mut out);
    Ok(out)
}

/// Solves (I + d*Lap_f) V + d * V Lap_k = B0 exactly.
///
/// Both Laplacians are symmetric, so their real Schur forms are diagonal:
/// with Lap_f = U Lf U' and Lap_k = P Lk P', the transformed unknown
/// Y = U' V P satisfies (1 + d*lf_i + d*lk_j) Y_ij = (U' B0 P)_ij.
pub fn solve_sylvester(
    b0: &DMatrix<f64>,
    lap_f: &DMatrix<f64>,
    lap_k: &DMatrix<f64>,
    delta_b: f64,
) -> Result<DMatrix<f64>> {
    if !(delta_b > 0.0) {
        return Err(Error::NonPositiveScale(delta_b));
    }
    let ef = SymmetricEigen::new(lap_f.clone());
    let ek = SymmetricEigen::new(lap_k.clone());
    solve_sylvester_eigen(
        b0,
        (&ef.eigenvectors, &ef.eigenvalues),
        (&ek.eigenvectors, &ek.eigenvalues),
        delta_b,
    )
}

/// Same solve given precomputed Laplacian eigendecompositions
/// (vectors, values); avoids refactorizing when graphs are reused.
pub fn solve_sylvester_eigen(
    b0: &DMatrix<f64>,
    (uf, lf): (&DMatrix<f64>, &DVector<f64>),
    (uk, lk): (&DMatrix<f64>, &DVector<f64>),
    delta_b: f64,
) -> Result<DMatrix<f64>> {
    if !(delta_b > 0.0) {
        return Err(Error::NonPositiveScale(delta_b));
    }
    let mut y = uf.transpose() * b0 * uk;
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            let denom = 1.0 + delta_b * lf[i] + delta_b * lk[j];
            if denom.abs() < 1e-14 {
                return Err(Error::SingularSystem);
            }
            y[(i, j)] /= denom;
        }
    }
    Ok(uf * y * uk.transpose())
}

/// One implicit-Euler bridge step: dense Sylvester solve followed by the same
/// sparsify-and-normalize pass the explicit path applies.
pub fn bridge_step_implicit(
    b0: &BridgeMatrix,
    g_f: &FeatureGraph,
    g_k: &FeatureGraph,
    delta_b: f64,
) -> Result<BridgeMatrix> {
    let (n_main, n_ref) = (b0.n_main(), b0.n_ref());
    if n_main > DENSE_SIZE_LIMIT || n_ref > DENSE_SIZE_LIMIT {
        return Err(Error::SizeLimitExceeded {
            limit: DENSE_SIZE_LIMIT,
            got: n_main.max(n_ref),
        });
    }
    if g_f.n() != n_main {
        return Err(Error::LengthMismatch {
            expected: n_main,
            got: g_f.n(),
        });
    }
    if g_k.n() != n_ref {
        return Err(Error::LengthMismatch {
            expected: n_ref,
            got: g_k.n(),
        });
    }
    let ef = g_f.laplacian_eigen();
    let ek = g_k.laplacian_eigen();
    let v = solve_sylvester_eigen(
        &b0.to_dense(),
        (&ef.0, &ef.1),
        (&ek.0, &ek.1),
        delta_b,
    )?;
    Ok(BridgeMatrix::from_dense(&v, b0.sparsity_cap))
}

/// Pulls a reference's evaluations onto the main instance set: B * g.
pub fn aligned_reference(b: &BridgeMatrix, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != b.n_ref() {
        return Err(Error::LengthMismatch {
            expected: b.n_ref(),
            got: g.len(),
        });
    }
    Ok(b.rows.mul_vec(g))
}

/// Centered-gram alignment between f and the bridged reference. By the rank-1
/// structure of the prediction gram matrices this equals metric(f, B*g)^2.
pub fn alignment_score(f: &PredictionVector, g: &[f64], b: &BridgeMatrix) -> Result<f64> {
    if f.len() != b.n_main() {
        return Err(Error::LengthMismatch {
            expected: b.n_main(),
            got: f.len(),
        });
    }
    let bg = aligned_reference(b, g)?;
    let rho = manifold_metric(f, &PredictionVector::new(bg)?)?;
    Ok(rho * rho)
}
