//! Linear rank predictors trained on pairwise labels, and ranking accuracy.
//!
//! The trainer minimizes sum_k (max(1 - (w'x_i - w'x_j), 0))^2 + lambda |w|^2
//! by full-batch gradient descent with backtracking step halving. The
//! objective is convex, so any descent method reaching a small gradient
//! suffices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Observed pairwise order labels: (i, j) means instance i outranks j.
#[derive(Debug, Clone)]
pub struct RankPairs {
    pairs: Vec<(usize, usize)>,
    n: usize,
}

impl RankPairs {
    pub fn new(pairs: Vec<(usize, usize)>, n: usize) -> Result<Self> {
        for &(i, j) in &pairs {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    side: "pair.i",
                    index: i,
                    bound: n,
                });
            }
            if j >= n {
                return Err(Error::IndexOutOfRange {
                    side: "pair.j",
                    index: j,
                    bound: n,
                });
            }
            if i == j {
                return Err(Error::DuplicateIndex {
                    side: "pair",
                    index: i,
                });
            }
        }
        Ok(Self { pairs, n })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// A linear ranker f(x) = w'x.
#[derive(Debug, Clone)]
pub struct LinearRanker {
    pub weights: DVector<f64>,
    pub lambda_s: f64,
}

impl LinearRanker {
    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (features * &self.weights).iter().copied().collect()
    }
}

/// Squared hinge rank loss: (max(1 - (fi - fj), 0))^2. Zero iff fi - fj >= 1.
pub fn rank_loss(fi: f64, fj: f64) -> f64 {
    let slack = (1.0 - (fi - fj)).max(0.0);
    slack * slack
}

const MAX_ITERS: usize = 5_000;
const GRAD_TOL: f64 = 1e-8;

fn objective(features: &DMatrix<f64>, pairs: &RankPairs, w: &DVector<f64>, lambda: f64) -> f64 {
    let scores = features * w;
    let mut total = lambda * w.norm_squared();
    for &(i, j) in pairs.pairs() {
        total += rank_loss(scores[i], scores[j]);
    }
    total
}

fn gradient(
    features: &DMatrix<f64>,
    pairs: &RankPairs,
    w: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let scores = features * w;
    let mut grad = 2.0 * lambda * w;
    for &(i, j) in pairs.pairs() {
        let slack = 1.0 - (scores[i] - scores[j]);
        if slack > 0.0 {
            // d/dw (slack^2) = -2 slack (x_i - x_j)
            let diff = features.row(i) - features.row(j);
            grad -= 2.0 * slack * diff.transpose();
        }
    }
    grad
}

fn descend(features: &DMatrix<f64>, pairs: &RankPairs, lambda: f64) -> DVector<f64> {
    let d = features.ncols();
    let mut w = DVector::zeros(d);
    let mut obj = objective(features, pairs, &w, lambda);
    let mut step = 1.0;
    for _ in 0..MAX_ITERS {
        let grad = gradient(features, pairs, &w, lambda);
        let gnorm = grad.norm();
        if gnorm < GRAD_TOL {
            break;
        }
        // backtracking halving from the last accepted step, with one growth try
        step *= 2.0;
        let mut accepted = false;
        while step > 1e-16 {
            let cand = &w - step * &grad;
            let cand_obj = objective(features, pairs, &cand, lambda);
            if cand_obj < obj {
                w = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    w
}

/// Trains a linear ranker. When `lambda_grid` has several values, the one
/// maximizing accuracy on `val_pairs` wins; ties prefer stronger
/// regularization.
pub fn train_linear_ranker(
    features: &DMatrix<f64>,
    train_pairs: &RankPairs,
    lambda_grid: &[f64],
    val_pairs: Option<&RankPairs>,
) -> Result<LinearRanker> {
    if train_pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    if features.nrows() < 2 || features.ncols() < 1 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: features.nrows(),
        });
    }
    let grid: Vec<f64> = if lambda_grid.is_empty() {
        DEFAULT_LAMBDA_GRID.to_vec()
    } else {
        lambda_grid.to_vec()
    };

    let mut best: Option<(f64, f64, DVector<f64>)> = None; // (acc, lambda, w)
    for &lambda in &grid {
        let w = descend(features, train_pairs, lambda);
        let acc = match val_pairs {
            Some(vp) if !vp.is_empty() => {
                let preds: Vec<f64> = (features * &w).iter().copied().collect();
                ranking_accuracy(&preds, vp)?
            }
            _ => 0.0,
        };
        let better = match &best {
            None => true,
            Some((ba, bl, _)) => acc > *ba || (acc == *ba && lambda > *bl),
        };
        if better {
            best = Some((acc, lambda, w));
        }
        if grid.len() == 1 {
            break;
        }
    }
    let (_, lambda_s, weights) = best.expect("grid is nonempty");
    Ok(LinearRanker { weights, lambda_s })
}

/// Default regularization grid used when none is supplied.
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0];

/// Fraction of pairs (i, j) with predictions[i] > predictions[j]. Ties count
/// as incorrect.
pub fn ranking_accuracy(predictions: &[f64], pairs: &RankPairs) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    if pairs.n() > predictions.len() {
        return Err(Error::LengthMismatch {
            expected: pairs.n(),
            got: predictions.len(),
        });
    }
    let correct = pairs
        .pairs()
        .iter()
        .filter(|&&(i, j)| predictions[i] > predictions[j])
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rank_loss_cases() {
        assert_eq!(rank_loss(2.0, 1.0), 0.0);
        assert_eq!(rank_loss(1.0, 1.0), 1.0);
        assert_eq!(rank_loss(0.0, 1.0), 4.0);
        assert_eq!(rank_loss(5.0, 1.0), 0.0);
    }

    #[test]
    fn separable_one_dimensional_case() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let pairs = RankPairs::new(vec![(1, 0)], 2).unwrap();
        let r = train_linear_ranker(&x, &pairs, &[0.0], None).unwrap();
        assert!(r.weights[0] > 0.0);
        let obj = objective(&x, &pairs, &r.weights, 0.0);
        assert!(obj < 1e-6, "objective {obj} not near zero");
    }

    #[test]
    fn contradictory_pairs_reach_stationary_point() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let pairs = RankPairs::new(vec![(0, 1), (1, 0)], 2).unwrap();
        let r = train_linear_ranker(&x, &pairs, &[0.0], None).unwrap();
        let g = gradient(&x, &pairs, &r.weights, 0.0);
        assert!(g.norm() < 1e-6, "gradient norm {}", g.norm());
        // 1-d closed form: minimize (max(1-t,0))^2 + (max(1+t,0))^2 over t = w
        // symmetric, optimum at t = 0 with objective 2
        assert_abs_diff_eq!(r.weights[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(objective(&x, &pairs, &r.weights, 0.0), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn heavy_regularization_shrinks_weights() {
        let mut rng = StdRng::seed_from_u64(1);
        let x = DMatrix::from_fn(10, 3, |_, _| rng.gen_range(-1.0f64..1.0));
        let pairs = RankPairs::new(vec![(0, 1), (2, 3), (4, 5)], 10).unwrap();
        let small = train_linear_ranker(&x, &pairs, &[1e-4], None).unwrap();
        let large = train_linear_ranker(&x, &pairs, &[1e6], None).unwrap();
        assert!(large.weights.norm() < 1e-3);
        assert!(large.weights.norm() < small.weights.norm());
    }

    #[test]
    fn objective_never_worse_than_zero_weights() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..5 {
            let n = rng.gen_range(4..12);
            let d = rng.gen_range(1..5);
            let x = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0f64..1.0));
            let pairs: Vec<(usize, usize)> = (0..6)
                .map(|_| {
                    let i = rng.gen_range(0..n);
                    let mut j = rng.gen_range(0..n);
                    while j == i {
                        j = rng.gen_range(0..n);
                    }
                    (i, j)
                })
                .collect();
            let pairs = RankPairs::new(pairs, n).unwrap();
            let lambda = rng.gen_range(0.0..1.0);
            let r = train_linear_ranker(&x, &pairs, &[lambda], None).unwrap();
            let at_w = objective(&x, &pairs, &r.weights, lambda);
            let at_zero = objective(&x, &pairs, &DVector::zeros(d), lambda);
            assert!(at_w <= at_zero + 1e-12);
        }
    }

    #[test]
    fn lambda_grid_selects_by_validation_accuracy() {
        // noisy separable data: strong regularization hurts validation accuracy
        let mut rng = StdRng::seed_from_u64(3);
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0f64..1.0));
        let truth: Vec<f64> = (0..n).map(|i| x[(i, 0)] + 0.3 * x[(i, 1)]).collect();
        let mut train = Vec::new();
        let mut val = Vec::new();
        for _ in 0..60 {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n);
            while j == i {
                j = rng.gen_range(0..n);
            }
            let p = if truth[i] > truth[j] { (i, j) } else { (j, i) };
            if rng.gen_bool(0.5) {
                train.push(p);
            } else {
                val.push(p);
            }
        }
        let train = RankPairs::new(train, n).unwrap();
        let val = RankPairs::new(val, n).unwrap();
        let r = train_linear_ranker(&x, &train, &DEFAULT_LAMBDA_GRID, Some(&val)).unwrap();
        let preds = r.predict(&x);
        let acc = ranking_accuracy(&preds, &val).unwrap();
        // every other grid point must do no better (argmax contract)
        for &lambda in DEFAULT_LAMBDA_GRID.iter() {
            let other = train_linear_ranker(&x, &train, &[lambda], Some(&val)).unwrap();
            let other_acc = ranking_accuracy(&other.predict(&x), &val).unwrap();
            assert!(acc >= other_acc - 1e-12);
        }
    }

    #[test]
    fn accuracy_examples() {
        let pairs = RankPairs::new(vec![(0, 1), (1, 2), (0, 2)], 3).unwrap();
        assert_eq!(ranking_accuracy(&[3.0, 2.0, 1.0], &pairs).unwrap(), 1.0);
        assert_eq!(ranking_accuracy(&[1.0, 2.0, 3.0], &pairs).unwrap(), 0.0);
        let tied = RankPairs::new(vec![(0, 1), (0, 2)], 3).unwrap();
        assert_eq!(ranking_accuracy(&[1.0, 1.0, 0.0], &tied).unwrap(), 0.5);
    }

    #[test]
    fn empty_pairs_rejected() {
        let empty = RankPairs::new(vec![], 3).unwrap();
        assert!(matches!(
            ranking_accuracy(&[1.0, 2.0, 3.0], &empty),
            Err(Error::EmptyPairs)
        ));
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(
            train_linear_ranker(&x, &empty, &[0.1], None),
            Err(Error::EmptyPairs)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn accuracy_invariant_under_increasing_transforms(
            preds in proptest::collection::vec(-10.0f64..10.0, 4..20),
            scale in 0.1f64..5.0,
            shift in -5.0f64..5.0,
        ) {
            let n = preds.len();
            let pairs = RankPairs::new(
                (0..n - 1).map(|i| (i, i + 1)).collect(),
                n,
            ).unwrap();
            let base = ranking_accuracy(&preds, &pairs).unwrap();
            // strictly increasing map: affine with positive slope, then tanh-ish
            let mapped: Vec<f64> = preds.iter().map(|&p| (scale * p + shift).atan()).collect();
            let got = ranking_accuracy(&mapped, &pairs).unwrap();
            prop_assert_eq!(base, got);
        }

        #[test]
        fn forward_plus_reverse_accuracy_at_most_one(
            preds in proptest::collection::vec(-10.0f64..10.0, 4..20),
        ) {
            let n = preds.len();
            let pairs = RankPairs::new((0..n - 1).map(|i| (i, i + 1)).collect(), n).unwrap();
            let fwd = ranking_accuracy(&preds, &pairs).unwrap();
            let neg: Vec<f64> = preds.iter().map(|p| -p).collect();
            let rev = ranking_accuracy(&neg, &pairs).unwrap();
            prop_assert!(fwd + rev <= 1.0 + 1e-12);
            if preds.windows(2).all(|w| w[0] != w[1]) {
                prop_assert!((fwd + rev - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn rank_loss_is_convex_on_midpoints(
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            // convexity in the score gap t = fi - fj
            let l = |t: f64| rank_loss(t, 0.0);
            let mid = 0.5 * (a + b);
            prop_assert!(l(mid) <= 0.5 * l(a) + 0.5 * l(b) + 1e-12);
        }
    }
}
