//! Trains the linear ranker on pairwise orderings of a synthetic linear
//! utility and reports held-out ranking accuracy across the lambda grid.

use nalgebra::DMatrix;
use predcomb::rank::{
    ranking_accuracy, train_linear_ranker, RankPairs, DEFAULT_LAMBDA_GRID,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn main() {
    let (n, d) = (250, 6);
    let mut rng = StdRng::seed_from_u64(5);
    let w_true: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let features = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
    let utility: Vec<f64> = (0..n)
        .map(|i| {
            (0..d).map(|j| features[(i, j)] * w_true[j]).sum::<f64>()
                + 0.1 * rng.gen_range(-1.0..1.0)
        })
        .collect();

    let mut draw_pairs = |count: usize| -> RankPairs {
        let mut pairs = Vec::new();
        while pairs.len() < count {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if utility[i] > utility[j] {
                pairs.push((i, j));
            }
        }
        RankPairs::new(pairs, n).unwrap()
    };
    let train = draw_pairs(400);
    let val = draw_pairs(200);
    let test = draw_pairs(500);

    let ranker = train_linear_ranker(&features, &train, &DEFAULT_LAMBDA_GRID, Some(&val)).unwrap();
    let preds = ranker.predict(&features);
    println!(
        "train acc {:.4}, val acc {:.4}, test acc {:.4}",
        ranking_accuracy(&preds, &train).unwrap(),
        ranking_accuracy(&preds, &val).unwrap(),
        ranking_accuracy(&preds, &test).unwrap()
    );

    for lambda in DEFAULT_LAMBDA_GRID {
        let r = train_linear_ranker(&features, &train, &[lambda], None).unwrap();
        let p = r.predict(&features);
        println!(
            "lambda {lambda:>7}: test acc {:.4}",
            ranking_accuracy(&p, &test).unwrap()
        );
    }
}
