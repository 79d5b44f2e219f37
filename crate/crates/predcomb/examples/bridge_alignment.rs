//! Propagates a handful of instance couplings into a full bridge matrix and
//! measures how well the bridged reference aligns with the main predictor.

use nalgebra::DMatrix;
use predcomb::bridge::{
    alignment_score, bridge_step_implicit, init_bridge, CouplingLabels,
};
use predcomb::graph::build_feature_graph;
use predcomb::manifold::PredictionVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn main() {
    let n = 300;
    let mut rng = StdRng::seed_from_u64(11);

    // both tasks observe the same latent 2-D state through different noise
    let latent: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let feat = |rng: &mut StdRng| {
        DMatrix::from_fn(n, 2, |i, j| {
            let v = if j == 0 { latent[i].0 } else { latent[i].1 };
            v + 0.05 * rng.gen_range(-1.0..1.0)
        })
    };
    let main_feat = feat(&mut rng);
    let ref_feat = feat(&mut rng);
    let f = PredictionVector::new(latent.iter().map(|&(a, b)| a + 0.3 * b).collect()).unwrap();
    let g = PredictionVector::new(latent.iter().map(|&(a, b)| 2.0 * a + 0.6 * b).collect()).unwrap();

    let g_main = build_feature_graph(&main_feat, f.values(), 10, 1.0).unwrap();
    let g_ref = build_feature_graph(&ref_feat, g.values(), 10, 1.0).unwrap();

    // couple the first 20 instances; the rest must be inferred
    let labels = CouplingLabels::new((0..20).map(|i| (i, i)).collect(), n, n).unwrap();
    let mut bridge = init_bridge(&labels, 5);
    println!(
        "alignment with couplings only: {:.4}",
        alignment_score(&f, g.values(), &bridge).unwrap()
    );
    for step in 1..=5 {
        bridge = bridge_step_implicit(&bridge, &g_main, &g_ref, 1.0).unwrap();
        println!(
            "after implicit step {step}:       {:.4}",
            alignment_score(&f, g.values(), &bridge).unwrap()
        );
    }

    let rows = bridge.rows();
    let max_row_len = (0..n).map(|i| rows.row(i).len()).max().unwrap();
    let sums: Vec<f64> = (0..n)
        .map(|i| rows.row(i).iter().map(|&(_, w)| w).sum())
        .collect();
    println!(
        "bridge rows: max {} entries, row sums in [{:.6}, {:.6}]",
        max_row_len,
        sums.iter().cloned().fold(f64::INFINITY, f64::min),
        sums.iter().cloned().fold(0.0f64, f64::max),
    );
}
