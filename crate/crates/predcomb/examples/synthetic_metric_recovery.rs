//! Runs the twelve-task synthetic metric-recovery experiment and prints how
//! well the initial and refined metric matrices recover the ground truth.

use predcomb::synth::{run_toy_experiment, ToyConfig};

fn main() {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42u64);
    let cfg = ToyConfig {
        seed,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let result = run_toy_experiment(&cfg, None).expect("experiment");
    let elapsed = start.elapsed();

    let gap = |m: &nalgebra::DMatrix<f64>| (m - &result.ground_truth.values).norm();
    println!("seed {seed}: {:.2?}", elapsed);
    println!(
        "  |initial - truth|_F = {:.4}",
        gap(&result.initial.values)
    );
    println!(
        "  |refined - truth|_F = {:.4}",
        gap(&result.refined.values)
    );

    let g1: Vec<usize> = (0..4).collect();
    let g2: Vec<usize> = (4..8).collect();
    for (name, rep) in [
        ("truth  ", &result.ground_truth),
        ("initial", &result.initial),
        ("refined", &result.refined),
    ] {
        let within = (rep.mean_abs_within(&g1) + rep.mean_abs_within(&g2)) / 2.0;
        let all: Vec<usize> = (0..12).collect();
        let cross: Vec<usize> = all.iter().copied().filter(|i| !g1.contains(i)).collect();
        let between = rep.mean_abs_between(&g1, &cross) ;
        println!("  {name}: within-group mean |rho| = {within:.3}, cross = {between:.3}");
    }

    let mean_init: f64 =
        result.tasks.iter().map(|t| t.initial_gt_metric).sum::<f64>() / result.tasks.len() as f64;
    let mean_ref: f64 =
        result.tasks.iter().map(|t| t.refined_gt_metric).sum::<f64>() / result.tasks.len() as f64;
    println!("  mean metric vs ground truth: initial {mean_init:.5}, refined {mean_ref:.5}");
    let iters: Vec<usize> = result.tasks.iter().map(|t| t.outer_iterations).collect();
    println!("  outer iterations per task: {iters:?}");
}
