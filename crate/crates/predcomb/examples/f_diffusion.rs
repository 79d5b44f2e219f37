//! One implicit f-diffusion step: a noisy predictor contracts toward two
//! clean references of the same task and moves away from its noise.

use predcomb::fdiffusion::{diffuse_f_step, score, ScoreProblem};
use predcomb::joint::task_weights;
use predcomb::{manifold_metric, project_to_manifold, PredictionVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn main() {
    let n = 400;
    let mut rng = StdRng::seed_from_u64(7);

    let truth: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let noisy = |rng: &mut StdRng, scale: f64| -> PredictionVector {
        PredictionVector::new(
            truth
                .iter()
                .map(|t| t + scale * rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    };

    let f0 = noisy(&mut rng, 1.0);
    let refs: Vec<_> = (0..2)
        .map(|_| project_to_manifold(&noisy(&mut rng, 0.5)).unwrap())
        .collect();

    let f_point = project_to_manifold(&f0).unwrap();
    let weights = task_weights(&f_point, &refs, 0.5).unwrap();
    println!("reference weights: {weights:?}");

    let truth_pv = PredictionVector::new(truth.clone()).unwrap();
    println!(
        "metric(f0, truth)      = {:.4}",
        manifold_metric(&f0, &truth_pv).unwrap()
    );

    let problem = ScoreProblem::new(f_point.clone(), refs, weights, 1.0).unwrap();
    println!(
        "score before step      = {:.4}",
        score(&problem, &f_point.as_prediction()).unwrap()
    );
    let out = diffuse_f_step(&problem, &f_point).unwrap();
    println!(
        "score after step       = {:.4}",
        score(&problem, &out.point.as_prediction()).unwrap()
    );
    println!(
        "metric(f*, truth)      = {:.4}",
        manifold_metric(&out.point.as_prediction(), &truth_pv).unwrap()
    );
    println!(
        "metric(f*, f0)         = {:.4}",
        manifold_metric(&out.point.as_prediction(), &f0).unwrap()
    );
}
