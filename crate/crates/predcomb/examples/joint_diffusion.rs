//! Full joint diffusion on a small two-task instance: a noisy main predictor
//! plus a partially coupled clean reference of the same latent task.

use nalgebra::DMatrix;
use predcomb::bridge::CouplingLabels;
use predcomb::joint::{
    build_metric_report, run_joint_diffusion, DiffusionConfig, ProblemInstance, ReferenceTask,
};
use predcomb::manifold::{manifold_metric, PredictionVector};
use predcomb::rank::{ranking_accuracy, RankPairs};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn main() {
    let n = 300;
    let mut rng = StdRng::seed_from_u64(3);

    let latent: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let features = DMatrix::from_fn(n, 3, |i, j| {
        latent[i] * [1.0, -0.5, 0.25][j] + 0.1 * rng.gen_range(-1.0..1.0)
    });
    let main_pred =
        PredictionVector::new(latent.iter().map(|v| v + 0.5 * rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
    let ref_pred =
        PredictionVector::new(latent.iter().map(|v| 2.0 * v + 0.1 * rng.gen_range(-1.0..1.0)).collect())
            .unwrap();

    let mut val_pairs = Vec::new();
    while val_pairs.len() < 200 {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if latent[i] > latent[j] {
            val_pairs.push((i, j));
        }
    }

    let inst = ProblemInstance {
        main_features: features.clone(),
        main_predictions: main_pred.clone(),
        validation_pairs: RankPairs::new(val_pairs, n).unwrap(),
        refs: vec![ReferenceTask {
            features,
            predictions: ref_pred,
            coupling: CouplingLabels::new((0..30).map(|i| (i, i)).collect(), n, n).unwrap(),
        }],
    };

    let cfg = DiffusionConfig {
        sigma_f2: 0.01,
        sigma_k2: 0.01,
        delta_b: 0.5,
        ..Default::default()
    };
    let (refined, state) = run_joint_diffusion(&inst, &cfg).unwrap();

    let truth = PredictionVector::new(latent).unwrap();
    println!(
        "metric vs latent truth: initial {:.4}, refined {:.4}",
        manifold_metric(&main_pred, &truth).unwrap(),
        manifold_metric(&refined, &truth).unwrap()
    );
    println!(
        "validation accuracy: initial {:.4}, refined {:.4}",
        ranking_accuracy(main_pred.values(), &inst.validation_pairs).unwrap(),
        ranking_accuracy(refined.values(), &inst.validation_pairs).unwrap()
    );
    println!(
        "outer iterations {}, f steps {}, bridge steps {}",
        state.outer_iterations, state.f_steps, state.bridge_steps
    );
    println!("accuracy history: {:?}", state.accuracy_history);
    let report = build_metric_report(&state, &inst);
    println!("metric matrix:\n{}", report.to_csv());
}
