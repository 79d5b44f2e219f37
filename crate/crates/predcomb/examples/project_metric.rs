//! Projects raw prediction vectors onto the predictor manifold and compares
//! them with the centered cosine metric, showing its affine invariance.

use predcomb::{manifold_metric, project_to_manifold, task_affinity, PredictionVector};

fn main() {
    let f = PredictionVector::new(vec![0.3, -1.2, 2.5, 0.0, 1.1, -0.7]).unwrap();
    // g is an affine image of f plus a small perturbation
    let g = PredictionVector::new(
        f.values()
            .iter()
            .enumerate()
            .map(|(i, v)| 3.0 * v + 5.0 + if i == 2 { 0.4 } else { 0.0 })
            .collect(),
    )
    .unwrap();
    let h = PredictionVector::new(vec![1.0, 0.9, -0.3, 2.2, -1.5, 0.4]).unwrap();

    let pf = project_to_manifold(&f).unwrap();
    let norm: f64 = pf.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let mean: f64 = pf.values().iter().sum::<f64>() / pf.len() as f64;
    println!("projected f: norm = {norm:.12}, mean = {mean:.2e}");

    println!("metric(f, g) = {:+.6} (affine image)", manifold_metric(&f, &g).unwrap());
    println!("metric(f, h) = {:+.6} (unrelated)", manifold_metric(&f, &h).unwrap());
    println!(
        "metric(f, -f) = {:+.6}",
        manifold_metric(
            &f,
            &PredictionVector::new(f.values().iter().map(|v| -v).collect()).unwrap()
        )
        .unwrap()
    );

    for sigma2 in [0.1, 0.5, 2.0] {
        let rho_g = manifold_metric(&f, &g).unwrap();
        let rho_h = manifold_metric(&f, &h).unwrap();
        println!(
            "sigma2 = {sigma2}: affinity(f,g) = {:.4}, affinity(f,h) = {:.4}",
            task_affinity(rho_g, sigma2).unwrap(),
            task_affinity(rho_h, sigma2).unwrap()
        );
    }
}
