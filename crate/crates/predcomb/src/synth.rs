//! Synthetic twelve-task world with grouped linear ground truths, coupled and
//! decoupled noisy observations, and the metric-recovery experiment that
//! produces the three pairwise task-metric matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{build_feature_graph, FeatureGraph};
use crate::joint::{
    metric_report_from_bridges, run_joint_diffusion_with_graphs, BridgeSolver, DiffusionConfig,
    ProblemInstance, ReferenceTask,
};
use crate::manifold::{manifold_metric, project_to_manifold, PredictionVector};
use crate::rank::RankPairs;
use crate::report::MetricMatrixReport;

/// Configuration of the synthetic world.
#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub n_tasks: usize,
    pub dim: usize,
    pub n: usize,
    /// Index ranges of the two linearly-dependent task groups.
    pub group_spans: [(usize, usize); 2],
    pub noise_std: f64,
    pub n_coupled: usize,
    pub variance_retained: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_tasks: 12,
            dim: 100,
            n: 1000,
            group_spans: [(0, 4), (4, 8)],
            noise_std: 0.2,
            n_coupled: 30,
            variance_retained: 0.95,
            seed: 0,
        }
    }
}

/// One task's decoupled observation set.
#[derive(Debug, Clone)]
pub struct DecoupledTask {
    /// PCA-projected features, n(k) x d_k; the first `n_coupled` rows come
    /// from the shared source instances, in order.
    pub features: DMatrix<f64>,
    /// Noisy least-squares predictions on those features.
    pub predictions: Vec<f64>,
    /// Source-instance index of each row (into the shared input matrix).
    pub source_indices: Vec<usize>,
    /// Projection dimension drawn from [d_95, dim].
    pub d_k: usize,
}

/// The generated world.
#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub config: ToyConfig,
    /// Ground-truth weight vectors, one column per task (dim x n_tasks).
    pub ground_truth_weights: DMatrix<f64>,
    /// Shared inputs, n x dim.
    pub inputs: DMatrix<f64>,
    /// Coupled noisy observations, one per task, each of length n.
    pub coupled_obs: Vec<Vec<f64>>,
    /// Noiseless ground-truth evaluations, one per task, each of length n.
    pub ground_truth_obs: Vec<Vec<f64>>,
    pub decoupled: Vec<DecoupledTask>,
}

/// Sample covariance eigendecomposition keeping enough components to retain
/// the requested variance fraction. Returns (components d x d_95, d_95).
pub fn pca_extractor(data: &DMatrix<f64>, variance_retained: f64) -> Result<(DMatrix<f64>, usize)> {
    let (full, d_95) = pca_full(data, variance_retained)?;
    Ok((full.columns(0, d_95).into_owned(), d_95))
}

/// Full PCA basis sorted by decreasing eigenvalue, plus the component count
/// needed to retain `variance_retained` of the total variance.
fn pca_full(data: &DMatrix<f64>, variance_retained: f64) -> Result<(DMatrix<f64>, usize)> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let d = data.ncols();
    let mut centered = data.clone();
    for j in 0..d {
        let mean = centered.column(j).sum() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let total: f64 = cov.trace();
    if total <= 0.0 {
        return Err(Error::DegenerateData);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<DVector<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let basis = DMatrix::from_columns(&cols);
    let mut cum = 0.0;
    let mut d_95 = d;
    for (rank, &i) in order.iter().enumerate() {
        cum += eig.eigenvalues[i].max(0.0);
        if cum / total >= variance_retained {
            d_95 = rank + 1;
            break;
        }
    }
    Ok((basis, d_95))
}

/// Ordinary least squares via normal equations, with a small ridge fallback
/// when the Gram matrix is rank deficient.
pub fn least_squares_fit(features: &DMatrix<f64>, targets: &[f64]) -> DVector<f64> {
    let d = features.ncols();
    let gram = features.transpose() * features;
    let rhs = features.transpose() * DVector::from_column_slice(targets);
    if let Some(chol) = gram.clone().cholesky() {
        return chol.solve(&rhs);
    }
    let lambda = 1e-8 * gram.trace() / d as f64;
    let ridged = gram + DMatrix::identity(d, d) * lambda;
    ridged
        .cholesky()
        .expect("ridge-regularized Gram is positive definite")
        .solve(&rhs)
}

/// Generates the toy world: grouped rank-1 weight matrices, uniform inputs,
/// coupled noisy observations, and per-task PCA-projected decoupled sets.
pub fn generate_toy_world(cfg: &ToyConfig) -> Result<ToyWorld> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, d, m) = (cfg.n, cfg.dim, cfg.n_tasks);

    // weights: two rank-1 groups, the rest fully random
    let mut weights = DMatrix::from_fn(d, m, |_, _| rng.gen_range(-1.0..1.0));
    for &(start, end) in &cfg.group_spans {
        let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (start..end).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for (kk, k) in (start..end).enumerate() {
            for i in 0..d {
                weights[(i, k)] = u[i] * v[kk];
            }
        }
    }

    let inputs = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));

    let gauss = |rng: &mut ChaCha8Rng, std: f64| -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };

    let mut ground_truth_obs = Vec::with_capacity(m);
    let mut coupled_obs = Vec::with_capacity(m);
    for k in 0..m {
        let clean: Vec<f64> = (&inputs * weights.column(k)).iter().copied().collect();
        let noisy: Vec<f64> = clean
            .iter()
            .map(|&v| v + gauss(&mut rng, cfg.noise_std))
            .collect();
        ground_truth_obs.push(clean);
        coupled_obs.push(noisy);
    }

    // one shared PCA basis of the inputs; per-task dimension varies
    let (basis, d_95) = pca_full(&inputs, cfg.variance_retained)?;

    let n_sub = n / 2;
    let mut decoupled = Vec::with_capacity(m);
    for k in 0..m {
        // subsample: shared sources first, then random distinct others
        let mut source_indices: Vec<usize> = (0..cfg.n_coupled).collect();
        let mut pool: Vec<usize> = (cfg.n_coupled..n).collect();
        for i in 0..(n_sub - cfg.n_coupled) {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
            source_indices.push(pool[i]);
        }

        let d_k = rng.gen_range(d_95..=d);
        let extractor = basis.columns(0, d_k);
        let mut features = DMatrix::zeros(n_sub, d_k);
        for (row, &src) in source_indices.iter().enumerate() {
            let projected = (inputs.row(src) * &extractor).transpose();
            features.set_row(row, &projected.transpose());
        }

        let targets: Vec<f64> = source_indices
            .iter()
            .map(|&src| coupled_obs[k][src])
            .collect();
        let w = least_squares_fit(&features, &targets);
        let predictions: Vec<f64> = (&features * &w)
            .iter()
            .map(|&v| v + gauss(&mut rng, cfg.noise_std))
            .collect();

        decoupled.push(DecoupledTask {
            features,
            predictions,
            source_indices,
            d_k,
        });
    }

    Ok(ToyWorld {
        config: cfg.clone(),
        ground_truth_weights: weights,
        inputs,
        coupled_obs,
        ground_truth_obs,
        decoupled,
    })
}

/// Diffusion defaults calibrated for the toy world. Graphs are built from
/// unit-scaled predictions (variance 1/n), so the prediction scales are
/// expressed relative to that; the implicit bridge path with a unit step
/// propagates the coupling labels globally.
pub fn default_toy_diffusion_config(cfg: &ToyConfig) -> DiffusionConfig {
    let n_sub = (cfg.n / 2).max(1) as f64;
    DiffusionConfig {
        sigma2: 0.1,
        delta: 8.0,
        delta_b: 5.0,
        sigma_f2: 10.0 / n_sub,
        sigma_k2: 10.0 / n_sub,
        n_neighbors: 20,
        sparsity_cap: 20,
        t1: 20,
        t2: 20,
        improvement_eps: 3e-3,
        bridge_solver: BridgeSolver::Auto,
    }
}

/// Number of validation pairs drawn from ground-truth orderings per problem.
pub const TOY_VALIDATION_PAIRS: usize = 500;

/// Outcome of one per-task combination problem.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    /// metric(initial predictor, ground truth) on the task's instance set.
    pub initial_gt_metric: f64,
    /// metric(refined predictor, ground truth).
    pub refined_gt_metric: f64,
    pub outer_iterations: usize,
    pub f_steps: usize,
    pub bridge_steps: usize,
}

/// The three metric matrices plus per-task refinement outcomes.
#[derive(Debug, Clone)]
pub struct ToyExperimentResult {
    /// Pairwise metrics of the coupled noisy observations (ground truth
    /// structure).
    pub ground_truth: MetricMatrixReport,
    /// Row k: task-k main predictor against references aligned by the
    /// initial (post-initialization) bridges.
    pub initial: MetricMatrixReport,
    /// Row k: refined task-k predictor against references aligned by the
    /// final bridges.
    pub refined: MetricMatrixReport,
    pub tasks: Vec<TaskOutcome>,
}

/// Builds the combination problem with task `k` as main and all others as
/// references, coupled through the shared first `n_coupled` rows.
pub fn toy_problem_instance(world: &ToyWorld, k: usize) -> Result<ProblemInstance> {
    let cfg = &world.config;
    let main = &world.decoupled[k];
    let n_main = main.predictions.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15 ^ k as u64);
    let gt_main: Vec<f64> = main
        .source_indices
        .iter()
        .map(|&src| world.ground_truth_obs[k][src])
        .collect();
    let mut pairs = Vec::with_capacity(TOY_VALIDATION_PAIRS);
    while pairs.len() < TOY_VALIDATION_PAIRS {
        let i = rng.gen_range(0..n_main);
        let j = rng.gen_range(0..n_main);
        if i == j || gt_main[i] == gt_main[j] {
            continue;
        }
        pairs.push(if gt_main[i] > gt_main[j] { (i, j) } else { (j, i) });
    }

    let refs = (0..cfg.n_tasks)
        .filter(|&l| l != k)
        .map(|l| {
            let task = &world.decoupled[l];
            let coupling = crate::bridge::CouplingLabels::new(
                (0..cfg.n_coupled).map(|i| (i, i)).collect(),
                n_main,
                task.predictions.len(),
            )?;
            Ok(ReferenceTask {
                features: task.features.clone(),
                predictions: PredictionVector::new(task.predictions.clone())?,
                coupling,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ProblemInstance {
        main_features: main.features.clone(),
        main_predictions: PredictionVector::new(main.predictions.clone())?,
        validation_pairs: RankPairs::new(pairs, n_main)?,
        refs,
    })
}

/// Runs all 12 per-task combination problems and assembles the three metric
/// matrices.
pub fn run_toy_experiment(
    cfg: &ToyConfig,
    dcfg: Option<&DiffusionConfig>,
) -> Result<ToyExperimentResult> {
    let default_cfg = default_toy_diffusion_config(cfg);
    let dcfg = dcfg.unwrap_or(&default_cfg);
    let world = generate_toy_world(cfg)?;
    let m = cfg.n_tasks;

    // one graph per task, shared across the 12 problems (clones share the
    // cached Laplacian eigendecomposition)
    let task_graphs: Vec<FeatureGraph> = (0..m)
        .map(|k| {
            let task = &world.decoupled[k];
            let pv = PredictionVector::new(task.predictions.clone())?;
            let scaled = project_to_manifold(&pv)?;
            build_feature_graph(
                &task.features,
                scaled.values(),
                dcfg.n_neighbors,
                dcfg.sigma_k2,
            )
        })
        .collect::<Result<_>>()?;

    // (a) ground truth: pairwise metrics of coupled noisy observations
    let mut gt = DMatrix::identity(m, m);
    for k in 0..m {
        for l in (k + 1)..m {
            let a = PredictionVector::new(world.coupled_obs[k].clone())?;
            let b = PredictionVector::new(world.coupled_obs[l].clone())?;
            let rho = manifold_metric(&a, &b)?;
            gt[(k, l)] = rho;
            gt[(l, k)] = rho;
        }
    }

    let mut initial = DMatrix::identity(m, m);
    let mut refined = DMatrix::identity(m, m);
    let mut tasks = Vec::with_capacity(m);

    for k in 0..m {
        let inst = toy_problem_instance(&world, k)?;
        let ref_graphs: Vec<FeatureGraph> = (0..m)
            .filter(|&l| l != k)
            .map(|l| task_graphs[l].clone())
            .collect();
        let main_graph = if dcfg.sigma_f2 == dcfg.sigma_k2 {
            Some(task_graphs[k].clone())
        } else {
            None
        };
        let (out, state) =
            run_joint_diffusion_with_graphs(&inst, dcfg, main_graph, Some(ref_graphs))?;

        let f0 = project_to_manifold(&inst.main_predictions)?;
        let init_report = metric_report_from_bridges(&f0, &inst.refs, &state.initial_bridges);
        let final_report = metric_report_from_bridges(&state.f, &inst.refs, &state.bridges);
        // report row 0 holds main-vs-reference metrics in reference order
        let mut col = 0usize;
        for l in 0..m {
            if l == k {
                continue;
            }
            col += 1;
            initial[(k, l)] = init_report.values[(0, col)];
            refined[(k, l)] = final_report.values[(0, col)];
        }

        let gt_main: Vec<f64> = world.decoupled[k]
            .source_indices
            .iter()
            .map(|&src| world.ground_truth_obs[k][src])
            .collect();
        let gt_pv = PredictionVector::new(gt_main)?;
        tasks.push(TaskOutcome {
            initial_gt_metric: manifold_metric(&inst.main_predictions, &gt_pv)?,
            refined_gt_metric: manifold_metric(&out, &gt_pv)?,
            outer_iterations: state.outer_iterations,
            f_steps: state.f_steps,
            bridge_steps: state.bridge_steps,
        });
    }

    Ok(ToyExperimentResult {
        ground_truth: MetricMatrixReport { values: gt },
        initial: MetricMatrixReport { values: initial },
        refined: MetricMatrixReport { values: refined },
        tasks,
    })
}
