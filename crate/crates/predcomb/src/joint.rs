//! Orchestration of the joint diffusion: alternate f-diffusion and
//! B-diffusion with validation-driven termination, plus the two-stage
//! hyperparameter tuner.

use nalgebra::DMatrix;

use crate::bridge::{
    aligned_reference, alignment_score, bridge_step_explicit, bridge_step_implicit, init_bridge,
    BridgeMatrix, CouplingLabels, DENSE_SIZE_LIMIT,
};
use crate::error::{Error, Result};
use crate::fdiffusion::{diffuse_f_step, ScoreProblem};
use crate::graph::{build_feature_graph, FeatureGraph};
use crate::manifold::{project_to_manifold, task_affinity, ManifoldPoint, PredictionVector};
use crate::rank::{ranking_accuracy, RankPairs};
use crate::report::MetricMatrixReport;

/// Which path evolves bridge matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BridgeSolver {
    /// Implicit (dense Sylvester) up to [`DENSE_SIZE_LIMIT`] instances,
    /// explicit Euler above.
    #[default]
    Auto,
    Implicit,
    Explicit,
}

/// All hyperparameters of a joint diffusion run.
#[derive(Debug, Clone)]
pub struct DiffusionConfig {
    /// Task-affinity scale for the reference weights.
    pub sigma2: f64,
    /// f-diffusion step size.
    pub delta: f64,
    /// Bridge diffusion step size; kept small for explicit-Euler stability.
    pub delta_b: f64,
    /// Prediction-gap scale in the main feature graph.
    pub sigma_f2: f64,
    /// Prediction-gap scale in the reference feature graphs.
    pub sigma_k2: f64,
    /// Nearest-neighbor count for all feature graphs.
    pub n_neighbors: usize,
    /// Bridge row sparsity cap.
    pub sparsity_cap: usize,
    /// Outer iteration cap.
    pub t1: usize,
    /// Inner (per-process) iteration cap.
    pub t2: usize,
    /// Strict improvement threshold; ties terminate an inner loop.
    pub improvement_eps: f64,
    pub bridge_solver: BridgeSolver,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            sigma2: 0.5,
            delta: 1.0,
            delta_b: 1e-5,
            sigma_f2: 1.0,
            sigma_k2: 1.0,
            n_neighbors: 10,
            sparsity_cap: 5,
            t1: 20,
            t2: 20,
            improvement_eps: 1e-6,
            bridge_solver: BridgeSolver::Auto,
        }
    }
}

impl DiffusionConfig {
    fn validate(&self) -> Result<()> {
        for &(v, name) in &[
            (self.sigma2, "sigma2"),
            (self.delta_b, "delta_b"),
            (self.sigma_f2, "sigma_f2"),
            (self.sigma_k2, "sigma_k2"),
        ] {
            if !(v > 0.0) {
                let _ = name;
                return Err(Error::NonPositiveScale(v));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(Error::NonPositiveScale(self.delta));
        }
        if self.t1 < 1 || self.t2 < 1 || self.sparsity_cap < 1 || self.n_neighbors < 1 {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        Ok(())
    }
}

/// One reference task: its feature matrix, decoupled predictor evaluations,
/// and coupling labels back to the main instance set.
#[derive(Debug, Clone)]
pub struct ReferenceTask {
    pub features: DMatrix<f64>,
    pub predictions: PredictionVector,
    pub coupling: CouplingLabels,
}

/// A full predictor combination problem.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub main_features: DMatrix<f64>,
    pub main_predictions: PredictionVector,
    pub validation_pairs: RankPairs,
    pub refs: Vec<ReferenceTask>,
}

impl ProblemInstance {
    fn validate(&self) -> Result<()> {
        if self.refs.is_empty() {
            return Err(Error::NoReferences);
        }
        let n = self.main_predictions.len();
        if self.main_features.nrows() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.main_features.nrows(),
            });
        }
        if self.validation_pairs.n() > n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.validation_pairs.n(),
            });
        }
        for r in &self.refs {
            if r.features.nrows() != r.predictions.len() {
                return Err(Error::LengthMismatch {
                    expected: r.predictions.len(),
                    got: r.features.nrows(),
                });
            }
            if r.coupling.n_main() != n || r.coupling.n_ref() != r.predictions.len() {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: r.coupling.n_main(),
                });
            }
        }
        Ok(())
    }
}

/// Evolving state of one run, kept for reporting.
#[derive(Debug, Clone)]
pub struct DiffusionState {
    pub f: ManifoldPoint,
    pub bridges: Vec<BridgeMatrix>,
    pub weights: Vec<f64>,
    pub outer_iterations: usize,
    pub f_steps: usize,
    pub bridge_steps: usize,
    /// Validation accuracy at each accepted f-step.
    pub accuracy_history: Vec<f64>,
    /// Max alignment score at each accepted B-step.
    pub alignment_history: Vec<f64>,
    /// Bridges captured right after the initialization phase.
    pub initial_bridges: Vec<BridgeMatrix>,
}

/// Task affinities between the main predictor and each aligned reference.
pub fn task_weights(
    f: &ManifoldPoint,
    aligned_refs: &[ManifoldPoint],
    sigma2: f64,
) -> Result<Vec<f64>> {
    if aligned_refs.is_empty() {
        return Err(Error::NoReferences);
    }
    aligned_refs
        .iter()
        .map(|g| task_affinity(f.dot(g), sigma2))
        .collect()
}

fn one_bridge_step(
    b: &BridgeMatrix,
    g_f: &FeatureGraph,
    g_k: &FeatureGraph,
    cfg: &DiffusionConfig,
) -> Result<BridgeMatrix> {
    let implicit = match cfg.bridge_solver {
        BridgeSolver::Implicit => true,
        BridgeSolver::Explicit => false,
        BridgeSolver::Auto => b.n_main() <= DENSE_SIZE_LIMIT && b.n_ref() <= DENSE_SIZE_LIMIT,
    };
    if implicit {
        bridge_step_implicit(b, g_f, g_k, cfg.delta_b)
    } else {
        bridge_step_explicit(b, g_f, g_k, cfg.delta_b, cfg.sparsity_cap)
    }
}

/// Aligned reference as a manifold point; `None` when the bridged vector is
/// constant (reference contributes nothing this round).
fn aligned_point(b: &BridgeMatrix, g: &PredictionVector) -> Option<ManifoldPoint> {
    let bg = aligned_reference(b, g.values()).ok()?;
    let pv = PredictionVector::new(bg).ok()?;
    project_to_manifold(&pv).ok()
}

/// Up to T2 bridge-diffusion steps per reference, each accepted only while
/// its alignment score strictly improves. Returns the number of accepted
/// steps and the best max-alignment seen.
fn bridge_phase(
    f: &ManifoldPoint,
    g_main: &FeatureGraph,
    ref_graphs: &[FeatureGraph],
    refs: &[ReferenceTask],
    bridges: &mut [BridgeMatrix],
    cfg: &DiffusionConfig,
    alignment_history: &mut Vec<f64>,
) -> Result<usize> {
    let f_pred = f.as_prediction();
    let mut scores: Vec<f64> = bridges
        .iter()
        .zip(refs)
        .map(|(b, r)| alignment_score(&f_pred, r.predictions.values(), b).unwrap_or(0.0))
        .collect();
    let mut frozen = vec![false; bridges.len()];
    let mut accepted = 0usize;
    for _ in 0..cfg.t2 {
        let mut any = false;
        for k in 0..bridges.len() {
            if frozen[k] {
                continue;
            }
            let stepped = one_bridge_step(&bridges[k], g_main, &ref_graphs[k], cfg)?;
            let score =
                alignment_score(&f_pred, refs[k].predictions.values(), &stepped).unwrap_or(0.0);
            if score > scores[k] + cfg.improvement_eps {
                bridges[k] = stepped;
                scores[k] = score;
                any = true;
            } else {
                frozen[k] = true;
            }
        }
        if !any {
            break;
        }
        accepted += 1;
        let max_score = scores.iter().cloned().fold(0.0f64, f64::max);
        alignment_history.push(max_score);
    }
    Ok(accepted)
}

/// Prediction values used for graph construction: centered and unit-scaled
/// when possible so one sigma fits tasks of very different output ranges.
fn graph_values(pv: &PredictionVector) -> Vec<f64> {
    match project_to_manifold(pv) {
        Ok(p) => p.values().to_vec(),
        Err(_) => pv.values().to_vec(),
    }
}

/// Runs the full joint diffusion and returns the refined predictor (the
/// iterate with the best validation accuracy) together with the final state.
pub fn run_joint_diffusion(
    inst: &ProblemInstance,
    cfg: &DiffusionConfig,
) -> Result<(PredictionVector, DiffusionState)> {
    run_joint_diffusion_with_graphs(inst, cfg, None, None)
}

/// As [`run_joint_diffusion`], reusing prebuilt graphs when the caller solves
/// many problems over the same task collection. The graphs must match the
/// instance's feature sets and the config's neighbor count and sigmas.
pub fn run_joint_diffusion_with_graphs(
    inst: &ProblemInstance,
    cfg: &DiffusionConfig,
    main_graph: Option<FeatureGraph>,
    prebuilt_refs: Option<Vec<FeatureGraph>>,
) -> Result<(PredictionVector, DiffusionState)> {
    cfg.validate()?;
    inst.validate()?;
    if inst.validation_pairs.is_empty() {
        return Err(Error::NoValidationPairs);
    }

    let f0 = project_to_manifold(&inst.main_predictions)?;
    let mut f = f0.clone();

    // reference graphs are frozen for the whole run
    let ref_graphs: Vec<FeatureGraph> = match prebuilt_refs {
        Some(g) => g,
        None => inst
            .refs
            .iter()
            .map(|r| {
                build_feature_graph(
                    &r.features,
                    &graph_values(&r.predictions),
                    cfg.n_neighbors,
                    cfg.sigma_k2,
                )
            })
            .collect::<Result<_>>()?,
    };
    let mut g_main = match main_graph {
        Some(g) => g,
        None => {
            build_feature_graph(&inst.main_features, f.values(), cfg.n_neighbors, cfg.sigma_f2)?
        }
    };

    let mut bridges: Vec<BridgeMatrix> = inst
        .refs
        .iter()
        .map(|r| init_bridge(&r.coupling, cfg.sparsity_cap))
        .collect();

    let mut state = DiffusionState {
        f: f.clone(),
        bridges: Vec::new(),
        weights: Vec::new(),
        outer_iterations: 0,
        f_steps: 0,
        bridge_steps: 0,
        accuracy_history: Vec::new(),
        alignment_history: Vec::new(),
        initial_bridges: Vec::new(),
    };

    // B-initialization phase: the first Euler estimate from the coupling
    // anchors is the reported initial bridge; diffusion then continues while
    // alignment keeps improving
    for (b, g_k) in bridges.iter_mut().zip(&ref_graphs) {
        *b = one_bridge_step(b, &g_main, g_k, cfg)?;
    }
    state.bridge_steps += 1;
    state.initial_bridges = bridges.clone();
    state.bridge_steps += bridge_phase(
        &f,
        &g_main,
        &ref_graphs,
        &inst.refs,
        &mut bridges,
        cfg,
        &mut state.alignment_history,
    )?;

    let accuracy = |p: &ManifoldPoint| ranking_accuracy(p.values(), &inst.validation_pairs);

    let mut best_acc = accuracy(&f)?;
    let mut best_f = f.clone();
    let mut best_bridges = bridges.clone();
    state.accuracy_history.push(best_acc);

    for _ in 0..cfg.t1 {
        state.outer_iterations += 1;
        let acc_at_outer_start = best_acc;

        // f-diffusion inner loop
        let mut cur_acc = accuracy(&f)?;
        for _ in 0..cfg.t2 {
            let mut aligned = Vec::new();
            for (b, r) in bridges.iter().zip(&inst.refs) {
                if let Some(p) = aligned_point(b, &r.predictions) {
                    aligned.push(p);
                }
            }
            let weights = if aligned.is_empty() {
                Vec::new()
            } else {
                task_weights(&f, &aligned, cfg.sigma2)?
            };
            let problem = ScoreProblem::new(f.clone(), aligned, weights, cfg.delta)?;
            let out = diffuse_f_step(&problem, &f0)?;
            let new_acc = accuracy(&out.point)?;
            if new_acc > cur_acc + cfg.improvement_eps {
                f = out.point;
                cur_acc = new_acc;
                state.f_steps += 1;
                state.accuracy_history.push(cur_acc);
                if cur_acc > best_acc {
                    best_acc = cur_acc;
                    best_f = f.clone();
                }
            } else {
                break;
            }
        }

        // B-diffusion inner loop against the updated f
        state.bridge_steps += bridge_phase(
            &f,
            &g_main,
            &ref_graphs,
            &inst.refs,
            &mut bridges,
            cfg,
            &mut state.alignment_history,
        )?;

        // rebuild the main graph from the updated predictor
        g_main =
            build_feature_graph(&inst.main_features, f.values(), cfg.n_neighbors, cfg.sigma_f2)?;

        // keep the refined bridges whenever accuracy has not degraded
        if cur_acc >= best_acc {
            best_acc = cur_acc;
            best_f = f.clone();
            best_bridges = bridges.clone();
        }

        if best_acc <= acc_at_outer_start + cfg.improvement_eps {
            break;
        }
    }

    // report the state snapshot that produced the returned predictor
    let mut aligned = Vec::new();
    for (b, r) in best_bridges.iter().zip(&inst.refs) {
        if let Some(p) = aligned_point(b, &r.predictions) {
            aligned.push(p);
        }
    }
    state.weights = if aligned.is_empty() {
        Vec::new()
    } else {
        task_weights(&best_f, &aligned, cfg.sigma2)?
    };
    state.bridges = best_bridges;
    state.f = best_f.clone();

    Ok((best_f.as_prediction(), state))
}

/// Builds the (m+1)x(m+1) pairwise metric matrix using given bridges. Row and
/// column 0 hold the main predictor; entries with a constant aligned
/// reference are reported as 0.
pub fn metric_report_from_bridges(
    f: &ManifoldPoint,
    refs: &[ReferenceTask],
    bridges: &[BridgeMatrix],
) -> MetricMatrixReport {
    let m = refs.len();
    let mut values = DMatrix::identity(m + 1, m + 1);
    let aligned: Vec<Option<ManifoldPoint>> = bridges
        .iter()
        .zip(refs)
        .map(|(b, r)| aligned_point(b, &r.predictions))
        .collect();
    for k in 0..m {
        let rho = aligned[k].as_ref().map_or(0.0, |g| f.dot(g));
        values[(0, k + 1)] = rho;
        values[(k + 1, 0)] = rho;
        for l in (k + 1)..m {
            let rho = match (&aligned[k], &aligned[l]) {
                (Some(a), Some(b)) => a.dot(b),
                _ => 0.0,
            };
            values[(k + 1, l + 1)] = rho;
            values[(l + 1, k + 1)] = rho;
        }
    }
    MetricMatrixReport { values }
}

/// Report for a completed run, using its final bridges.
pub fn build_metric_report(state: &DiffusionState, inst: &ProblemInstance) -> MetricMatrixReport {
    metric_report_from_bridges(&state.f, &inst.refs, &state.bridges)
}

/// Hyperparameter search grids. `sigma_pred2` values are absolute scales used
/// for both sigma_f2 and sigma_k2.
#[derive(Debug, Clone)]
pub struct TuneGrid {
    pub sigma2: Vec<f64>,
    pub delta: Vec<f64>,
    pub n_neighbors: Vec<usize>,
    pub sparsity_cap: Vec<usize>,
    pub sigma_pred2: Vec<f64>,
}

impl TuneGrid {
    /// Default grids, with prediction scales proportional to var(f).
    pub fn default_for(inst: &ProblemInstance) -> Self {
        let f = inst.main_predictions.values();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / f.len() as f64;
        let var = if var > 0.0 { var } else { 1.0 };
        Self {
            sigma2: vec![0.05, 0.1, 0.25, 0.5, 1.0, 2.0],
            delta: vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
            n_neighbors: vec![5, 10, 20],
            sparsity_cap: vec![3, 5, 10],
            sigma_pred2: vec![0.01 * var, 0.1 * var, var],
        }
    }

    pub fn singleton(cfg: &DiffusionConfig) -> Self {
        Self {
            sigma2: vec![cfg.sigma2],
            delta: vec![cfg.delta],
            n_neighbors: vec![cfg.n_neighbors],
            sparsity_cap: vec![cfg.sparsity_cap],
            sigma_pred2: vec![cfg.sigma_f2],
        }
    }
}

/// Two-stage tuner. Stage 1 picks (N, K, sigma_f2/sigma_k2) maximizing the
/// maximum per-reference alignment score after the bridge initialization
/// phase; stage 2 picks (sigma2, delta) maximizing validation accuracy of a
/// full run. Stage-1 parameters are frozen before stage 2 begins.
pub fn tune_hyperparameters(
    inst: &ProblemInstance,
    grids: &TuneGrid,
    base: &DiffusionConfig,
) -> Result<DiffusionConfig> {
    inst.validate()?;
    if inst.validation_pairs.is_empty() {
        return Err(Error::NoValidationPairs);
    }
    if grids.sigma2.is_empty()
        || grids.delta.is_empty()
        || grids.n_neighbors.is_empty()
        || grids.sparsity_cap.is_empty()
        || grids.sigma_pred2.is_empty()
    {
        return Err(Error::EmptyPairs);
    }

    let f0 = project_to_manifold(&inst.main_predictions)?;
    let max_neighbors = inst
        .refs
        .iter()
        .map(|r| r.predictions.len())
        .chain([inst.main_predictions.len()])
        .min()
        .unwrap()
        .saturating_sub(1);

    // stage 1: bridge-initialization alignment
    let mut stage1: Option<(f64, usize, usize, f64)> = None;
    for &n_nb in &grids.n_neighbors {
        if n_nb > max_neighbors {
            continue;
        }
        for &cap in &grids.sparsity_cap {
            for &sp2 in &grids.sigma_pred2 {
                let cfg = DiffusionConfig {
                    n_neighbors: n_nb,
                    sparsity_cap: cap,
                    sigma_f2: sp2,
                    sigma_k2: sp2,
                    ..base.clone()
                };
                let ref_graphs: Vec<FeatureGraph> = inst
                    .refs
                    .iter()
                    .map(|r| {
                        build_feature_graph(&r.features, r.predictions.values(), n_nb, sp2)
                    })
                    .collect::<Result<_>>()?;
                let g_main =
                    build_feature_graph(&inst.main_features, f0.values(), n_nb, sp2)?;
                let mut bridges: Vec<BridgeMatrix> = inst
                    .refs
                    .iter()
                    .map(|r| init_bridge(&r.coupling, cap))
                    .collect();
                let mut history = Vec::new();
                bridge_phase(
                    &f0,
                    &g_main,
                    &ref_graphs,
                    &inst.refs,
                    &mut bridges,
                    &cfg,
                    &mut history,
                )?;
                let f_pred = f0.as_prediction();
                let best_alignment = bridges
                    .iter()
                    .zip(&inst.refs)
                    .map(|(b, r)| alignment_score(&f_pred, r.predictions.values(), b).unwrap_or(0.0))
                    .fold(0.0f64, f64::max);
                if stage1.as_ref().map_or(true, |s| best_alignment > s.0) {
                    stage1 = Some((best_alignment, n_nb, cap, sp2));
                }
            }
        }
    }
    let (_, n_nb, cap, sp2) = stage1.ok_or(Error::TooFewPoints {
        needed: 2,
        got: max_neighbors,
    })?;

    // stage 2: validation accuracy of full runs over (sigma2, delta)
    let mut stage2: Option<(f64, f64, f64)> = None;
    for &sigma2 in &grids.sigma2 {
        for &delta in &grids.delta {
            let cfg = DiffusionConfig {
                sigma2,
                delta,
                n_neighbors: n_nb,
                sparsity_cap: cap,
                sigma_f2: sp2,
                sigma_k2: sp2,
                ..base.clone()
            };
            let (refined, _) = run_joint_diffusion(inst, &cfg)?;
            let acc = ranking_accuracy(refined.values(), &inst.validation_pairs)?;
            if stage2.as_ref().map_or(true, |s| acc > s.0) {
                stage2 = Some((acc, sigma2, delta));
            }
        }
    }
    let (_, sigma2, delta) = stage2.expect("grids are nonempty");

    Ok(DiffusionConfig {
        sigma2,
        delta,
        n_neighbors: n_nb,
        sparsity_cap: cap,
        sigma_f2: sp2,
        sigma_k2: sp2,
        ..base.clone()
    })
}
