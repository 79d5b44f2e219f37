//! Test-time predictor combination by joint manifold diffusion.
//!
//! Given a main rank predictor and a set of reference predictors evaluated on
//! disjoint ("decoupled") feature sets, this crate refines the main predictor
//! by alternating two diffusion processes: an f-diffusion that contracts the
//! predictor towards task-affine references on the predictor manifold, and a
//! B-diffusion that propagates a small set of instance couplings into
//! row-stochastic bridge matrices aligning each reference to the main
//! instance set.
//!
//! Start with [`joint::run_joint_diffusion`] for the full pipeline, or the
//! runnable examples under `examples/` for each capability in isolation.

pub mod bridge;
pub mod cli;
pub mod error;
pub mod fdiffusion;
pub mod fileio;
pub mod graph;
pub mod joint;
pub mod manifold;
pub mod rank;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use manifold::{manifold_metric, project_to_manifold, task_affinity, ManifoldPoint, PredictionVector};
