//! Synthetic confounded SCMs with exact ground truth.
//!
//! This crate builds fully specified structural causal models (the fixed
//! proxy-count ablation family plus random nonlinear mechanisms on arbitrary
//! graphs), simulates them with per-row seeded noise, and answers
//! interventional and counterfactual queries exactly by re-evaluating the
//! equations on stored noise. Model code elsewhere is benchmarked against
//! these oracles.

mod ablation;
mod dataset;
mod random_scm;
mod scm;
mod simulate;

pub use ablation::{build_ablation_scm, AblationKind, AblationSpec, MAX_PROXIES};
pub use dataset::{percentile, read_ablation_spec, split_ranges, write_ablation_spec, Dataset};
pub use random_scm::{build_random_mechanism_scm, NoiseMode};
pub use scm::{DistSpec, MechanismKind, NodeEquation, NonlinearNode, SyntheticSCM};
pub use simulate::{
    oracle_ate, oracle_counterfactual, oracle_intervene, simulate, GroundTruthSample,
};

use thiserror::Error;

/// Errors from SCM construction, simulation, and dataset I/O.
#[derive(Debug, Error)]
pub enum ScmError {
    #[error("graph error: {0}")]
    Graph(#[from] causal_graph::GraphError),
    #[error("observed node {0} has no structural equation")]
    MissingEquation(String),
    #[error("node {0} has no noise or distribution spec")]
    MissingNoise(String),
    #[error("equation for {0} does not read exactly its graph parents")]
    ParentMismatch(String),
    #[error("ablation family defines at most 10 proxies, got {0}")]
    TooManyProxies(usize),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("equation for {0} produced a non-finite value")]
    NonFinite(String),
    #[error("cannot simulate zero samples")]
    EmptySample,
    #[error("i/o error: {0}")]
    Io(String),
}
