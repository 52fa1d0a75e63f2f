//! Deconfounding causal normalizing flows.
//!
//! A model couples two conditional flows over a causal graph: a generative
//! flow that maps observed variables to exogenous noise given the hidden
//! confounders, and a deconfounding flow that encodes an amortized posterior
//! over those confounders from the observations they affect. Both respect
//! the graph through autoregressive masks, training maximizes an evidence
//! lower bound, and a trained model answers interventional and
//! counterfactual queries by substituting values directly into the learned
//! mechanisms. Models round-trip through a binary archive with integrity
//! checks.

mod archive;
mod model;
mod train;

pub use archive::{load_model, save_model};
pub use model::{DeCaFlowModel, ElboTerms, FlowArch};
pub use train::{train, EpochStats, TrainConfig, TrainReport};

use thiserror::Error;

/// Errors from model construction and query evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("graph error: {0}")]
    Graph(#[from] causal_graph::GraphError),
    #[error("flow error: {0}")]
    Flow(#[from] flow_core::FlowError),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("latent spec error: {0}")]
    LatentSpec(String),
    #[error("standardization error: {0}")]
    Standardization(String),
    #[error("data error: {0}")]
    Data(String),
}

/// Errors from the training loop.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset columns {got:?} do not match graph observables {expected:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged {
        epoch: usize,
        batch: usize,
        report: Box<TrainReport>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("metric error: {0}")]
    Metric(#[from] metrics::MetricError),
}

/// Errors from saving and loading model archives.
#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
