//! Causal graphs with hidden confounders.
//!
//! This crate carries the graph-side machinery of the toolkit: a validated
//! DAG type over observed and hidden nodes, d-separation, the autoregressive
//! masks both flow networks are built from, and the proxy-witness
//! identifiability checks that decide which interventional and counterfactual
//! queries can be trusted.
//!
//! Everything here is a pure function of immutable graph values and safe to
//! call from multiple threads.

mod dsep;
mod graph;
mod identify;
mod masks;

pub use dsep::d_separated;
pub use graph::{load_graph, CausalGraph, NodeId};
pub use identify::{
    check_intervention_identifiable, check_query_identifiable, classify_edges, ConfounderVerdict,
    EdgeClass, IdentifiabilityReport, InterventionReport, QuerySpec,
};
pub use masks::{build_decoder_mask, build_encoder_mask, FlowMask};

use thiserror::Error;

/// Errors from graph construction, lookups and queries.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph contains a cycle: {0}")]
    Cycle(String),
    #[error("edge from observed {parent} into hidden {child} is not allowed")]
    EdgeIntoHidden { parent: String, child: String },
    #[error("duplicate node name {0}")]
    DuplicateName(String),
    #[error("duplicate edge {parent} -> {child}")]
    DuplicateEdge { parent: String, child: String },
    #[error("self loop on {0}")]
    SelfLoop(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node sets of a d-separation query must be disjoint")]
    OverlappingSets,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("graph document parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(String),
}
