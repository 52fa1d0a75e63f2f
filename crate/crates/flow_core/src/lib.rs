//! Conditional normalizing flows with causally masked conditioners.
//!
//! The building blocks live in their own modules: a scalar reverse-mode
//! tape, monotone scalar transformers (affine and rational-quadratic
//! spline), masked conditioner networks, and the bijection type that
//! assembles them. Everything is f64 and deterministic given an RNG seed.

mod bijection;
mod mlp;
mod tape;
mod transformer;

pub use bijection::{ConditionalBijection, InverseCache};
pub use mlp::MaskedMlp;
pub use tape::{Tape, Var};
pub use transformer::{LayerSpec, TransformerEval};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Errors from flow construction and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("mask rejected: {0}")]
    BadMask(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("parameter vector has wrong length: expected {expected}, got {got}")]
    ParamVector { expected: usize, got: usize },
}

/// Base distribution for flow densities, applied per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseDist {
    StandardNormal,
    Normal { mean: f64, sd: f64 },
}

const LN_SQRT_TWO_PI: f64 = 0.918_938_533_204_672_7;

impl BaseDist {
    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            BaseDist::StandardNormal => -0.5 * v * v - LN_SQRT_TWO_PI,
            BaseDist::Normal { mean, sd } => {
                let t = (v - mean) / sd;
                -0.5 * t * t - LN_SQRT_TWO_PI - sd.ln()
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let n: f64 = rng.sample(StandardNormal);
        match *self {
            BaseDist::StandardNormal => n,
            BaseDist::Normal { mean, sd } => mean + sd * n,
        }
    }
}
