//! Synthetic structural causal models with fully specified equations.
//!
//! Every observed node gets one structural equation reading its observed
//! parents, its hidden parents, its own exogenous noise, and (rarely) extra
//! declared noise channels. Because the equations are explicit and noise is
//! stored alongside samples, interventional and counterfactual ground truth
//! is exact rather than estimated.

use std::collections::BTreeMap;

use causal_graph::CausalGraph;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ScmError;

/// Distribution of one exogenous noise or hidden-confounder channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistSpec {
    StandardNormal,
    Normal { mean: f64, sd: f64 },
}

impl DistSpec {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            DistSpec::StandardNormal => rng.sample(StandardNormal),
            DistSpec::Normal { mean, sd } => {
                let e: f64 = rng.sample(StandardNormal);
                mean + sd * e
            }
        }
    }
}

/// Closed-form node index of the nonlinear ablation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonlinearNode {
    Treatment,
    /// The outcome optionally carries a multiplicative term mixing the
    /// treatment with the second proxy's noise channel.
    Outcome {
        with_cross_noise: bool,
    },
    Proxy(u8),
}

/// The functional form of one structural equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MechanismKind {
    /// x = u. Used for root nodes of random-mechanism models.
    Root,
    /// Linear combination of parents plus scaled noise.
    Linear {
        obs: Vec<f64>,
        hid: Vec<f64>,
        noise: f64,
    },
    /// One of the fixed nonlinear ablation equations.
    AblationNonlinear(NonlinearNode),
    /// Random one-hidden-layer feature map:
    /// m = v . tanh(W_obs p_obs + W_hid p_hid + b) * out_scale, then
    /// x = m + noise_scale * u (additive) or
    /// x = m + noise_scale * (1 + 0.3 tanh(first parent)) * u (non-additive).
    RandomFeature {
        w_obs: Array2<f64>,
        w_hid: Array2<f64>,
        b: Array1<f64>,
        v: Array1<f64>,
        out_scale: f64,
        noise_scale: f64,
        nonadditive: bool,
    },
}

/// One structural equation together with its declared inputs. The parent
/// lists fix the order in which values are passed to `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEquation {
    pub observed_parents: Vec<String>,
    pub hidden_parents: Vec<String>,
    /// Names of other nodes whose noise channels this equation reads.
    pub extra_noise: Vec<String>,
    pub kind: MechanismKind,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl NodeEquation {
    /// Evaluates the equation. `obs` and `hid` follow the declared parent
    /// order, `extra` follows `extra_noise`.
    pub fn eval(&self, obs: &[f64], hid: &[f64], noise: f64, extra: &[f64]) -> f64 {
        debug_assert_eq!(obs.len(), self.observed_parents.len());
        debug_assert_eq!(hid.len(), self.hidden_parents.len());
        debug_assert_eq!(extra.len(), self.extra_noise.len());
        match &self.kind {
            MechanismKind::Root => noise,
            MechanismKind::Linear {
                obs: co,
                hid: ch,
                noise: cn,
            } => {
                let mut v = cn * noise;
                for (c, x) in co.iter().zip(obs) {
                    v += c * x;
                }
                for (c, z) in ch.iter().zip(hid) {
                    v += c * z;
                }
                v
            }
            MechanismKind::AblationNonlinear(node) => eval_nonlinear(*node, obs, hid, noise, extra),
            MechanismKind::RandomFeature {
                w_obs,
                w_hid,
                b,
                v,
                out_scale,
                noise_scale,
                nonadditive,
            } => {
                let width = b.len();
                let mut m = 0.0;
                for h in 0..width {
                    let mut pre = b[h];
                    for (j, x) in obs.iter().enumerate() {
                        pre += w_obs[(h, j)] * x;
                    }
                    for (j, z) in hid.iter().enumerate() {
                        pre += w_hid[(h, j)] * z;
                    }
                    m += v[h] * pre.tanh();
                }
                m *= out_scale;
                let first_parent = obs.first().or(hid.first()).copied().unwrap_or(0.0);
                if *nonadditive {
                    m + noise_scale * (1.0 + 0.3 * first_parent.tanh()) * noise
                } else {
                    m + noise_scale * noise
                }
            }
        }
    }
}

/// The fixed nonlinear ablation equations. `hid` is (z1, z2); the outcome
/// additionally reads the treatment as its only observed parent and, when
/// present, the second proxy's noise as its only extra channel.
fn eval_nonlinear(node: NonlinearNode, obs: &[f64], hid: &[f64], noise: f64, extra: &[f64]) -> f64 {
    let (z1, z2) = (hid[0], hid[1]);
    match node {
        NonlinearNode::Treatment => (z1 * z1 / 4.0) * (z2 / 2.0).sin() + z1 + 0.6 * noise,
        NonlinearNode::Outcome { with_cross_noise } => {
            let t = obs[0];
            let cross = if with_cross_noise {
                t * extra[0] * 0.3
            } else {
                0.0
            };
            (z1 * t) / 4.0 + 0.8 * z2 + 0.5 * t + cross + 0.2 * noise
        }
        NonlinearNode::Proxy(i) => match i {
            1 => 0.6 * z1 * z1 + (z2 / 4.0).powi(3) + 0.3 * (z2 / 2.0).sin() + 0.5 * noise,
            2 => (z1 / 2.0).sin() + (z2 / 3.0).cos() + 0.4 * noise,
            3 => (z1 / 2.0).cos() - (z2 / 3.0).tanh() + 0.6 * noise,
            4 => (z1 / 2.0).tanh() + sigmoid(z2 / 2.0) + 0.55 * noise,
            5 => sigmoid(z1 / 2.0) + relu(-z2) + 0.4 * noise,
            6 => relu(z1) - 0.5 * relu(z2) + 0.6 * noise,
            7 => relu(-z1) + 0.3 * relu(-z2) + 0.5 * z1 * noise,
            8 => 0.8 * relu(z1) + 0.3 * relu(z2) + 0.58 * noise,
            9 => 0.75 * relu(-z1) + 0.5 * relu(z2) + 0.6 * noise,
            10 => 0.3 * z1 * z1 * z1 + 0.5 * z2.abs() + 0.4 * noise,
            _ => unreachable!("proxy index out of range"),
        },
    }
}

/// A complete synthetic SCM: graph, one equation per observed node, and the
/// noise and confounder distributions. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SyntheticSCM {
    graph: CausalGraph,
    equations: BTreeMap<String, NodeEquation>,
    noise_specs: BTreeMap<String, DistSpec>,
    hidden_specs: BTreeMap<String, DistSpec>,
}

impl SyntheticSCM {
    /// Validates that the equations cover exactly the observed nodes and
    /// that each one's declared inputs match the graph's edges.
    pub fn new(
        graph: CausalGraph,
        equations: BTreeMap<String, NodeEquation>,
        noise_specs: BTreeMap<String, DistSpec>,
        hidden_specs: BTreeMap<String, DistSpec>,
    ) -> Result<Self, ScmError> {
        for name in graph.observed_nodes() {
            let eq = equations
                .get(name)
                .ok_or_else(|| ScmError::MissingEquation(name.clone()))?;
            if !noise_specs.contains_key(name) {
                return Err(ScmError::MissingNoise(name.clone()));
            }
            let id = graph.node_id(name).expect("observed node");
            let mut declared_obs: Vec<&str> =
                eq.observed_parents.iter().map(String::as_str).collect();
            let mut actual_obs: Vec<&str> = graph
                .observed_parents(id)
                .into_iter()
                .map(|p| graph.name(p))
                .collect();
            declared_obs.sort_unstable();
            actual_obs.sort_unstable();
            if declared_obs != actual_obs {
                return Err(ScmError::ParentMismatch(name.clone()));
            }
            let mut declared_hid: Vec<&str> =
                eq.hidden_parents.iter().map(String::as_str).collect();
            let mut actual_hid: Vec<&str> = graph
                .hidden_parents(id)
                .into_iter()
                .map(|p| graph.name(p))
                .collect();
            declared_hid.sort_unstable();
            actual_hid.sort_unstable();
            if declared_hid != actual_hid {
                return Err(ScmError::ParentMismatch(name.clone()));
            }
            for extra in &eq.extra_noise {
                if !equations.contains_key(extra) && !graph.observed_nodes().contains(extra) {
                    return Err(ScmError::MissingNoise(extra.clone()));
                }
            }
        }
        for name in graph.hidden_nodes() {
            if !hidden_specs.contains_key(name) {
                return Err(ScmError::MissingNoise(name.clone()));
            }
        }
        Ok(Self {
            graph,
            equations,
            noise_specs,
            hidden_specs,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn equation(&self, node: &str) -> Option<&NodeEquation> {
        self.equations.get(node)
    }

    pub fn equations(&self) -> &BTreeMap<String, NodeEquation> {
        &self.equations
    }

    pub fn noise_spec(&self, node: &str) -> Option<&DistSpec> {
        self.noise_specs.get(node)
    }

    pub fn hidden_spec(&self, node: &str) -> Option<&DistSpec> {
        self.hidden_specs.get(node)
    }
}
