//! Random nonlinear mechanisms for an arbitrary graph.
//!
//! Each non-root node gets a one-hidden-layer tanh feature map with seeded
//! random weights, rescaled against a pilot sample so every node comes out
//! with roughly unit marginal variance. Exogenous noise enters either
//! additively or through a multiplicative mix with the first parent.

use std::collections::BTreeMap;

use causal_graph::CausalGraph;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scm::{DistSpec, MechanismKind, NodeEquation, SyntheticSCM};
use crate::ScmError;

/// How exogenous noise enters a random mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Additive,
    Nonadditive,
}

const FEATURE_WIDTH: usize = 16;
const PILOT_ROWS: usize = 4096;
const NOISE_SCALE: f64 = 0.5;
const FEATURE_VARIANCE: f64 = 0.75;

/// Builds an SCM on `graph` whose non-root observed nodes use random
/// feature-map mechanisms. Roots (no parents at all) pass their standard
/// normal noise through unchanged. Deterministic in `seed`: the same call
/// yields parameter-identical equations.
pub fn build_random_mechanism_scm(
    graph: &CausalGraph,
    mode: NoiseMode,
    seed: u64,
) -> Result<SyntheticSCM, ScmError> {
    let mut param_rng = ChaCha8Rng::seed_from_u64(seed);
    param_rng.set_stream(0);
    let mut pilot_rng = ChaCha8Rng::seed_from_u64(seed);
    pilot_rng.set_stream(1);

    let mut pilot: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for name in graph.hidden_nodes() {
        let col: Vec<f64> = (0..PILOT_ROWS)
            .map(|_| pilot_rng.sample(StandardNormal))
            .collect();
        pilot.insert(name.clone(), col);
    }

    let mut equations = BTreeMap::new();
    for id in graph.observed_topological_order() {
        let name = graph.name(id).to_owned();
        let obs_parents: Vec<String> = graph
            .observed_parents(id)
            .into_iter()
            .map(|p| graph.name(p).to_owned())
            .collect();
        let hid_parents: Vec<String> = graph
            .hidden_parents(id)
            .into_iter()
            .map(|p| graph.name(p).to_owned())
            .collect();

        let pilot_noise: Vec<f64> = (0..PILOT_ROWS)
            .map(|_| pilot_rng.sample(StandardNormal))
            .collect();

        if obs_parents.is_empty() && hid_parents.is_empty() {
            pilot.insert(name.clone(), pilot_noise);
            equations.insert(
                name,
                NodeEquation {
                    observed_parents: obs_parents,
                    hidden_parents: hid_parents,
                    extra_noise: vec![],
                    kind: MechanismKind::Root,
                },
            );
            continue;
        }

        let n_obs = obs_parents.len();
        let n_hid = hid_parents.len();
        let fan_in = (n_obs + n_hid) as f64;
        let w_scale = 1.0 / fan_in.sqrt();
        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        let w_obs =
            Array2::from_shape_fn((FEATURE_WIDTH, n_obs), |_| normal(&mut param_rng) * w_scale);
        let w_hid =
            Array2::from_shape_fn((FEATURE_WIDTH, n_hid), |_| normal(&mut param_rng) * w_scale);
        let b = Array1::from_shape_fn(FEATURE_WIDTH, |_| normal(&mut param_rng) * 0.5);
        let v = Array1::from_shape_fn(FEATURE_WIDTH, |_| {
            normal(&mut param_rng) / (FEATURE_WIDTH as f64).sqrt()
        });

        let parent_cols: Vec<&Vec<f64>> = obs_parents
            .iter()
            .chain(hid_parents.iter())
            .map(|p| pilot.get(p).expect("pilot column materialized"))
            .collect();
        let mut raw = vec![0.0; PILOT_ROWS];
        for (r, value) in raw.iter_mut().enumerate() {
            let mut m = 0.0;
            for h in 0..FEATURE_WIDTH {
                let mut pre = b[h];
                for (j, col) in parent_cols.iter().enumerate().take(n_obs) {
                    pre += w_obs[(h, j)] * col[r];
                }
                for (j, col) in parent_cols.iter().enumerate().skip(n_obs) {
                    pre += w_hid[(h, j - n_obs)] * col[r];
                }
                m += v[h] * pre.tanh();
            }
            *value = m;
        }
        let mean = raw.iter().sum::<f64>() / PILOT_ROWS as f64;
        let var = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / PILOT_ROWS as f64;
        let sd = var.sqrt();
        let out_scale = if sd > 1e-9 {
            FEATURE_VARIANCE.sqrt() / sd
        } else {
            1.0
        };

        let eq = NodeEquation {
            observed_parents: obs_parents,
            hidden_parents: hid_parents,
            extra_noise: vec![],
            kind: MechanismKind::RandomFeature {
                w_obs,
                w_hid,
                b,
                v,
                out_scale,
                noise_scale: NOISE_SCALE,
                nonadditive: mode == NoiseMode::Nonadditive,
            },
        };

        let mut obs_buf = Vec::with_capacity(n_obs);
        let mut hid_buf = Vec::with_capacity(n_hid);
        let col: Vec<f64> = (0..PILOT_ROWS)
            .map(|r| {
                obs_buf.clear();
                obs_buf.extend(parent_cols.iter().take(n_obs).map(|c| c[r]));
                hid_buf.clear();
                hid_buf.extend(parent_cols.iter().skip(n_obs).map(|c| c[r]));
                eq.eval(&obs_buf, &hid_buf, pilot_noise[r], &[])
            })
            .collect();
        pilot.insert(name.clone(), col);
        equations.insert(name, eq);
    }

    let noise_specs = graph
        .observed_nodes()
        .iter()
        .map(|n| (n.clone(), DistSpec::StandardNormal))
        .collect();
    let hidden_specs = graph
        .hidden_nodes()
        .iter()
        .map(|n| (n.clone(), DistSpec::StandardNormal))
        .collect();
    SyntheticSCM::new(graph.clone(), equations, noise_specs, hidden_specs)
}
