//! The proxy-count ablation family: two hidden confounders, a treatment, an
//! outcome, and up to ten null proxies, in linear and nonlinear flavors with
//! fixed coefficients.

use std::collections::BTreeMap;

use causal_graph::CausalGraph;
use serde::{Deserialize, Serialize};

use crate::scm::{DistSpec, MechanismKind, NodeEquation, NonlinearNode, SyntheticSCM};
use crate::ScmError;

/// Which flavor of the ablation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationKind {
    Linear,
    Nonlinear,
}

/// Persisted description of an ablation dataset: flavor, proxy count, and
/// the simulation seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationSpec {
    pub kind: AblationKind,
    #[serde(rename = "S")]
    pub s: usize,
    pub seed: u64,
}

/// Maximum number of proxies the family defines.
pub const MAX_PROXIES: usize = 10;

/// Builds the ablation SCM with hidden z1 and z2, treatment t, outcome y and
/// the first `num_proxies` null proxies n1..nS. Hidden confounders and all
/// noise channels are standard normal.
pub fn build_ablation_scm(
    kind: AblationKind,
    num_proxies: usize,
) -> Result<SyntheticSCM, ScmError> {
    if num_proxies > MAX_PROXIES {
        return Err(ScmError::TooManyProxies(num_proxies));
    }
    let s = num_proxies;
    let mut observed = vec!["t".to_string(), "y".to_string()];
    let mut edges = vec![
        ("z1".to_string(), "t".to_string()),
        ("z2".to_string(), "t".to_string()),
        ("z1".to_string(), "y".to_string()),
        ("z2".to_string(), "y".to_string()),
        ("t".to_string(), "y".to_string()),
    ];
    for i in 1..=s {
        let n = format!("n{i}");
        edges.push(("z1".to_string(), n.clone()));
        edges.push(("z2".to_string(), n.clone()));
        observed.push(n);
    }
    let graph = CausalGraph::new(observed.clone(), vec!["z1".into(), "z2".into()], edges)?;

    let hid = vec!["z1".to_string(), "z2".to_string()];
    let mut equations = BTreeMap::new();
    match kind {
        AblationKind::Linear => {
            equations.insert(
                "t".to_string(),
                NodeEquation {
                    observed_parents: vec![],
                    hidden_parents: hid.clone(),
                    extra_noise: vec![],
                    kind: MechanismKind::Linear {
                        obs: vec![],
                        hid: vec![1.5, 0.5],
                        noise: 0.4,
                    },
                },
            );
            equations.insert(
                "y".to_string(),
                NodeEquation {
                    observed_parents: vec!["t".to_string()],
                    hidden_parents: hid.clone(),
                    extra_noise: vec![],
                    kind: MechanismKind::Linear {
                        obs: vec![0.9],
                        hid: vec![-0.75, 0.6],
                        noise: 0.3,
                    },
                },
            );
            // (z1 coefficient, z2 coefficient, noise coefficient) per proxy.
            const PROXY_COEFS: [(f64, f64, f64); 10] = [
                (-0.5, 0.3, 0.5),
                (0.75, -0.4, 0.4),
                (-0.85, 0.6, 0.6),
                (0.6, 0.6, 0.55),
                (-0.8, 0.4, 0.4),
                (0.9, -0.7, 0.6),
                (-0.72, 0.5, 0.56),
                (0.78, 0.4, 0.58),
                (-0.55, 0.7, 0.6),
                (0.88, 0.3, 0.4),
            ];
            for i in 1..=s {
                let (c1, c2, cn) = PROXY_COEFS[i - 1];
                equations.insert(
                    format!("n{i}"),
                    NodeEquation {
                        observed_parents: vec![],
                        hidden_parents: hid.clone(),
                        extra_noise: vec![],
                        kind: MechanismKind::Linear {
                            obs: vec![],
                            hid: vec![c1, c2],
                            noise: cn,
                        },
                    },
                );
            }
        }
        AblationKind::Nonlinear => {
            equations.insert(
                "t".to_string(),
                NodeEquation {
                    observed_parents: vec![],
                    hidden_parents: hid.clone(),
                    extra_noise: vec![],
                    kind: MechanismKind::AblationNonlinear(NonlinearNode::Treatment),
                },
            );
            // The outcome mixes the treatment with n2's noise channel; that
            // term only exists once n2 itself does.
            let with_cross_noise = s >= 2;
            equations.insert(
                "y".to_string(),
                NodeEquation {
                    observed_parents: vec!["t".to_string()],
                    hidden_parents: hid.clone(),
                    extra_noise: if with_cross_noise {
                        vec!["n2".to_string()]
                    } else {
                        vec![]
                    },
                    kind: MechanismKind::AblationNonlinear(NonlinearNode::Outcome {
                        with_cross_noise,
                    }),
                },
            );
            for i in 1..=s {
                equations.insert(
                    format!("n{i}"),
                    NodeEquation {
                        observed_parents: vec![],
                        hidden_parents: hid.clone(),
                        extra_noise: vec![],
                        kind: MechanismKind::AblationNonlinear(NonlinearNode::Proxy(i as u8)),
                    },
                );
            }
        }
    }

    let noise_specs = observed
        .iter()
        .map(|n| (n.clone(), DistSpec::StandardNormal))
        .collect();
    let hidden_specs = hid
        .iter()
        .map(|n| (n.clone(), DistSpec::StandardNormal))
        .collect();
    SyntheticSCM::new(graph, equations, noise_specs, hidden_specs)
}
