//! Proxy-based identifiability of causal queries under hidden confounding.
//!
//! A query do(t) -> y confounded by hidden z_k can still be answered from
//! observational data when the confounder leaves enough of a trace on other
//! observed variables. The check below looks, per confounder, for a pair of
//! distinct observed children acting as witnesses:
//!
//! * a proxy w, d-separated from the treatment given the confounders and
//!   covariates, and
//! * a null proxy n, d-separated from the outcome given the treatment, the
//!   confounders and the covariates,
//!
//! with n and w themselves d-separated given the confounders and covariates.
//! Whether such witnesses are informative enough (completeness) cannot be
//! read off the graph; reports carry a fixed caveat to that effect.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dsep::d_separated_ids;
use crate::graph::{CausalGraph, NodeId};
use crate::GraphError;

/// A causal query: intervene on `treatment`, read off `outcome`, optionally
/// conditioning on observed `covariates`. `intervention_values` carries the
/// intervention levels when the query is evaluated numerically; the
/// identifiability check ignores them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuerySpec {
    pub treatment: String,
    pub outcome: String,
    #[serde(default)]
    pub covariates: BTreeSet<String>,
    #[serde(default)]
    pub intervention_values: Vec<f64>,
}

impl QuerySpec {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            covariates: BTreeSet::new(),
            intervention_values: Vec::new(),
        }
    }

    pub fn with_covariates<I, S>(mut self, covariates: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.covariates = covariates.into_iter().map(Into::into).collect();
        self
    }

    fn validate(&self, g: &CausalGraph) -> Result<(), GraphError> {
        let t = g.node_id(&self.treatment)?;
        let y = g.node_id(&self.outcome)?;
        if self.treatment == self.outcome {
            return Err(GraphError::InvalidQuery(
                "treatment and outcome must differ".into(),
            ));
        }
        if g.is_hidden(t) || g.is_hidden(y) {
            return Err(GraphError::InvalidQuery(format!(
                "treatment and outcome must be observed, got {} and {}",
                self.treatment, self.outcome
            )));
        }
        for c in &self.covariates {
            let id = g.node_id(c)?;
            if g.is_hidden(id) {
                return Err(GraphError::InvalidQuery(format!("covariate {c} is hidden")));
            }
            if c == &self.treatment || c == &self.outcome {
                return Err(GraphError::InvalidQuery(format!(
                    "covariate {c} overlaps treatment or outcome"
                )));
            }
        }
        Ok(())
    }
}

/// Witness verdict for one confounder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfounderVerdict {
    pub deconfounded: bool,
    pub n_witness: Option<String>,
    pub w_witness: Option<String>,
}

/// Result of an identifiability check.
///
/// `identifiable` is true iff the set of confounders (hidden parents of both
/// treatment and outcome) is empty or every one of them is deconfounded by a
/// witness pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub identifiable: bool,
    pub per_confounder: std::collections::BTreeMap<String, ConfounderVerdict>,
    pub reason: String,
}

const COMPLETENESS_CAVEAT: &str = "completeness of the proxy-confounder relationship is assumed, not checked; it does not follow from the graph";

/// Decides whether do(treatment) -> outcome is identifiable.
///
/// Confounders are the hidden nodes that are parents of both treatment and
/// outcome. With no confounder the query is identifiable outright. Otherwise
/// each confounder needs a witness pair among its observed children (treatment,
/// outcome and covariates excluded): a null proxy n d-separated from the
/// outcome given treatment, confounders and covariates, and a proxy w
/// d-separated from the treatment given confounders and covariates, with
/// n != w and n d-separated from w given confounders and covariates. When
/// several pairs qualify the lexicographically first is reported.
pub fn check_query_identifiable(
    g: &CausalGraph,
    q: &QuerySpec,
) -> Result<IdentifiabilityReport, GraphError> {
    q.validate(g)?;
    let t = g.node_id(&q.treatment)?;
    let y = g.node_id(&q.outcome)?;
    let covariates: BTreeSet<NodeId> = q
        .covariates
        .iter()
        .map(|c| g.node_id(c))
        .collect::<Result<_, _>>()?;

    let confounders: Vec<NodeId> = g
        .hidden_parents(t)
        .into_iter()
        .filter(|p| g.parents_of(y).contains(p))
        .collect();

    if confounders.is_empty() {
        return Ok(IdentifiabilityReport {
            identifiable: true,
            per_confounder: Default::default(),
            reason: format!(
                "no hidden node is a parent of both {} and {}; the query is unconfounded",
                q.treatment, q.outcome
            ),
        });
    }

    // Conditioning set (z, c): all confounders of the pair plus covariates.
    let mut cond: BTreeSet<NodeId> = confounders.iter().copied().collect();
    cond.extend(covariates.iter().copied());
    let mut cond_with_t = cond.clone();
    cond_with_t.insert(t);

    let single = |v: NodeId| BTreeSet::from([v]);

    let mut per_confounder = std::collections::BTreeMap::new();
    let mut failed: Vec<String> = Vec::new();
    for &zk in &confounders {
        // Candidate witnesses: observed children of z_k other than the query
        // variables and covariates, in name order so reports are stable.
        let mut candidates: Vec<NodeId> = g
            .children_of(zk)
            .iter()
            .copied()
            .filter(|&c| !g.is_hidden(c) && c != t && c != y && !covariates.contains(&c))
            .collect();
        candidates.sort_by(|&a, &b| g.name(a).cmp(g.name(b)));

        let n_proxies: Vec<NodeId> = candidates
            .iter()
            .copied()
            .filter(|&v| d_separated_ids(g, &single(v), &single(y), &cond_with_t))
            .collect();
        let w_proxies: Vec<NodeId> = candidates
            .iter()
            .copied()
            .filter(|&v| d_separated_ids(g, &single(v), &single(t), &cond))
            .collect();

        let witness = n_proxies.iter().find_map(|&n| {
            w_proxies
                .iter()
                .find(|&&w| w != n && d_separated_ids(g, &single(n), &single(w), &cond))
                .map(|&w| (n, w))
        });

        let verdict = match witness {
            Some((n, w)) => ConfounderVerdict {
                deconfounded: true,
                n_witness: Some(g.name(n).to_owned()),
                w_witness: Some(g.name(w).to_owned()),
            },
            None => {
                failed.push(g.name(zk).to_owned());
                ConfounderVerdict {
                    deconfounded: false,
                    n_witness: None,
                    w_witness: None,
                }
            }
        };
        per_confounder.insert(g.name(zk).to_owned(), verdict);
    }

    let identifiable = failed.is_empty();
    let reason = if identifiable {
        format!(
            "every confounder of ({}, {}) has a distinct null-proxy/proxy witness pair; {}",
            q.treatment, q.outcome, COMPLETENESS_CAVEAT
        )
    } else {
        format!(
            "confounder(s) {} lack a distinct d-separated null-proxy/proxy witness pair",
            failed.join(", ")
        )
    };
    Ok(IdentifiabilityReport {
        identifiable,
        per_confounder,
        reason,
    })
}

/// Identifiability of the whole interventional distribution under do(t).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterventionReport {
    pub joint_identifiable: bool,
    pub per_outcome: std::collections::BTreeMap<String, IdentifiabilityReport>,
}

/// Checks do(t) against every observed descendant of t. Variables outside the
/// descendant set are untouched by the intervention, so the joint
/// interventional distribution is identifiable iff all per-descendant queries
/// are. No descendants means nothing changes and the joint flag is true.
pub fn check_intervention_identifiable(
    g: &CausalGraph,
    t: &str,
) -> Result<InterventionReport, GraphError> {
    let t_id = g.node_id(t)?;
    if g.is_hidden(t_id) {
        return Err(GraphError::InvalidQuery(format!(
            "intervention target {t} is hidden"
        )));
    }
    let mut per_outcome = std::collections::BTreeMap::new();
    let mut joint = true;
    for d in g.descendants_of(t_id) {
        if g.is_hidden(d) {
            continue;
        }
        let report = check_query_identifiable(g, &QuerySpec::new(t, g.name(d)))?;
        joint &= report.identifiable;
        per_outcome.insert(g.name(d).to_owned(), report);
    }
    Ok(InterventionReport {
        joint_identifiable: joint,
        per_outcome,
    })
}

/// Three-way classification of an observed edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    Unconfounded,
    ProxyIdentifiable,
    Unidentifiable,
}

/// Labels every observed-to-observed edge: unconfounded when the endpoints
/// share no hidden parent, otherwise identifiable or not per the witness
/// check with an empty covariate set.
pub fn classify_edges(
    g: &CausalGraph,
) -> Result<std::collections::BTreeMap<(String, String), EdgeClass>, GraphError> {
    let mut out = std::collections::BTreeMap::new();
    for (p_name, c_name) in g.edges() {
        let p = g.node_id(p_name)?;
        let c = g.node_id(c_name)?;
        if g.is_hidden(p) || g.is_hidden(c) {
            continue;
        }
        let shared: Vec<NodeId> = g
            .hidden_parents(p)
            .into_iter()
            .filter(|hp| g.parents_of(c).contains(hp))
            .collect();
        let class = if shared.is_empty() {
            EdgeClass::Unconfounded
        } else if check_query_identifiable(g, &QuerySpec::new(p_name, c_name))?.identifiable {
            EdgeClass::ProxyIdentifiable
        } else {
            EdgeClass::Unidentifiable
        };
        out.insert((p_name.clone(), c_name.clone()), class);
    }
    Ok(out)
}
