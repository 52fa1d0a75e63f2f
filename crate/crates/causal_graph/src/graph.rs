//! Causal graphs over observed and hidden nodes.
//!
//! A [`CausalGraph`] is a DAG whose nodes are split into an observed set and a
//! hidden set. Hidden nodes model unobserved confounders, so edges from an
//! observed node into a hidden one are rejected: a confounder may itself be
//! confounded, but it cannot be caused by something we measure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::GraphError;

/// Index of a node inside a [`CausalGraph`]. Observed nodes occupy
/// `0..n_observed()` in declaration order, hidden nodes follow.
pub type NodeId = usize;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphDoc {
    observed: Vec<String>,
    #[serde(default)]
    hidden: Vec<String>,
    edges: Vec<(String, String)>,
}

/// A validated directed acyclic graph with observed and hidden nodes.
#[derive(Debug, Clone)]
pub struct CausalGraph {
    observed: Vec<String>,
    hidden: Vec<String>,
    edges: Vec<(String, String)>,
    index: BTreeMap<String, NodeId>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    topo: Vec<NodeId>,
}

impl CausalGraph {
    /// Builds and validates a graph. Node names must be unique across both
    /// sets, every edge endpoint must be declared, edges may not point from
    /// an observed node into a hidden one, and the full graph must be acyclic.
    pub fn new(
        observed: Vec<String>,
        hidden: Vec<String>,
        edges: Vec<(String, String)>,
    ) -> Result<Self, GraphError> {
        let mut index = BTreeMap::new();
        for (i, name) in observed.iter().chain(hidden.iter()).enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(GraphError::DuplicateName(name.clone()));
            }
        }
        let n = index.len();
        let n_obs = observed.len();

        let mut parents: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (p_name, c_name) in &edges {
            let p = *index
                .get(p_name)
                .ok_or_else(|| GraphError::UnknownNode(p_name.clone()))?;
            let c = *index
                .get(c_name)
                .ok_or_else(|| GraphError::UnknownNode(c_name.clone()))?;
            if p == c {
                return Err(GraphError::SelfLoop(p_name.clone()));
            }
            if p < n_obs && c >= n_obs {
                return Err(GraphError::EdgeIntoHidden {
                    parent: p_name.clone(),
                    child: c_name.clone(),
                });
            }
            if children[p].contains(&c) {
                return Err(GraphError::DuplicateEdge {
                    parent: p_name.clone(),
                    child: c_name.clone(),
                });
            }
            children[p].push(c);
            parents[c].push(p);
        }

        let topo = stable_topological_sort(n, &parents, &children).map_err(|cycle_ids| {
            let names: Vec<String> = cycle_ids
                .iter()
                .map(|&i| name_of(&observed, &hidden, i).to_owned())
                .collect();
            GraphError::Cycle(names.join(" -> "))
        })?;

        Ok(Self {
            observed,
            hidden,
            edges,
            index,
            parents,
            children,
            topo,
        })
    }

    /// Parses the JSON graph document format: an object with keys
    /// `"observed"`, `"hidden"` (optional) and `"edges"`.
    pub fn from_json_str(s: &str) -> Result<Self, GraphError> {
        let doc: GraphDoc = serde_json::from_str(s)?;
        Self::new(doc.observed, doc.hidden, doc.edges)
    }

    /// Canonical JSON rendering of the graph document. Stable across runs,
    /// so it also serves as the hashing input for archive integrity checks.
    pub fn to_json_string(&self) -> String {
        let doc = GraphDoc {
            observed: self.observed.clone(),
            hidden: self.hidden.clone(),
            edges: self.edges.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("graph document serializes")
    }

    pub fn observed_nodes(&self) -> &[String] {
        &self.observed
    }

    pub fn hidden_nodes(&self) -> &[String] {
        &self.hidden
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.observed.len() + self.hidden.len()
    }

    pub fn node_id(&self, name: &str) -> Result<NodeId, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_owned()))
    }

    pub fn name(&self, id: NodeId) -> &str {
        name_of(&self.observed, &self.hidden, id)
    }

    pub fn is_hidden(&self, id: NodeId) -> bool {
        id >= self.observed.len()
    }

    pub fn parents_of(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id]
    }

    pub fn children_of(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    pub fn observed_parents(&self, id: NodeId) -> Vec<NodeId> {
        self.parents[id]
            .iter()
            .copied()
            .filter(|&p| !self.is_hidden(p))
            .collect()
    }

    pub fn hidden_parents(&self, id: NodeId) -> Vec<NodeId> {
        self.parents[id]
            .iter()
            .copied()
            .filter(|&p| self.is_hidden(p))
            .collect()
    }

    pub fn has_edge(&self, parent: NodeId, child: NodeId) -> bool {
        self.children[parent].contains(&child)
    }

    /// Topological order over all nodes. Deterministic: among the nodes
    /// available at each step the one declared first is emitted first.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// The topological order restricted to observed nodes.
    pub fn observed_topological_order(&self) -> Vec<NodeId> {
        self.topo
            .iter()
            .copied()
            .filter(|&i| !self.is_hidden(i))
            .collect()
    }

    /// The topological order restricted to hidden nodes.
    pub fn hidden_topological_order(&self) -> Vec<NodeId> {
        self.topo
            .iter()
            .copied()
            .filter(|&i| self.is_hidden(i))
            .collect()
    }

    /// All strict ancestors of `id` (excluding `id` itself), as a sorted list.
    pub fn ancestors_of(&self, id: NodeId) -> Vec<NodeId> {
        self.reach(id, |g, i| &g.parents[i])
    }

    /// All strict descendants of `id` (excluding `id` itself), as a sorted list.
    pub fn descendants_of(&self, id: NodeId) -> Vec<NodeId> {
        self.reach(id, |g, i| &g.children[i])
    }

    fn reach(&self, start: NodeId, step: impl Fn(&Self, NodeId) -> &[NodeId]) -> Vec<NodeId> {
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = step(self, start).to_vec();
        while let Some(i) = stack.pop() {
            if !seen[i] {
                seen[i] = true;
                stack.extend_from_slice(step(self, i));
            }
        }
        seen.iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .collect()
    }

    /// Renders the edge list, mostly for error messages and debugging.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{} observed, {} hidden, {} edges",
            self.observed.len(),
            self.hidden.len(),
            self.edges.len()
        );
        s
    }
}

fn name_of<'a>(observed: &'a [String], hidden: &'a [String], id: NodeId) -> &'a str {
    if id < observed.len() {
        &observed[id]
    } else {
        &hidden[id - observed.len()]
    }
}

/// Kahn's algorithm with a deterministic frontier: the lowest node id wins,
/// so declaration order breaks ties. On failure returns the node ids of one
/// directed cycle.
fn stable_topological_sort(
    n: usize,
    parents: &[Vec<NodeId>],
    children: &[Vec<NodeId>],
) -> Result<Vec<NodeId>, Vec<NodeId>> {
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut order = Vec::with_capacity(n);
    let mut frontier: Vec<NodeId> = (0..n).filter(|&i| indegree[i] == 0).collect();
    while !frontier.is_empty() {
        frontier.sort_unstable_by(|a, b| b.cmp(a));
        let next = frontier.pop().expect("nonempty");
        order.push(next);
        for &c in &children[next] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                frontier.push(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Some nodes remain on a cycle; walk parent links among them until a
    // node repeats, then cut the walk down to the loop itself.
    let start = (0..n).find(|&i| indegree[i] > 0).expect("cycle exists");
    let mut walk = vec![start];
    let mut cur = start;
    loop {
        let p = *parents[cur]
            .iter()
            .find(|&&p| indegree[p] > 0)
            .expect("cyclic node has a cyclic parent");
        if let Some(pos) = walk.iter().position(|&w| w == p) {
            let mut cycle = walk[pos..].to_vec();
            cycle.reverse();
            cycle.push(p);
            return Err(cycle);
        }
        walk.push(p);
        cur = p;
    }
}

/// Reads and validates a graph document from disk.
pub fn load_graph(path: &Path) -> Result<CausalGraph, GraphError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
    CausalGraph::from_json_str(&text)
}
