//! Autoregressive masks derived from a causal graph.
//!
//! Both networks of the model are masked autoregressive flows; the masks
//! below pin down which inputs each transformed coordinate may read.
//!
//! Decoder (generative direction): coordinate x_i reads its own channel, its
//! observed parents, and, through the context, exactly the hidden parents of
//! x_i. Nothing else. Encoder (inference direction): latent z_k reads its
//! hidden parents, its children, and the parents of those children, with
//! hidden nodes later in the latent ordering dropped so the dependency
//! structure over the latents stays acyclic.

use ndarray::Array2;

use crate::graph::CausalGraph;

/// Masks for one masked autoregressive network.
///
/// `input_mask` has shape (output dim, input dim) over the flow's own
/// coordinates; `context_mask` has shape (output dim, context dim). Rows and
/// columns follow declaration order. `ordering` lists the flow's own node
/// names in evaluation order; permuting `input_mask` by it yields a
/// lower-triangular matrix (diagonal included, for the transformed channel
/// itself).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMask {
    pub input_mask: Array2<bool>,
    pub context_mask: Array2<bool>,
    pub ordering: Vec<String>,
}

impl FlowMask {
    pub fn out_dim(&self) -> usize {
        self.input_mask.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.input_mask.ncols()
    }

    pub fn ctx_dim(&self) -> usize {
        self.context_mask.ncols()
    }

    /// Positions of `ordering` as indices into declaration order.
    pub fn ordering_indices(&self, declared: &[String]) -> Vec<usize> {
        self.ordering
            .iter()
            .map(|n| {
                declared
                    .iter()
                    .position(|d| d == n)
                    .expect("ordering permutes declared names")
            })
            .collect()
    }
}

/// Mask of the generative network, which transforms the observed vector given
/// the hidden vector as context.
///
/// `input_mask[i][j]` is true when j = i (the coordinate's own channel) or
/// when x_j is a declared parent of x_i. `context_mask[i][k]` is true exactly
/// when hidden node z_k is a parent of x_i, so only the children of a
/// confounder are conditioned on it.
pub fn build_decoder_mask(g: &CausalGraph) -> FlowMask {
    let d = g.n_observed();
    let h = g.n_hidden();
    let mut input_mask = Array2::from_elem((d, d), false);
    let mut context_mask = Array2::from_elem((d, h), false);
    for i in 0..d {
        input_mask[(i, i)] = true;
        for &p in g.parents_of(i) {
            if g.is_hidden(p) {
                context_mask[(i, p - d)] = true;
            } else {
                input_mask[(i, p)] = true;
            }
        }
    }
    let ordering = g
        .observed_topological_order()
        .into_iter()
        .map(|i| g.name(i).to_owned())
        .collect();
    FlowMask {
        input_mask,
        context_mask,
        ordering,
    }
}

/// Mask of the deconfounding network, which transforms the latent vector
/// given a masked view of the observed vector as context.
///
/// Latent z_k conditions on ch(z_k) and pa(c) for each child c, plus its own
/// hidden parents. Observed members of that set enter through the context;
/// hidden members enter through `input_mask`, restricted to latents earlier
/// in the latent ordering so no cyclic dependency can arise. The ordering is
/// the hidden nodes' topological order with declaration order breaking ties.
pub fn build_encoder_mask(g: &CausalGraph) -> FlowMask {
    let d = g.n_observed();
    let h = g.n_hidden();
    let hidden_order = g.hidden_topological_order();
    // rank in the latent ordering, indexed by hidden offset
    let mut rank = vec![0usize; h];
    for (r, &id) in hidden_order.iter().enumerate() {
        rank[id - d] = r;
    }

    let mut input_mask = Array2::from_elem((h, h), false);
    let mut context_mask = Array2::from_elem((h, d), false);
    for k in 0..h {
        let zk = d + k;
        input_mask[(k, k)] = true;
        let mut allow = |node: usize| {
            if g.is_hidden(node) {
                let j = node - d;
                if rank[j] < rank[k] {
                    input_mask[(k, j)] = true;
                }
            } else {
                context_mask[(k, node)] = true;
            }
        };
        for &p in g.parents_of(zk) {
            allow(p);
        }
        for &c in g.children_of(zk) {
            allow(c);
            for &cp in g.parents_of(c) {
                if cp != zk {
                    allow(cp);
                }
            }
        }
    }
    let ordering = hidden_order.iter().map(|&i| g.name(i).to_owned()).collect();
    FlowMask {
        input_mask,
        context_mask,
        ordering,
    }
}
