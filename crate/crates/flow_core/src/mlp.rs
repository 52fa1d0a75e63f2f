//! Per-coordinate conditioner networks.
//!
//! Each transformed coordinate owns a small feed-forward network that maps
//! the concatenated (inputs, context) vector to that coordinate's raw
//! transformer parameters. Masking is an elementwise multiply on the input,
//! so a disallowed entry contributes nothing to the output and receives no
//! gradient. The final layer starts at zero, which makes a fresh network
//! emit zero parameters and the whole flow start as the identity.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A masked feed-forward network with tanh hidden activations and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMlp {
    mask: Array1<f64>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Cached activations from one forward pass, consumed by `backward`.
pub struct MlpCache {
    masked_input: Array2<f64>,
    hidden: Vec<Array2<f64>>,
}

impl MaskedMlp {
    /// Builds a network `mask.len() -> widths... -> out_dim`. Hidden weights
    /// draw from a scaled normal; the output layer is zero.
    pub fn new(mask: &[bool], widths: &[usize], out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = Vec::with_capacity(widths.len() + 2);
        dims.push(mask.len());
        dims.extend_from_slice(widths);
        dims.push(out_dim);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let last = l == dims.len() - 2;
            let scale = if last || fan_in == 0 {
                0.0
            } else {
                1.0 / (fan_in as f64).sqrt()
            };
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                let e: f64 = rng.sample(StandardNormal);
                e * scale
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Self {
            mask: mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            weights,
            biases,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.mask.len()
    }

    pub fn out_dim(&self) -> usize {
        self.biases.last().expect("at least one layer").len()
    }

    /// Batched forward pass: `input` is (batch, in_dim), the result is
    /// (batch, out_dim) plus the cache for `backward`.
    pub fn forward(&self, input: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let masked_input = input * &self.mask;
        let n_layers = self.weights.len();
        let mut hidden = Vec::with_capacity(n_layers - 1);
        let mut cur = masked_input.clone();
        for l in 0..n_layers - 1 {
            let mut pre = cur.dot(&self.weights[l].t());
            pre += &self.biases[l];
            pre.mapv_inplace(f64::tanh);
            hidden.push(pre.clone());
            cur = pre;
        }
        let mut out = cur.dot(&self.weights[n_layers - 1].t());
        out += &self.biases[n_layers - 1];
        (
            out,
            MlpCache {
                masked_input,
                hidden,
            },
        )
    }

    /// Backpropagates `d_out` (batch, out_dim). Parameter gradients
    /// accumulate into `grads` (this network's region, see `param_count`);
    /// input gradients, masked, accumulate into `d_input` when given.
    pub fn backward(
        &self,
        cache: &MlpCache,
        d_out: &Array2<f64>,
        grads: &mut [f64],
        mut d_input: Option<&mut Array2<f64>>,
    ) {
        debug_assert_eq!(grads.len(), self.param_count());
        let n_layers = self.weights.len();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.weights[l].len() + self.biases[l].len();
        }

        let mut delta = d_out.clone();
        for l in (0..n_layers).rev() {
            let below = if l == 0 {
                &cache.masked_input
            } else {
                &cache.hidden[l - 1]
            };
            let dw = delta.t().dot(below);
            let db = delta.sum_axis(Axis(0));
            let region = &mut grads[offsets[l]..offsets[l] + dw.len() + db.len()];
            for (g, v) in region[..dw.len()].iter_mut().zip(dw.iter()) {
                *g += v;
            }
            for (g, v) in region[dw.len()..].iter_mut().zip(db.iter()) {
                *g += v;
            }
            if l == 0 {
                if let Some(d_input) = d_input.as_deref_mut() {
                    let d_in = delta.dot(&self.weights[0]) * &self.mask;
                    *d_input += &d_in;
                }
            } else {
                let mut d_below = delta.dot(&self.weights[l]);
                let h = &cache.hidden[l - 1];
                d_below.zip_mut_with(h, |d, &a| *d *= 1.0 - a * a);
                delta = d_below;
            }
        }
    }

    /// Number of scalar parameters, in the flat layout weights-then-bias per
    /// layer, input side first.
    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Appends parameters in the flat layout.
    pub fn append_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    /// Loads parameters from the flat layout. `src` must be exactly
    /// `param_count` long.
    pub fn load_params(&mut self, src: &[f64]) {
        debug_assert_eq!(src.len(), self.param_count());
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = src[off];
                off += 1;
            }
            for v in b.iter_mut() {
                *v = src[off];
                off += 1;
            }
        }
    }
}
