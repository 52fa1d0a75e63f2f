//! The deconfounded causal flow model.
//!
//! Two conditional bijections share the work: the generative network maps
//! observed variables to exogenous noise given the latent confounders, and
//! the deconfounding network maps auxiliary noise to the latent confounders
//! given a masked view of the observations. Each hidden node of the graph
//! owns a block of latent coordinates; block sizes are free, and a total of
//! zero collapses the model to an unconfounded causal flow.
//!
//! All internal math runs in standardized units; the public sampling
//! operations accept and return raw units via the stored per-column
//! standardization.

use std::collections::BTreeMap;

use causal_graph::{build_decoder_mask, build_encoder_mask, CausalGraph, FlowMask};
use flow_core::{BaseDist, ConditionalBijection, LayerSpec};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scm_lab::Dataset;
use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Architecture of one conditional flow network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowArch {
    pub spec: LayerSpec,
    pub widths: Vec<usize>,
    pub layers: usize,
}

impl Default for FlowArch {
    fn default() -> Self {
        Self {
            spec: LayerSpec::RationalQuadraticSpline {
                bins: 8,
                bound: 5.0,
            },
            widths: vec![64, 64],
            layers: 1,
        }
    }
}

/// The terms of one evidence-lower-bound evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms {
    pub value: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct DeCaFlowModel {
    graph: CausalGraph,
    latent_dims: BTreeMap<String, usize>,
    blocks: Vec<usize>,
    latent_names: Vec<String>,
    generative: ConditionalBijection,
    deconfounding: Option<ConditionalBijection>,
    generative_arch: FlowArch,
    deconfounding_arch: FlowArch,
    prior: BaseDist,
    base: BaseDist,
    standardization: Vec<(f64, f64)>,
}

impl DeCaFlowModel {
    /// Builds an identity-initialized model. `latent_dims` must assign a
    /// block size (possibly zero) to every hidden node of the graph.
    pub fn new(
        graph: CausalGraph,
        latent_dims: BTreeMap<String, usize>,
        generative_arch: FlowArch,
        deconfounding_arch: FlowArch,
        seed: u64,
    ) -> Result<Self, ModelError> {
        for name in latent_dims.keys() {
            let id = graph.node_id(name)?;
            if !graph.is_hidden(id) {
                return Err(ModelError::LatentSpec(format!(
                    "{name} is observed, latent blocks belong to hidden nodes"
                )));
            }
        }
        let mut blocks = Vec::with_capacity(graph.n_hidden());
        for name in graph.hidden_nodes() {
            match latent_dims.get(name) {
                Some(&b) => blocks.push(b),
                None => {
                    return Err(ModelError::LatentSpec(format!(
                        "hidden node {name} has no latent block size"
                    )))
                }
            }
        }
        let mut latent_names = Vec::new();
        for (name, &b) in graph.hidden_nodes().iter().zip(&blocks) {
            for a in 0..b {
                latent_names.push(format!("{name}.{a}"));
            }
        }
        let total: usize = blocks.iter().sum();

        let decoder_mask = expand_decoder_context(build_decoder_mask(&graph), &blocks);
        let mut gen_rng = ChaCha8Rng::seed_from_u64(seed);
        gen_rng.set_stream(0);
        let generative = ConditionalBijection::new(
            decoder_mask,
            generative_arch.spec,
            generative_arch.widths.clone(),
            generative_arch.layers,
            &mut gen_rng,
        )?;

        let deconfounding = if total > 0 {
            let encoder_mask =
                expand_encoder(&build_encoder_mask(&graph), &blocks, graph.hidden_nodes());
            let mut enc_rng = ChaCha8Rng::seed_from_u64(seed);
            enc_rng.set_stream(1);
            Some(ConditionalBijection::new(
                encoder_mask,
                deconfounding_arch.spec,
                deconfounding_arch.widths.clone(),
                deconfounding_arch.layers,
                &mut enc_rng,
            )?)
        } else {
            None
        };

        let standardization = vec![(0.0, 1.0); graph.n_observed()];
        Ok(Self {
            graph,
            latent_dims,
            blocks,
            latent_names,
            generative,
            deconfounding,
            generative_arch,
            deconfounding_arch,
            prior: BaseDist::StandardNormal,
            base: BaseDist::StandardNormal,
            standardization,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn latent_dims(&self) -> &BTreeMap<String, usize> {
        &self.latent_dims
    }

    pub fn latent_names(&self) -> &[String] {
        &self.latent_names
    }

    pub fn total_latent_dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn generative(&self) -> &ConditionalBijection {
        &self.generative
    }

    pub fn deconfounding(&self) -> Option<&ConditionalBijection> {
        self.deconfounding.as_ref()
    }

    pub fn generative_arch(&self) -> &FlowArch {
        &self.generative_arch
    }

    pub fn deconfounding_arch(&self) -> &FlowArch {
        &self.deconfounding_arch
    }

    pub fn standardization(&self) -> &[(f64, f64)] {
        &self.standardization
    }

    pub fn set_standardization(&mut self, s: Vec<(f64, f64)>) -> Result<(), ModelError> {
        if s.len() != self.graph.n_observed() {
            return Err(ModelError::Standardization(format!(
                "expected {} column entries, got {}",
                self.graph.n_observed(),
                s.len()
            )));
        }
        if let Some((m, sd)) = s
            .iter()
            .find(|(m, sd)| !m.is_finite() || !sd.is_finite() || *sd <= 0.0)
        {
            return Err(ModelError::Standardization(format!(
                "invalid column moments ({m}, {sd})"
            )));
        }
        self.standardization = s;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.generative.param_count() + self.deconfounding.as_ref().map_or(0, |f| f.param_count())
    }

    pub fn export_params(&self) -> Vec<f64> {
        let mut out = self.generative.export_params();
        if let Some(enc) = &self.deconfounding {
            out.extend(enc.export_params());
        }
        out
    }

    pub fn import_params(&mut self, src: &[f64]) -> Result<(), ModelError> {
        let n_gen = self.generative.param_count();
        let total = self.param_count();
        if src.len() != total {
            return Err(ModelError::Data(format!(
                "parameter vector has length {}, model has {total}",
                src.len()
            )));
        }
        self.generative.import_params(&src[..n_gen])?;
        if let Some(enc) = &mut self.deconfounding {
            enc.import_params(&src[n_gen..])?;
        }
        Ok(())
    }

    pub fn standardize_matrix(&self, raw: &Array2<f64>) -> Array2<f64> {
        let mut out = raw.clone();
        for (c, &(m, sd)) in self.standardization.iter().enumerate() {
            out.column_mut(c).mapv_inplace(|v| (v - m) / sd);
        }
        out
    }

    pub fn destandardize_matrix(&self, std: &Array2<f64>) -> Array2<f64> {
        let mut out = std.clone();
        for (c, &(m, sd)) in self.standardization.iter().enumerate() {
            out.column_mut(c).mapv_inplace(|v| m + sd * v);
        }
        out
    }

    fn observed_column(&self, name: &str) -> Result<usize, ModelError> {
        let id = self.graph.node_id(name)?;
        if self.graph.is_hidden(id) {
            return Err(ModelError::UnknownNode(format!("{name} is hidden")));
        }
        Ok(id)
    }

    fn standardize_value(&self, col: usize, v: f64) -> f64 {
        let (m, sd) = self.standardization[col];
        (v - m) / sd
    }

    /// Draws the latent block and the exogenous noise for `n` rows, in that
    /// order, from a single stream. Interventional sampling reuses this, so
    /// shared seeds give shared draws.
    fn draw_latent_and_noise(&self, n: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
        let dz = self.total_latent_dim();
        let d = self.graph.n_observed();
        let z = Array2::from_shape_fn((n, dz), |_| self.prior.sample(rng));
        let u = Array2::from_shape_fn((n, d), |_| self.base.sample(rng));
        (z, u)
    }

    /// Observational samples in standardized units.
    pub(crate) fn sample_std(&self, n: usize, seed: u64) -> Result<Array2<f64>, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (z, u) = self.draw_latent_and_noise(n, &mut rng);
        Ok(self.generative.inverse(&u, &z)?)
    }

    pub fn sample_observational(&self, n: usize, seed: u64) -> Result<Dataset, ModelError> {
        let std = self.sample_std(n, seed)?;
        Ok(Dataset {
            values: self.destandardize_matrix(&std),
            column_names: self.graph.observed_nodes().to_vec(),
            ground_truth: None,
            standardization: None,
        })
    }

    /// Interventional samples in standardized units; `alpha_std` is the
    /// clamp value for column `t_col`, already standardized.
    fn intervene_std(
        &self,
        t_col: usize,
        alpha_std: f64,
        n: usize,
        seed: u64,
    ) -> Result<Array2<f64>, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (z, mut u) = self.draw_latent_and_noise(n, &mut rng);
        let mut x = self.generative.inverse(&u, &z)?;
        for r in 0..n {
            x[(r, t_col)] = alpha_std;
        }
        let (u_clamped, _) = self.generative.forward(&x, &z)?;
        for r in 0..n {
            u[(r, t_col)] = u_clamped[(r, t_col)];
        }
        Ok(self.generative.inverse(&u, &z)?)
    }

    /// Samples from the model under do(t = alpha). `alpha` is in raw units.
    pub fn intervene_sample(
        &self,
        t: &str,
        alpha: f64,
        n: usize,
        seed: u64,
    ) -> Result<Dataset, ModelError> {
        let t_col = self.observed_column(t)?;
        let std = self.intervene_std(t_col, self.standardize_value(t_col, alpha), n, seed)?;
        Ok(Dataset {
            values: self.destandardize_matrix(&std),
            column_names: self.graph.observed_nodes().to_vec(),
            ground_truth: None,
            standardization: None,
        })
    }

    /// Counterfactual outcome for one factual row under do(t = alpha), both
    /// in raw units. The posterior draw for the latent block uses `seed`.
    pub fn counterfactual(
        &self,
        x_factual: &[f64],
        t: &str,
        alpha: f64,
        seed: u64,
    ) -> Result<Vec<f64>, ModelError> {
        let d = self.graph.n_observed();
        if x_factual.len() != d {
            return Err(ModelError::Data(format!(
                "factual row has {} values, graph has {d} observed nodes",
                x_factual.len()
            )));
        }
        let t_col = self.observed_column(t)?;
        let raw = Array2::from_shape_vec((1, d), x_factual.to_vec()).expect("row shape");
        let x_std = self.standardize_matrix(&raw);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dz = self.total_latent_dim();
        let z = match &self.deconfounding {
            Some(enc) => {
                let eps = Array2::from_shape_fn((1, dz), |_| self.base.sample(&mut rng));
                enc.inverse(&eps, &x_std)?
            }
            None => Array2::zeros((1, 0)),
        };

        let (mut u, _) = self.generative.forward(&x_std, &z)?;
        let mut clamped = x_std.clone();
        clamped[(0, t_col)] = self.standardize_value(t_col, alpha);
        let (u_clamped, _) = self.generative.forward(&clamped, &z)?;
        u[(0, t_col)] = u_clamped[(0, t_col)];
        let cf_std = self.generative.inverse(&u, &z)?;
        let cf = self.destandardize_matrix(&cf_std);
        Ok(cf.row(0).to_vec())
    }

    /// Average treatment effect of moving t from `alpha1` to `alpha2` on y,
    /// in standardized units of y. Alphas are raw; both interventional
    /// samples share the same seed so common noise cancels exactly.
    pub fn ate(
        &self,
        t: &str,
        alpha1: f64,
        alpha2: f64,
        y: &str,
        n: usize,
        seed: u64,
    ) -> Result<f64, ModelError> {
        if n == 0 {
            return Err(ModelError::Data("ate needs at least one sample".into()));
        }
        let t_col = self.observed_column(t)?;
        let y_col = self.observed_column(y)?;
        let x1 = self.intervene_std(t_col, self.standardize_value(t_col, alpha1), n, seed)?;
        let x2 = self.intervene_std(t_col, self.standardize_value(t_col, alpha2), n, seed)?;
        let m1 = x1.column(y_col).mean().unwrap();
        let m2 = x2.column(y_col).mean().unwrap();
        Ok(m2 - m1)
    }

    /// Draws from the modeled posterior of the latent block given one raw
    /// observation: (n, total latent dim).
    pub fn posterior_sample(
        &self,
        x: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<Array2<f64>, ModelError> {
        let d = self.graph.n_observed();
        if x.len() != d {
            return Err(ModelError::Data(format!(
                "observation has {} values, graph has {d} observed nodes",
                x.len()
            )));
        }
        let dz = self.total_latent_dim();
        let enc = match &self.deconfounding {
            Some(enc) => enc,
            None => return Ok(Array2::zeros((n, 0))),
        };
        let raw = Array2::from_shape_vec((1, d), x.to_vec()).expect("row shape");
        let row = self.standardize_matrix(&raw);
        let mut rep = Array2::zeros((n, d));
        for r in 0..n {
            rep.row_mut(r).assign(&row.row(0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = Array2::from_shape_fn((n, dz), |_| self.base.sample(&mut rng));
        Ok(enc.inverse(&eps, &rep)?)
    }

    /// Evidence lower bound of one standardized batch with the given KL
    /// coefficient, estimated with `mc_samples` posterior draws per row.
    pub fn elbo(
        &self,
        batch: &Array2<f64>,
        beta: f64,
        mc_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ElboTerms, ModelError> {
        let b = batch.nrows();
        if b == 0 {
            return Err(ModelError::Data("elbo of an empty batch".into()));
        }
        let dz = self.total_latent_dim();
        let enc = match &self.deconfounding {
            Some(enc) => enc,
            None => {
                let ctx = Array2::zeros((b, 0));
                let lp = self.generative.log_prob(batch, &ctx, &self.base)?;
                let recon = lp.mean().unwrap();
                return Ok(ElboTerms {
                    value: recon,
                    reconstruction: recon,
                    kl: 0.0,
                });
            }
        };

        let samples = mc_samples.max(1);
        let mut recon_sum = 0.0;
        let mut kl_sum = 0.0;
        for _ in 0..samples {
            let eps = Array2::from_shape_fn((b, dz), |_| self.base.sample(rng));
            let cache = enc.inverse_with_cache(&eps, batch)?;
            let z = cache.output();
            let logdet = cache.forward_logdet();
            let lp = self.generative.log_prob(batch, z, &self.base)?;
            recon_sum += lp.sum();
            for r in 0..b {
                let mut kl_row = logdet[r];
                for k in 0..dz {
                    kl_row += 0.5 * (z[(r, k)] * z[(r, k)] - eps[(r, k)] * eps[(r, k)]);
                }
                kl_sum += kl_row;
            }
        }
        let scale = (b * samples) as f64;
        let reconstruction = recon_sum / scale;
        let kl = kl_sum / scale;
        Ok(ElboTerms {
            value: reconstruction - beta * kl,
            reconstruction,
            kl,
        })
    }

    /// ELBO with gradient accumulation for one optimization step on the
    /// negated objective. Returns the terms and the applied KL coefficient,
    /// which is min(1, KL estimate) while warm-up is active and 1 after.
    /// `grads` covers the generative parameters followed by the
    /// deconfounding parameters and is accumulated into, not overwritten.
    pub fn elbo_backward(
        &self,
        batch: &Array2<f64>,
        warmup_active: bool,
        mc_samples: usize,
        rng: &mut ChaCha8Rng,
        grads: &mut [f64],
    ) -> Result<(ElboTerms, f64), ModelError> {
        let b = batch.nrows();
        if b == 0 {
            return Err(ModelError::Data("elbo of an empty batch".into()));
        }
        debug_assert_eq!(grads.len(), self.param_count());
        let n_gen = self.generative.param_count();
        let dz = self.total_latent_dim();

        let enc = match &self.deconfounding {
            Some(enc) => enc,
            None => {
                let ctx = Array2::zeros((b, 0));
                let weights = Array1::from_elem(b, -1.0 / b as f64);
                let (lp, _) = self.generative.log_prob_backward(
                    batch,
                    &ctx,
                    &weights,
                    &mut grads[..n_gen],
                )?;
                let recon = lp.mean().unwrap();
                let beta = if warmup_active { 0.0 } else { 1.0 };
                return Ok((
                    ElboTerms {
                        value: recon,
                        reconstruction: recon,
                        kl: 0.0,
                    },
                    beta,
                ));
            }
        };

        let samples = mc_samples.max(1);
        let scale = (b * samples) as f64;
        let weights = Array1::from_elem(b, -1.0 / scale);

        let mut recon_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut passes = Vec::with_capacity(samples);
        for _ in 0..samples {
            let eps = Array2::from_shape_fn((b, dz), |_| self.base.sample(rng));
            let cache = enc.inverse_with_cache(&eps, batch)?;
            let logdet = cache.forward_logdet();
            let z = cache.output().clone();
            let (lp, dz_grad) =
                self.generative
                    .log_prob_backward(batch, &z, &weights, &mut grads[..n_gen])?;
            recon_sum += lp.sum();
            for r in 0..b {
                let mut kl_row = logdet[r];
                for k in 0..dz {
                    kl_row += 0.5 * (z[(r, k)] * z[(r, k)] - eps[(r, k)] * eps[(r, k)]);
                }
                kl_sum += kl_row;
            }
            passes.push((cache, z, dz_grad));
        }

        let reconstruction = recon_sum / scale;
        let kl = kl_sum / scale;
        let beta = if warmup_active { kl.min(1.0) } else { 1.0 };

        let coeff = beta / scale;
        let w = Array1::from_elem(b, coeff);
        for (cache, z, dz_grad) in &passes {
            let mut a = dz_grad.clone();
            a.scaled_add(coeff, z);
            enc.inverse_linear_backward(cache, &a, &w, &mut grads[n_gen..]);
        }

        Ok((
            ElboTerms {
                value: reconstruction - beta * kl,
                reconstruction,
                kl,
            },
            beta,
        ))
    }
}

/// Widens the decoder context from one column per hidden node to one column
/// per latent coordinate, block by block.
fn expand_decoder_context(mask: FlowMask, blocks: &[usize]) -> FlowMask {
    let d = mask.out_dim();
    let total: usize = blocks.iter().sum();
    let mut ctx = Array2::from_elem((d, total), false);
    let mut off = 0;
    for (k, &b) in blocks.iter().enumerate() {
        for i in 0..d {
            if mask.context_mask[(i, k)] {
                for a in 0..b {
                    ctx[(i, off + a)] = true;
                }
            }
        }
        off += b;
    }
    FlowMask {
        input_mask: mask.input_mask,
        context_mask: ctx,
        ordering: mask.ordering,
    }
}

/// Expands the encoder mask from hidden nodes to latent coordinates. Edges
/// between different blocks connect every coordinate pair; within a block
/// each coordinate reads itself and the coordinates before it, keeping the
/// expanded pattern acyclic.
fn expand_encoder(mask: &FlowMask, blocks: &[usize], hidden: &[String]) -> FlowMask {
    let h = blocks.len();
    let total: usize = blocks.iter().sum();
    let d_obs = mask.ctx_dim();
    let mut offsets = Vec::with_capacity(h);
    let mut off = 0;
    for &b in blocks {
        offsets.push(off);
        off += b;
    }

    let mut input = Array2::from_elem((total, total), false);
    let mut ctx = Array2::from_elem((total, d_obs), false);
    for k in 0..h {
        for a in 0..blocks[k] {
            let row = offsets[k] + a;
            for bb in 0..=a {
                input[(row, offsets[k] + bb)] = true;
            }
            for j in 0..h {
                if j != k && mask.input_mask[(k, j)] {
                    for bb in 0..blocks[j] {
                        input[(row, offsets[j] + bb)] = true;
                    }
                }
            }
            for c in 0..d_obs {
                ctx[(row, c)] = mask.context_mask[(k, c)];
            }
        }
    }

    let mut ordering = Vec::with_capacity(total);
    for name in &mask.ordering {
        let k = hidden
            .iter()
            .position(|n| n == name)
            .expect("encoder ordering names hidden nodes");
        for a in 0..blocks[k] {
            ordering.push(format!("{name}.{a}"));
        }
    }
    FlowMask {
        input_mask: input,
        context_mask: ctx,
        ordering,
    }
}
