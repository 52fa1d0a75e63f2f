//! ELBO training with KL warm-up, plateau learning-rate decay, and early
//! stopping.
//!
//! The split is contiguous 80/10/10. Standardization is fitted on the train
//! split and stored in the model, so everything downstream of training works
//! in the same units. During warm-up the KL coefficient of each batch is
//! min(1, KL estimate of that batch), which keeps the posterior from
//! collapsing onto the prior before the reconstruction term has taken
//! shape; afterwards the coefficient is exactly 1.

use std::collections::BTreeMap;

use causal_graph::CausalGraph;
use metrics::{mmd, Bandwidth};
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scm_lab::{split_ranges, Dataset};
use serde::{Deserialize, Serialize};

use crate::model::{DeCaFlowModel, FlowArch};
use crate::TrainError;

/// Salt for the fixed seed of the per-epoch validation MMD samples.
const MMD_SAMPLE_SALT: u64 = 0x6d6d_645f_7472_6163;

/// Cap on rows entering the per-epoch validation MMD.
const MMD_ROW_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_epochs: usize,
    pub patience: usize,
    pub lr_plateau_factor: f64,
    pub seed: u64,
    pub mc_samples_kl: usize,
    pub generative: FlowArch,
    pub deconfounding: FlowArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            warmup_epochs: 30,
            patience: 20,
            lr_plateau_factor: 0.5,
            seed: 0,
            mc_samples_kl: 1,
            generative: FlowArch::default(),
            deconfounding: FlowArch::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.warmup_epochs > self.epochs {
            return Err(TrainError::Config(format!(
                "warmup_epochs {} exceeds epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if !(self.lr_plateau_factor > 0.0 && self.lr_plateau_factor <= 1.0) {
            return Err(TrainError::Config(
                "lr_plateau_factor must lie in (0, 1]".into(),
            ));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be positive".into()));
        }
        if self.mc_samples_kl == 0 {
            return Err(TrainError::Config("mc_samples_kl must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub elbo: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub beta: f64,
    pub val_loss: f64,
    pub val_mmd: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Adam over a flat parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let c2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

fn fit_standardization(train: &ArrayView2<f64>) -> Vec<(f64, f64)> {
    let n = train.nrows() as f64;
    let mut out = Vec::with_capacity(train.ncols());
    for c in 0..train.ncols() {
        let col = train.column(c);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        out.push((mean, if sd > 1e-9 { sd } else { 1.0 }));
    }
    out
}

/// Trains a model on the dataset. `latent_dims` assigns a latent block size
/// to every hidden node of the graph; a total of zero trains a plain causal
/// flow without a deconfounding network.
pub fn train(
    graph: &CausalGraph,
    dataset: &Dataset,
    latent_dims: &BTreeMap<String, usize>,
    config: &TrainConfig,
) -> Result<(DeCaFlowModel, TrainReport), TrainError> {
    config.validate()?;
    if dataset.column_names != graph.observed_nodes() {
        return Err(TrainError::ColumnMismatch {
            expected: graph.observed_nodes().to_vec(),
            got: dataset.column_names.clone(),
        });
    }
    let n = dataset.n_rows();
    let (train_range, val_range, _test_range) = split_ranges(n);
    if train_range.is_empty() {
        return Err(TrainError::InsufficientData(
            "the train split is empty".into(),
        ));
    }

    let train_view = dataset.values.slice(ndarray::s![train_range.clone(), ..]);
    let mut model = DeCaFlowModel::new(
        graph.clone(),
        latent_dims.clone(),
        config.generative.clone(),
        config.deconfounding.clone(),
        config.seed,
    )?;
    model.set_standardization(fit_standardization(&train_view))?;

    if config.epochs == 0 {
        return Ok((
            model,
            TrainReport {
                best_val_loss: f64::INFINITY,
                ..TrainReport::default()
            },
        ));
    }
    if val_range.is_empty() {
        return Err(TrainError::InsufficientData(
            "the validation split is empty".into(),
        ));
    }

    let std_all = model.standardize_matrix(&dataset.values);
    let train_std = std_all
        .slice(ndarray::s![train_range.clone(), ..])
        .to_owned();
    let val_std = std_all.slice(ndarray::s![val_range, ..]).to_owned();
    let mmd_cap = val_std.nrows().min(MMD_ROW_CAP);
    let val_mmd_ref = val_std.slice(ndarray::s![..mmd_cap, ..]).to_owned();
    let mmd_seed = config.seed ^ MMD_SAMPLE_SALT;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(2);
    let mut eps_rng = ChaCha8Rng::seed_from_u64(config.seed);
    eps_rng.set_stream(3);
    let mut val_eps_rng = ChaCha8Rng::seed_from_u64(config.seed);
    val_eps_rng.set_stream(5);

    let mut adam = Adam::new(model.param_count());
    let mut grads = vec![0.0; model.param_count()];
    let mut lr = config.learning_rate;
    let plateau_patience = (config.patience / 2).max(1);

    let mut report = TrainReport {
        best_val_loss: f64::INFINITY,
        ..TrainReport::default()
    };
    let mut best_params = model.export_params();
    let mut since_best = 0usize;
    let mut plateau_count = 0usize;
    let mut indices: Vec<usize> = (0..train_std.nrows()).collect();

    for epoch in 0..config.epochs {
        indices.shuffle(&mut shuffle_rng);
        let warmup_active = epoch < config.warmup_epochs;

        let mut elbo_sum = 0.0;
        let mut recon_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut rows_done = 0usize;
        for (batch_idx, chunk) in indices.chunks(config.batch_size).enumerate() {
            let mut batch = Array2::zeros((chunk.len(), train_std.ncols()));
            for (r, &src) in chunk.iter().enumerate() {
                batch.row_mut(r).assign(&train_std.row(src));
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            let (terms, _beta) = model.elbo_backward(
                &batch,
                warmup_active,
                config.mc_samples_kl,
                &mut eps_rng,
                &mut grads,
            )?;
            if !terms.value.is_finite() {
                report.stopped_epoch = epoch;
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_idx,
                    report: Box::new(report),
                });
            }
            let wt = chunk.len() as f64;
            elbo_sum += terms.value * wt;
            recon_sum += terms.reconstruction * wt;
            kl_sum += terms.kl * wt;
            rows_done += chunk.len();

            let mut params = model.export_params();
            adam.step(&mut params, &grads, lr);
            model.import_params(&params)?;
        }
        let rows = rows_done as f64;
        let epoch_kl = kl_sum / rows;
        let beta = if warmup_active {
            epoch_kl.min(1.0)
        } else {
            1.0
        };

        let val_terms = model.elbo(&val_std, 1.0, config.mc_samples_kl, &mut val_eps_rng)?;
        let val_loss = -val_terms.value;
        if !val_loss.is_finite() {
            report.stopped_epoch = epoch;
            return Err(TrainError::Diverged {
                epoch,
                batch: 0,
                report: Box::new(report),
            });
        }
        let model_samples = model.sample_std(mmd_cap, mmd_seed)?;
        let val_mmd = mmd(model_samples.view(), val_mmd_ref.view(), Bandwidth::Median)?;

        report.epochs.push(EpochStats {
            elbo: elbo_sum / rows,
            reconstruction: recon_sum / rows,
            kl: epoch_kl,
            beta,
            val_loss,
            val_mmd,
            learning_rate: lr,
        });
        report.stopped_epoch = epoch + 1;

        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best_params = model.export_params();
            since_best = 0;
            plateau_count = 0;
        } else {
            since_best += 1;
            plateau_count += 1;
            if plateau_count >= plateau_patience {
                lr *= config.lr_plateau_factor;
                plateau_count = 0;
            }
            if since_best >= config.patience {
                break;
            }
        }
    }

    model.import_params(&best_params)?;
    Ok((model, report))
}
