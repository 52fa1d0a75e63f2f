//! Model evaluation against the exact SCM oracles.
//!
//! The command first materializes the model's answers as plain files
//! (observational samples, counterfactual rows, the ATE estimate), then
//! scores those files against the oracle. `--answers` skips the first step
//! and scores an existing answer directory, so the scoring path itself can
//! be validated by feeding it oracle-perfect answers.

use std::path::{Path, PathBuf};

use clap::Args;
use metrics::{mmd, Bandwidth};
use ndarray::Array2;
use scm_lab::{
    build_ablation_scm, oracle_ate, oracle_counterfactual, percentile, read_ablation_spec,
    split_ranges, Dataset, SyntheticSCM,
};
use serde::{Deserialize, Serialize};

use crate::manifest::{prepare_out_dir, write_json, Manifest};
use crate::CliError;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained model archive to evaluate.
    #[arg(long, conflicts_with = "answers", required_unless_present = "answers")]
    pub model: Option<PathBuf>,
    /// Directory of precomputed answers (samples.csv, cf_model.csv, ate.json).
    #[arg(long)]
    pub answers: Option<PathBuf>,
    /// Data directory from `generate` (data.csv, ground_truth.csv, scm.json).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "t")]
    pub treatment: String,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Counterfactual rows scored from the start of the test split.
    #[arg(long, default_value_t = 500)]
    pub cf_rows: usize,
    /// Monte-Carlo samples for the ATE estimate.
    #[arg(long, default_value_t = 100_000)]
    pub n_ate: usize,
    #[arg(long, default_value_t = 9)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct AteAnswer {
    ate: f64,
}

#[derive(Serialize)]
pub struct EvalReport {
    pub treatment: String,
    pub outcome: String,
    pub p25: f64,
    pub p75: f64,
    pub n_test: usize,
    pub mmd: f64,
    pub ate_model: f64,
    pub ate_oracle: f64,
    pub ate_error: f64,
    pub cf_mean_error: f64,
    pub cf_errors: Vec<f64>,
    pub scm_kind: String,
    pub proxies: usize,
    pub data_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_total: Option<usize>,
}

fn standardize_with(values: &Array2<f64>, moments: &[(f64, f64)]) -> Array2<f64> {
    let mut out = values.clone();
    for (c, &(m, sd)) in moments.iter().enumerate() {
        out.column_mut(c).mapv_inplace(|v| (v - m) / sd);
    }
    out
}

fn train_split_moments(data: &Dataset) -> Vec<(f64, f64)> {
    let (train, _, _) = split_ranges(data.n_rows());
    let rows = data.values.slice(ndarray::s![train, ..]);
    let n = rows.nrows() as f64;
    rows.columns()
        .into_iter()
        .map(|col| {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 1e-9 { sd } else { 1.0 })
        })
        .collect()
}

fn materialize_answers(
    model_path: &Path,
    data: &Dataset,
    args: &EvalArgs,
    p25: f64,
    p75: f64,
    out: &Path,
) -> Result<(Vec<(f64, f64)>, usize), CliError> {
    let model = decaflow::load_model(model_path)?;
    let (_, _, test) = split_ranges(data.n_rows());
    let n_test = test.len();

    let samples = model.sample_observational(n_test.clamp(1, 1024), args.seed)?;
    samples.write_csv(&out.join("samples.csv"))?;

    let cf_rows = args.cf_rows.min(n_test);
    let mut cf = Array2::zeros((cf_rows, data.n_cols()));
    for (i, r) in test.clone().take(cf_rows).enumerate() {
        let factual = data.values.row(r).to_vec();
        let row = model.counterfactual(
            &factual,
            &args.treatment,
            p75,
            args.seed.wrapping_add(r as u64),
        )?;
        for (c, v) in row.iter().enumerate() {
            cf[(i, c)] = *v;
        }
    }
    Dataset {
        values: cf,
        column_names: data.column_names.clone(),
        ground_truth: None,
        standardization: None,
    }
    .write_csv(&out.join("cf_model.csv"))?;

    let ate = model.ate(
        &args.treatment,
        p25,
        p75,
        &args.outcome,
        args.n_ate,
        args.seed,
    )?;
    write_json(out, "ate.json", &AteAnswer { ate })?;

    Ok((model.standardization().to_vec(), model.total_latent_dim()))
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let data = Dataset::read_with_ground_truth(
        &args.data.join("data.csv"),
        &args.data.join("ground_truth.csv"),
    )?;
    let spec = read_ablation_spec(&args.data.join("scm.json"))?;
    let scm: SyntheticSCM = build_ablation_scm(spec.kind, spec.s)?;
    if data.column_names.as_slice() != scm.graph().observed_nodes() {
        return Err(CliError::Invalid(
            "dataset columns do not match the SCM description".into(),
        ));
    }

    let t_col: Vec<f64> = data.column(&args.treatment)?.to_vec();
    let p25 = percentile(&t_col, 25.0);
    let p75 = percentile(&t_col, 75.0);
    let (_, _, test) = split_ranges(data.n_rows());
    let n_test = test.len();
    if n_test == 0 {
        return Err(CliError::Invalid("dataset has an empty test split".into()));
    }

    prepare_out_dir(&args.out)?;
    let (answers_dir, moments, latent_total) = match (&args.model, &args.answers) {
        (Some(model_path), None) => {
            let (moments, latent) =
                materialize_answers(model_path, &data, args, p25, p75, &args.out)?;
            (args.out.clone(), moments, Some(latent))
        }
        (None, Some(dir)) => (dir.clone(), train_split_moments(&data), None),
        _ => unreachable!("clap enforces exactly one of --model/--answers"),
    };

    // Observational fit: MMD between answer samples and held-out test rows,
    // both in standardized units.
    let samples = Dataset::read_csv(&answers_dir.join("samples.csv"))?;
    if samples.column_names != data.column_names {
        return Err(CliError::Invalid("samples.csv columns mismatch".into()));
    }
    let test_rows = data.values.slice(ndarray::s![test.clone(), ..]).to_owned();
    let cap = samples.n_rows().min(n_test);
    let model_std = standardize_with(&samples.values, &moments);
    let test_std = standardize_with(&test_rows, &moments);
    let observed_mmd = mmd(
        model_std.slice(ndarray::s![..cap, ..]),
        test_std.slice(ndarray::s![..cap, ..]),
        Bandwidth::Median,
    )?;

    // ATE against the oracle, standardized by the outcome scale.
    let y_idx = data.column_index(&args.outcome)?;
    let sd_y = moments[y_idx].1;
    let ate_model = serde_json::from_str::<AteAnswer>(
        &std::fs::read_to_string(answers_dir.join("ate.json"))
            .map_err(|e| CliError::Invalid(format!("ate.json: {e}")))?,
    )
    .map_err(|e| CliError::Invalid(format!("ate.json: {e}")))?
    .ate;
    let ate_oracle = oracle_ate(
        &scm,
        &args.treatment,
        p25,
        p75,
        &args.outcome,
        args.n_ate,
        args.seed,
        Some(sd_y),
    )?;
    let ate_error = (ate_model - ate_oracle).abs();

    // Counterfactuals against the oracle on the test split.
    let cf_model = Dataset::read_csv(&answers_dir.join("cf_model.csv"))?;
    let ground_truth = data
        .ground_truth
        .as_ref()
        .ok_or_else(|| CliError::Invalid("dataset carries no ground truth".into()))?;
    let cf_rows = cf_model.n_rows().min(args.cf_rows).min(n_test);
    let mut cf_errors = Vec::with_capacity(cf_rows);
    for (i, r) in test.take(cf_rows).enumerate() {
        let truth = oracle_counterfactual(&scm, &ground_truth[r], &args.treatment, p75)?;
        let err = (cf_model.values[(i, y_idx)] - truth[y_idx]).abs() / sd_y;
        cf_errors.push(err);
    }
    let cf_mean_error = cf_errors.iter().sum::<f64>() / cf_errors.len().max(1) as f64;

    let report = EvalReport {
        treatment: args.treatment.clone(),
        outcome: args.outcome.clone(),
        p25,
        p75,
        n_test,
        mmd: observed_mmd,
        ate_model,
        ate_oracle,
        ate_error,
        cf_mean_error,
        cf_errors,
        scm_kind: format!("{:?}", spec.kind).to_lowercase(),
        proxies: spec.s,
        data_seed: spec.seed,
        latent_total,
    };
    write_json(&args.out, "eval_report.json", &report)?;

    let mut manifest = Manifest::new("eval");
    manifest.seed = Some(args.seed);
    manifest
        .input("data", args.data.display())
        .input("treatment", &args.treatment)
        .input("outcome", &args.outcome)
        .input("cf_rows", args.cf_rows)
        .input("n_ate", args.n_ate)
        .output("eval_report.json");
    match (&args.model, &args.answers) {
        (Some(m), _) => {
            manifest.input("model", m.display());
            manifest
                .output("samples.csv")
                .output("cf_model.csv")
                .output("ate.json");
        }
        (_, Some(a)) => {
            manifest.input("answers", a.display());
        }
        _ => {}
    }
    manifest.write(&args.out)?;

    println!(
        "mmd {:.3e}, ate error {:.4}, cf mean error {:.4} over {} rows",
        report.mmd,
        report.ate_error,
        report.cf_mean_error,
        report.cf_errors.len()
    );
    Ok(())
}
