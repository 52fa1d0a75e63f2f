//! Causal queries against a trained model archive, gated on identifiability.

use std::path::PathBuf;

use causal_graph::{check_intervention_identifiable, check_query_identifiable, QuerySpec};
use clap::{Args, ValueEnum};
use decaflow::load_model;
use serde::Serialize;

use crate::manifest::{prepare_out_dir, write_json, Manifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
pub enum QueryMode {
    Ate,
    Intervene,
    Counterfactual,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Trained model archive.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub mode: QueryMode,
    /// Intervention, e.g. "t=1.2".
    #[arg(long = "do")]
    pub do_clause: String,
    /// Baseline intervention for ate, e.g. "t=0.3".
    #[arg(long)]
    pub against: Option<String>,
    /// Outcome node (required for ate).
    #[arg(long)]
    pub outcome: Option<String>,
    /// Factual observed row for counterfactual, comma-separated values.
    #[arg(long, value_delimiter = ',')]
    pub factual: Vec<f64>,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Answer the query even when it is not identifiable.
    #[arg(long)]
    pub force: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct QueryResult {
    mode: String,
    treatment: String,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    against: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<String>,
    n: usize,
    seed: u64,
    identifiable: bool,
    forced: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    columns: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factual: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterfactual: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples_file: Option<String>,
}

fn parse_assignment(text: &str) -> Result<(String, f64), CliError> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| CliError::Invalid(format!("{text:?} is not node=value")))?;
    let v: f64 = value
        .parse()
        .map_err(|_| CliError::Invalid(format!("{value:?} is not a number")))?;
    Ok((name.to_owned(), v))
}

pub fn run(args: &QueryArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let graph = model.graph().clone();
    let (treatment, alpha) = parse_assignment(&args.do_clause)?;

    prepare_out_dir(&args.out)?;
    let mut manifest = Manifest::new("query");
    manifest.seed = Some(args.seed);
    manifest
        .input("model", args.model.display())
        .input("mode", format!("{:?}", args.mode))
        .input("do", &args.do_clause)
        .input("n", args.n);
    manifest.force = Some(args.force);

    // The identifiability gate runs before any estimate leaves the model.
    let identifiable = match args.mode {
        QueryMode::Ate => {
            let outcome = args
                .outcome
                .as_deref()
                .ok_or_else(|| CliError::Invalid("ate needs --outcome".into()))?;
            let report = check_query_identifiable(&graph, &QuerySpec::new(&treatment, outcome))?;
            write_json(&args.out, "identifiability.json", &report)?;
            report.identifiable
        }
        QueryMode::Intervene | QueryMode::Counterfactual => {
            let report = check_intervention_identifiable(&graph, &treatment)?;
            write_json(&args.out, "identifiability.json", &report)?;
            report.joint_identifiable
        }
    };
    manifest.output("identifiability.json");

    if !identifiable && !args.force {
        manifest.write(&args.out)?;
        return Err(CliError::Refused(format!(
            "do({treatment}) is not identifiable from this graph; see {} (pass --force to estimate anyway)",
            args.out.join("identifiability.json").display()
        )));
    }

    let mut result = QueryResult {
        mode: format!("{:?}", args.mode).to_lowercase(),
        treatment: treatment.clone(),
        alpha,
        against: None,
        outcome: args.outcome.clone(),
        n: args.n,
        seed: args.seed,
        identifiable,
        forced: args.force,
        value: None,
        columns: None,
        factual: None,
        counterfactual: None,
        samples_file: None,
    };

    match args.mode {
        QueryMode::Ate => {
            let outcome = args.outcome.as_deref().expect("checked above");
            let (a_name, a_val) = parse_assignment(
                args.against
                    .as_deref()
                    .ok_or_else(|| CliError::Invalid("ate needs --against".into()))?,
            )?;
            if a_name != treatment {
                return Err(CliError::Invalid(format!(
                    "--against names {a_name}, --do names {treatment}"
                )));
            }
            let value = model.ate(&treatment, a_val, alpha, outcome, args.n, args.seed)?;
            result.against = Some(a_val);
            result.value = Some(value);
            manifest.input("against", a_val).input("outcome", outcome);
            println!("ate of do({treatment}={alpha}) vs do({treatment}={a_val}) on {outcome}: {value:.6} (standardized)");
        }
        QueryMode::Intervene => {
            let samples = model.intervene_sample(&treatment, alpha, args.n, args.seed)?;
            samples.write_csv(&args.out.join("samples.csv"))?;
            result.columns = Some(samples.column_names.clone());
            result.samples_file = Some("samples.csv".into());
            manifest.output("samples.csv");
            println!(
                "wrote {} interventional rows under do({treatment}={alpha})",
                args.n
            );
        }
        QueryMode::Counterfactual => {
            if args.factual.is_empty() {
                return Err(CliError::Invalid(
                    "counterfactual needs --factual values".into(),
                ));
            }
            let cf = model.counterfactual(&args.factual, &treatment, alpha, args.seed)?;
            result.columns = Some(graph.observed_nodes().to_vec());
            result.factual = Some(args.factual.clone());
            result.counterfactual = Some(cf.clone());
            manifest.input(
                "factual",
                args.factual
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            println!(
                "counterfactual under do({treatment}={alpha}): {}",
                cf.iter()
                    .zip(graph.observed_nodes())
                    .map(|(v, n)| format!("{n}={v:.4}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
        }
    }

    write_json(&args.out, "query_result.json", &result)?;
    manifest.output("query_result.json");
    manifest.write(&args.out)?;
    Ok(())
}
