//! Identifiability checks against a graph, with an annotated rendering.

use std::path::PathBuf;

use causal_graph::{
    check_query_identifiable, classify_edges, load_graph, EdgeClass, IdentifiabilityReport,
    QuerySpec,
};
use clap::Args;
use serde::Serialize;

use crate::manifest::{prepare_out_dir, write_json, Manifest};
use crate::CliError;

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Graph JSON file.
    #[arg(long)]
    pub graph: PathBuf,
    /// Treatment node; requires --outcome.
    #[arg(long, requires = "outcome")]
    pub treatment: Option<String>,
    /// Outcome node; requires --treatment.
    #[arg(long, requires = "treatment")]
    pub outcome: Option<String>,
    /// Observed covariates to condition on, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct EdgeReport {
    from: String,
    to: String,
    class: EdgeClass,
}

#[derive(Serialize)]
struct QueryReport {
    treatment: String,
    outcome: String,
    covariates: Vec<String>,
    #[serde(flatten)]
    report: IdentifiabilityReport,
}

pub fn run(args: &IdentifyArgs) -> Result<(), CliError> {
    let graph = load_graph(&args.graph)?;
    prepare_out_dir(&args.out)?;
    let classes = classify_edges(&graph)?;

    let mut manifest = Manifest::new("identify");
    manifest.input("graph", args.graph.display());

    let highlight = match (&args.treatment, &args.outcome) {
        (Some(t), Some(y)) => {
            let query = QuerySpec::new(t, y).with_covariates(args.covariates.iter().cloned());
            let report = check_query_identifiable(&graph, &query)?;
            let verdict = report.identifiable;
            write_json(
                &args.out,
                "report.json",
                &QueryReport {
                    treatment: t.clone(),
                    outcome: y.clone(),
                    covariates: args.covariates.clone(),
                    report,
                },
            )?;
            manifest
                .input("treatment", t)
                .input("outcome", y)
                .output("report.json");
            if !args.covariates.is_empty() {
                manifest.input("covariates", args.covariates.join(","));
            }
            println!(
                "do({t}) -> {y}: {}",
                if verdict {
                    "identifiable"
                } else {
                    "not identifiable"
                }
            );
            Some((t.as_str(), y.as_str()))
        }
        _ => {
            let edges: Vec<EdgeReport> = classes
                .iter()
                .map(|((from, to), class)| EdgeReport {
                    from: from.clone(),
                    to: to.clone(),
                    class: *class,
                })
                .collect();
            write_json(&args.out, "report.json", &edges)?;
            manifest.output("report.json");
            let identifiable = edges
                .iter()
                .filter(|e| e.class == EdgeClass::ProxyIdentifiable)
                .count();
            let blocked = edges
                .iter()
                .filter(|e| e.class == EdgeClass::Unidentifiable)
                .count();
            println!(
                "{} observed edges: {identifiable} proxy-identifiable, {blocked} unidentifiable",
                edges.len()
            );
            None
        }
    };

    crate::svg::render_graph(&graph, &classes, highlight, &args.out.join("graph.svg"))?;
    manifest.output("graph.svg");
    manifest.write(&args.out)?;
    Ok(())
}
