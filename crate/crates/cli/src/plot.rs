//! Figures summarizing a batch of evaluation reports.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::manifest::{prepare_out_dir, write_json, Manifest};
use crate::svg::{render_histogram, render_line_chart, Series};
use crate::CliError;

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Evaluation reports to aggregate (eval_report.json files).
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Deserialize)]
struct ReportIn {
    mmd: f64,
    ate_error: f64,
    cf_mean_error: f64,
    #[serde(default)]
    cf_errors: Vec<f64>,
    proxies: usize,
    #[serde(default)]
    latent_total: Option<usize>,
}

#[derive(Serialize)]
struct GroupStat {
    key: usize,
    runs: usize,
    mean_ate_error: f64,
    mean_cf_error: f64,
    mean_mmd: f64,
}

#[derive(Serialize)]
struct PlotData {
    by_proxies: Vec<GroupStat>,
    by_latent_dim: Vec<GroupStat>,
    cf_error_count: usize,
}

fn group_stats(groups: BTreeMap<usize, Vec<&ReportIn>>) -> Vec<GroupStat> {
    groups
        .into_iter()
        .map(|(key, rs)| {
            let n = rs.len() as f64;
            GroupStat {
                key,
                runs: rs.len(),
                mean_ate_error: rs.iter().map(|r| r.ate_error).sum::<f64>() / n,
                mean_cf_error: rs.iter().map(|r| r.cf_mean_error).sum::<f64>() / n,
                mean_mmd: rs.iter().map(|r| r.mmd).sum::<f64>() / n,
            }
        })
        .collect()
}

fn error_series(stats: &[GroupStat]) -> Vec<Series> {
    vec![
        Series {
            name: "ATE error".into(),
            points: stats
                .iter()
                .map(|s| (s.key as f64, s.mean_ate_error))
                .collect(),
        },
        Series {
            name: "counterfactual error".into(),
            points: stats
                .iter()
                .map(|s| (s.key as f64, s.mean_cf_error))
                .collect(),
        },
    ]
}

pub fn run(args: &PlotArgs) -> Result<(), CliError> {
    let mut reports = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let report: ReportIn = serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        reports.push(report);
    }

    let mut by_proxies: BTreeMap<usize, Vec<&ReportIn>> = BTreeMap::new();
    let mut by_latent: BTreeMap<usize, Vec<&ReportIn>> = BTreeMap::new();
    for r in &reports {
        by_proxies.entry(r.proxies).or_default().push(r);
        if let Some(d) = r.latent_total {
            by_latent.entry(d).or_default().push(r);
        }
    }
    let proxy_stats = group_stats(by_proxies);
    let latent_stats = group_stats(by_latent);

    prepare_out_dir(&args.out)?;
    let mut manifest = Manifest::new("plot");
    for (i, p) in args.reports.iter().enumerate() {
        manifest.input(&format!("report_{i}"), p.display());
    }

    if proxy_stats.len() > 1 {
        render_line_chart(
            "Estimation error vs proxy count",
            "proxies",
            "mean absolute error",
            &error_series(&proxy_stats),
            &args.out.join("ablation_errors.svg"),
        )?;
        manifest.output("ablation_errors.svg");
    }
    if latent_stats.len() > 1 {
        render_line_chart(
            "Estimation error vs latent dimension",
            "latent dimension",
            "mean absolute error",
            &error_series(&latent_stats),
            &args.out.join("latent_errors.svg"),
        )?;
        manifest.output("latent_errors.svg");
    }
    let all_cf: Vec<f64> = reports.iter().flat_map(|r| r.cf_errors.clone()).collect();
    if !all_cf.is_empty() {
        render_histogram(
            "Counterfactual error distribution",
            "absolute error",
            &all_cf,
            30,
            &args.out.join("cf_error_hist.svg"),
        )?;
        manifest.output("cf_error_hist.svg");
    }

    let data = PlotData {
        by_proxies: proxy_stats,
        by_latent_dim: latent_stats,
        cf_error_count: all_cf.len(),
    };
    write_json(&args.out, "plot_data.json", &data)?;
    manifest.output("plot_data.json");
    manifest.write(&args.out)?;

    println!(
        "aggregated {} reports into {}",
        reports.len(),
        args.out.display()
    );
    Ok(())
}
