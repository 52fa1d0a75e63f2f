//! Dataset generation from the synthetic SCM families.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use scm_lab::{
    build_ablation_scm, simulate, split_ranges, write_ablation_spec, AblationKind, AblationSpec,
};
use serde::Serialize;

use crate::manifest::{prepare_out_dir, write_json, Manifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScmFamily {
    AblationLinear,
    AblationNonlinear,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Synthetic SCM family to draw from.
    #[arg(long, value_enum)]
    pub scm: ScmFamily,
    /// Number of null proxies (0 to 10).
    #[arg(long, default_value_t = 2)]
    pub proxies: usize,
    /// Number of rows.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Simulation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SplitManifest {
    train: (usize, usize),
    validation: (usize, usize),
    test: (usize, usize),
}

pub fn run(args: &GenerateArgs) -> Result<(), CliError> {
    let kind = match args.scm {
        ScmFamily::AblationLinear => AblationKind::Linear,
        ScmFamily::AblationNonlinear => AblationKind::Nonlinear,
    };
    let scm = build_ablation_scm(kind, args.proxies)?;
    let data = simulate(&scm, args.n, args.seed)?;

    prepare_out_dir(&args.out)?;
    data.write_csv(&args.out.join("data.csv"))?;
    data.write_ground_truth_csv(
        &args.out.join("ground_truth.csv"),
        scm.graph().hidden_nodes(),
    )?;
    write_ablation_spec(
        &AblationSpec {
            kind,
            s: args.proxies,
            seed: args.seed,
        },
        &args.out.join("scm.json"),
    )?;
    std::fs::write(args.out.join("graph.json"), scm.graph().to_json_string())
        .map_err(|e| CliError::Invalid(format!("graph.json: {e}")))?;

    let (train, val, test) = split_ranges(args.n);
    write_json(
        &args.out,
        "split.json",
        &SplitManifest {
            train: (train.start, train.end),
            validation: (val.start, val.end),
            test: (test.start, test.end),
        },
    )?;

    let mut manifest = Manifest::new("generate");
    manifest.seed = Some(args.seed);
    manifest
        .input("scm", format!("{:?}", args.scm))
        .input("proxies", args.proxies)
        .input("n", args.n)
        .output("data.csv")
        .output("ground_truth.csv")
        .output("scm.json")
        .output("graph.json")
        .output("split.json");
    manifest.write(&args.out)?;

    println!(
        "wrote {} rows ({} observed columns) to {}",
        args.n,
        data.n_cols(),
        args.out.display()
    );
    Ok(())
}
