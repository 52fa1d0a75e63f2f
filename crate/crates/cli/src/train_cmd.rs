//! Model training against a dataset and graph.

use std::collections::BTreeMap;
use std::path::PathBuf;

use causal_graph::load_graph;
use clap::{Args, ValueEnum};
use decaflow::{save_model, train, FlowArch, TrainConfig};
use flow_core::LayerSpec;
use scm_lab::Dataset;

use crate::manifest::{prepare_out_dir, write_json, Manifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Transform {
    Affine,
    Spline,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV with a header matching the graph's observed nodes.
    #[arg(long)]
    pub data: PathBuf,
    /// Graph JSON file.
    #[arg(long)]
    pub graph: PathBuf,
    /// Latent block sizes, e.g. "z1=2,z2=0". Unlisted hidden nodes get 0.
    #[arg(long, value_delimiter = ',', conflicts_with = "latent_total")]
    pub latent: Vec<String>,
    /// Total latent dimension, assigned to the first hidden node.
    #[arg(long)]
    pub latent_total: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 30)]
    pub warmup_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub mc_samples: usize,
    /// Coordinate transformer for both networks.
    #[arg(long, value_enum, default_value_t = Transform::Spline)]
    pub transform: Transform,
    /// Spline bin count (ignored for affine).
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    /// Spline tail bound (ignored for affine).
    #[arg(long, default_value_t = 5.0)]
    pub bound: f64,
    /// Conditioner hidden widths, e.g. "64,64".
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64])]
    pub widths: Vec<usize>,
    /// Number of stacked flow layers per network.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_latent(
    entries: &[String],
    total: Option<usize>,
    hidden: &[String],
) -> Result<BTreeMap<String, usize>, CliError> {
    let mut dims: BTreeMap<String, usize> = hidden.iter().map(|h| (h.clone(), 0)).collect();
    if let Some(total) = total {
        let first = hidden
            .first()
            .ok_or_else(|| CliError::Invalid("graph has no hidden nodes".into()))?;
        dims.insert(first.clone(), total);
        return Ok(dims);
    }
    if entries.is_empty() {
        for v in dims.values_mut() {
            *v = 1;
        }
        return Ok(dims);
    }
    for entry in entries {
        let (name, value) = entry
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("latent entry {entry:?} is not name=size")))?;
        let size: usize = value
            .parse()
            .map_err(|_| CliError::Invalid(format!("latent size {value:?} is not an integer")))?;
        if !dims.contains_key(name) {
            return Err(CliError::Invalid(format!("{name} is not a hidden node")));
        }
        dims.insert(name.to_owned(), size);
    }
    Ok(dims)
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    let graph = load_graph(&args.graph)?;
    let data = Dataset::read_csv(&args.data)?;
    let dims = parse_latent(&args.latent, args.latent_total, graph.hidden_nodes())?;

    let spec = match args.transform {
        Transform::Affine => LayerSpec::Affine,
        Transform::Spline => LayerSpec::RationalQuadraticSpline {
            bins: args.bins,
            bound: args.bound,
        },
    };
    let arch = FlowArch {
        spec,
        widths: args.widths.clone(),
        layers: args.layers,
    };
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        warmup_epochs: args.warmup_epochs,
        patience: args.patience,
        seed: args.seed,
        mc_samples_kl: args.mc_samples,
        generative: arch.clone(),
        deconfounding: arch,
        ..TrainConfig::default()
    };

    let (model, report) = train(&graph, &data, &dims, &config)?;

    prepare_out_dir(&args.out)?;
    save_model(&model, &args.out.join("model.dcfa"))?;
    write_json(&args.out, "train_report.json", &report)?;

    let mut manifest = Manifest::new("train");
    manifest.seed = Some(args.seed);
    manifest
        .input("data", args.data.display())
        .input("graph", args.graph.display())
        .input(
            "latent",
            dims.iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(","),
        )
        .input("epochs", args.epochs)
        .input("batch_size", args.batch_size)
        .input("learning_rate", args.learning_rate)
        .input("warmup_epochs", args.warmup_epochs)
        .input("patience", args.patience)
        .input("mc_samples", args.mc_samples)
        .input("transform", format!("{:?}", args.transform))
        .input("widths", format!("{:?}", args.widths))
        .input("layers", args.layers)
        .output("model.dcfa")
        .output("train_report.json");
    manifest.write(&args.out)?;

    match report.epochs.last() {
        Some(last) => println!(
            "trained {} epochs (best {}), val loss {:.4}, val MMD {:.3e}",
            report.stopped_epoch, report.best_epoch, report.best_val_loss, last.val_mmd
        ),
        None => println!("no optimization epochs requested; wrote the initialized model"),
    }
    Ok(())
}
