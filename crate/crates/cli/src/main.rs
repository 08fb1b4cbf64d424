// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod data;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::commands::Run;
use crate::config::{parse_layer, LayerFile, Overrides, PipelineConfig};
use crate::data::RunData;
use crate::error::CliError;
use crate::output::OutputDir;

/// Neighborhood overlap and density-peak topography of layer activations.
#[derive(Parser, Debug)]
#[command(name = "denstopo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verb {
    Overlap,
    Cluster,
    Diagnostics,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Overlap profiles against labels, the output layer, the next layer and checkpoints.
    Overlap(RunArgs),
    /// Density peaks, saddles, dendrograms and composition reports per layer.
    Cluster(RunArgs),
    /// Intrinsic dimension, hubs, CKA curves and image entropy.
    Diagnostics(RunArgs),
    /// Every analysis above, sharing one neighbor graph per layer.
    All(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Activation file for a layer, as TAG=PATH; repeat in layer order.
    #[arg(long = "layer", value_parser = parse_layer)]
    layers: Vec<LayerFile>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    macro_labels: Option<PathBuf>,
    /// u8 image stack (N×H×W or N×H×W×C) for the entropy diagnostic.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    sweep_k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    sweep_z: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sweep_n: Option<Vec<usize>>,
    /// Worker threads; defaults to one per core. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Keep neighbor graphs under OUT/cache and reuse them on later runs.
    #[arg(long)]
    cache: bool,
}

impl Command {
    fn split(self) -> (Verb, RunArgs) {
        match self {
            Command::Overlap(a) => (Verb::Overlap, a),
            Command::Cluster(a) => (Verb::Cluster, a),
            Command::Diagnostics(a) => (Verb::Diagnostics, a),
            Command::All(a) => (Verb::All, a),
        }
    }
}

fn execute(verb: Verb, args: RunArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(Overrides {
        k: args.k,
        z: args.z,
        out: args.out,
        seed: args.seed,
        sweep_k: args.sweep_k,
        sweep_z: args.sweep_z,
        sweep_n: args.sweep_n,
        layers: args.layers,
        labels: args.labels,
        macro_labels: args.macro_labels,
        images: args.images,
        cache: args.cache,
    });
    cfg.validate()?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("denstopo-out"));
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }

    let hash = cfg.hash();
    let mut run = Run {
        cfg: &cfg,
        data: RunData::load(&cfg)?,
        out: OutputDir::new(&out_dir, hash.clone())?,
    };
    if matches!(verb, Verb::Overlap | Verb::All) {
        commands::overlap(&mut run)?;
    }
    if matches!(verb, Verb::Cluster | Verb::All) {
        commands::cluster(&mut run)?;
    }
    if matches!(verb, Verb::Diagnostics | Verb::All) {
        commands::diagnostics(&mut run)?;
    }

    let manifest = json!({
        "tool": "denstopo",
        "version": env!("CARGO_PKG_VERSION"),
        "command": format!("{verb:?}").to_lowercase(),
        "config": serde_json::from_str::<serde_json::Value>(&cfg.canonical_json()).expect("valid json"),
        "config_sha256": hash,
        "n_points": run.data.n_points(),
        "inputs": run.data.input_hashes,
        "outputs": run.out.written(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    run.out.text("manifest.json", &(text + "\n"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (verb, args) = cli.command.split();
    match execute(verb, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("denstopo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
