//! `rumorsage`: the rumor classification pipeline from raw records to
//! evaluation reports.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::{CliResult, Classify, Failure};

#[derive(Debug, Parser)]
#[command(name = "rumorsage", version, about = "Rumor classification on propagation graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load record files and write labeled post sets.
    Ingest,
    /// Build propagation graphs (and optionally time snapshots) from post sets.
    BuildGraphs,
    /// Generate the next-sentence pair corpus from post sets.
    GenPairs,
    /// Write a synthetic record corpus and its feature file.
    Synth,
    /// Train a model and write the checkpoint, training log, curves and test metrics.
    Train,
    /// Score a checkpoint on one split of the graphs.
    Evaluate {
        #[arg(long, value_enum, default_value = "test")]
        split: commands::SplitName,
    },
    /// Convert a training log into a plot-ready CSV.
    ExportCurves {
        /// Defaults to `<report_dir>/curves.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file and flags that override its fields.
#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. `--set train.max_epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    corpus_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    post_sets: Option<PathBuf>,
    #[arg(long, global = true)]
    graphs: Option<PathBuf>,
    #[arg(long, global = true)]
    snapshots: Option<PathBuf>,
    #[arg(long, global = true)]
    features: Option<PathBuf>,
    #[arg(long, global = true)]
    pairs: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    report_dir: Option<PathBuf>,
    /// Sets the train, synth and pairs seeds together.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `edge_attention` or `baseline`.
    #[arg(long, global = true)]
    model: Option<String>,
    /// `directed` or `undirected`.
    #[arg(long, global = true)]
    neighborhood: Option<String>,
    /// `learned` or `attrmean`.
    #[arg(long, global = true)]
    attention: Option<String>,
    #[arg(long, global = true)]
    augment_snapshots: bool,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
}

impl Overrides {
    /// Flags as `key=value` overrides, applied after any `--set`.
    fn to_settings(&self) -> Vec<String> {
        let mut out = self.set.clone();
        let quoted = |s: &str| serde_json::to_string(s).expect("string serializes");
        let mut path = |key: &str, v: &Option<PathBuf>| {
            if let Some(p) = v {
                out.push(format!("paths.{key}={}", quoted(&p.to_string_lossy())));
            }
        };
        path("corpus_dir", &self.corpus_dir);
        path("post_sets", &self.post_sets);
        path("graphs", &self.graphs);
        path("snapshots", &self.snapshots);
        path("features", &self.features);
        path("pairs", &self.pairs);
        path("checkpoint", &self.checkpoint);
        path("report_dir", &self.report_dir);
        if let Some(s) = self.seed {
            out.extend(["train", "synth", "pairs"].map(|t| format!("{t}.seed={s}")));
        }
        if let Some(m) = &self.model {
            out.push(format!("train.kind={}", quoted(m)));
        }
        if let Some(n) = &self.neighborhood {
            out.push(format!("model.neighborhood={}", quoted(n)));
        }
        if let Some(a) = &self.attention {
            out.push(format!("model.attention={}", quoted(a)));
        }
        if self.augment_snapshots {
            out.push("graphs.augment_snapshots=true".into());
        }
        if let Some(v) = self.max_epochs {
            out.push(format!("train.max_epochs={v}"));
        }
        if let Some(v) = self.patience {
            out.push(format!("train.patience={v}"));
        }
        if let Some(v) = self.learning_rate {
            out.push(format!("train.learning_rate={v:?}"));
        }
        if let Some(v) = self.batch_size {
            out.push(format!("train.batch_size={v}"));
        }
        out
    }
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    let config = RunConfig::load(cli.overrides.config.as_deref(), &cli.overrides.to_settings()).or_fail(Failure::BadConfig)?;
    match cli.command {
        Command::Ingest => commands::ingest(&config),
        Command::BuildGraphs => commands::build_graphs(&config),
        Command::GenPairs => commands::gen_pairs(&config),
        Command::Synth => commands::synth(&config),
        Command::Train => commands::train(&config),
        Command::Evaluate { split } => commands::evaluate(&config, split),
        Command::ExportCurves { out } => commands::export_curves(&config, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.exit_code()
        }
    }
}
