use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rumorsage::artifact::{read_json, read_jsonl, write_json, write_jsonl, ArtifactHeader, FORMAT_VERSION};
use rumorsage::graph::{
    attach_features, build_static_graph, snapshot_series, FeatureTable, FeaturedGraph, Snapshot, StaticGraph, GRAPH_FORMAT,
    SNAPSHOTS_FORMAT,
};
use rumorsage::ingestion::{
    join_post_sets, label_post_sets, load_corpus, CorpusPaths, LabeledPostSet, PostSet, POST_SETS_FORMAT, QUARANTINE_FORMAT,
};
use rumorsage::model::ModelParams;
use rumorsage::pairs::{build_pair_corpus, PAIRS_FORMAT};
use rumorsage::synth::generate;
use rumorsage::train_eval::{self, split_dataset, MetricsReport, Split, TrainLog};

use crate::config::RunConfig;
use crate::error::{CliResult, Classify, Failure};

pub const REJECTED_FORMAT: &str = "rumorsage.rejected";
pub const TRAIN_LOG_FORMAT: &str = "rumorsage.train_log";
pub const METRICS_FORMAT: &str = "rumorsage.metrics";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainLogFile {
    pub format: String,
    pub version: u32,
    pub config: Value,
    pub log: TrainLog,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub format: String,
    pub version: u32,
    pub config: Value,
    pub split: SplitName,
    pub checkpoint: PathBuf,
    pub report: MetricsReport,
}

/// `path` with `suffix` appended to its file name.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn header(format: &str, config: &RunConfig) -> ArtifactHeader {
    ArtifactHeader::new(format, config.to_json())
}

fn read_post_sets(config: &RunConfig) -> CliResult<Vec<LabeledPostSet>> {
    let (_, sets) = read_jsonl(&config.paths.post_sets, POST_SETS_FORMAT).or_fail(Failure::BadInput)?;
    Ok(sets)
}

pub fn ingest(config: &RunConfig) -> CliResult<Value> {
    let loaded = load_corpus(&CorpusPaths::in_dir(&config.paths.corpus_dir)).or_fail(Failure::BadInput)?;
    let joined = join_post_sets(&loaded.corpus);
    let labeled = label_post_sets(&joined.post_sets, &loaded.corpus.factchecks);

    let mut quarantine = loaded.quarantine.clone();
    quarantine.extend(joined.quarantine);
    let mut rejected = joined.rejected;
    rejected.extend(labeled.rejected.iter().cloned());

    let out = &config.paths.post_sets;
    write_jsonl(out, &header(POST_SETS_FORMAT, config), &labeled.sets).or_fail(Failure::Output)?;
    write_jsonl(&with_suffix(out, ".quarantine.jsonl"), &header(QUARANTINE_FORMAT, config), &quarantine)
        .or_fail(Failure::Output)?;
    write_jsonl(&with_suffix(out, ".rejected.jsonl"), &header(REJECTED_FORMAT, config), &rejected)
        .or_fail(Failure::Output)?;

    Ok(json!({
        "command": "ingest",
        "post_sets": labeled.sets.len(),
        "labeled": labeled.labeled().count(),
        "quarantined": quarantine.len(),
        "rejected": rejected.len(),
        "records": loaded.summary(),
    }))
}

pub fn build_graphs(config: &RunConfig) -> CliResult<Value> {
    let sets = read_post_sets(config)?;
    let graphs = sets
        .iter()
        .enumerate()
        .map(|(j, set)| build_static_graph(j, set).with_context(|| format!("post set {} ({})", j, set.source_id)))
        .collect::<anyhow::Result<Vec<StaticGraph>>>()
        .or_fail(Failure::BadInput)?;
    write_jsonl(&config.paths.graphs, &header(GRAPH_FORMAT, config), &graphs).or_fail(Failure::Output)?;

    let mut summary = json!({
        "command": "build-graphs",
        "graphs": graphs.len(),
        "labeled": graphs.iter().filter(|g| g.label.is_some()).count(),
        "edges": graphs.iter().map(|g| g.edges.len()).sum::<usize>(),
    });
    if config.graphs.augment_snapshots {
        let mut snapshots: Vec<Snapshot> = Vec::new();
        for g in &graphs {
            snapshots.extend(snapshot_series(g, config.graphs.snapshot_interval_secs).or_fail(Failure::BadConfig)?);
        }
        write_jsonl(&config.paths.snapshots, &header(SNAPSHOTS_FORMAT, config), &snapshots).or_fail(Failure::Output)?;
        summary["snapshots"] = json!(snapshots.len());
    }
    Ok(summary)
}

pub fn gen_pairs(config: &RunConfig) -> CliResult<Value> {
    let sets: Vec<PostSet> = read_post_sets(config)?.iter().filter_map(LabeledPostSet::post_set).collect();
    let corpus = build_pair_corpus(&sets, config.pairs.neg_per_pos, config.pairs.seed).or_fail(Failure::BadInput)?;
    write_jsonl(&config.paths.pairs, &header(PAIRS_FORMAT, config), &corpus.pairs).or_fail(Failure::Output)?;
    Ok(json!({
        "command": "gen-pairs",
        "pairs": corpus.pairs.len(),
        "positives": corpus.positives,
        "negatives": corpus.negatives,
        "skipped_empty": corpus.skipped_empty,
        "duplicates": corpus.duplicates,
    }))
}

pub fn synth(config: &RunConfig) -> CliResult<Value> {
    let data = generate(&config.synth).or_fail(Failure::BadConfig)?;
    data.records.write(&config.paths.corpus_dir).or_fail(Failure::Output)?;
    let features = &config.paths.features;
    data.features
        .save(features, &FeatureTable::sidecar_path(features), config.to_json())
        .or_fail(Failure::Output)?;
    Ok(json!({
        "command": "synth",
        "post_sets": data.sets.len(),
        "feature_rows": data.features.len(),
        "feature_dim": data.features.dim(),
    }))
}

fn load_features(config: &RunConfig) -> CliResult<FeatureTable> {
    let path = &config.paths.features;
    FeatureTable::load(path, &FeatureTable::sidecar_path(path)).or_fail(Failure::BadInput)
}

/// Labeled graphs with features attached, in file order.
fn load_featured_graphs(config: &RunConfig, table: &FeatureTable, in_dim: usize) -> CliResult<Vec<FeaturedGraph>> {
    let (_, graphs): (_, Vec<StaticGraph>) = read_jsonl(&config.paths.graphs, GRAPH_FORMAT).or_fail(Failure::BadInput)?;
    let total = graphs.len();
    let featured = graphs
        .iter()
        .filter(|g| g.label.is_some())
        .map(|g| attach_features(g, table, in_dim).with_context(|| format!("graph {}", g.graph_id)))
        .collect::<anyhow::Result<Vec<_>>>()
        .or_fail(Failure::BadInput)?;
    if featured.len() < total {
        log::warn!("skipping {} unlabeled graphs", total - featured.len());
    }
    Ok(featured)
}

fn split(config: &RunConfig, graphs: &[FeaturedGraph]) -> CliResult<Split<FeaturedGraph>> {
    Ok(split_dataset(graphs, config.train.split, config.train.seed)?)
}

/// Proper snapshots (not the full graph) of the given training graphs.
fn snapshot_graphs(config: &RunConfig, table: &FeatureTable, train: &[FeaturedGraph]) -> CliResult<Vec<FeaturedGraph>> {
    let (_, snapshots): (_, Vec<Snapshot>) =
        read_jsonl(&config.paths.snapshots, SNAPSHOTS_FORMAT).or_fail(Failure::BadInput)?;
    let sizes: HashMap<usize, usize> = train.iter().map(|g| (g.graph.graph_id, g.graph.num_nodes())).collect();
    snapshots
        .iter()
        .filter(|s| sizes.get(&s.base).is_some_and(|&n| s.graph.num_nodes() < n))
        .map(|s| {
            attach_features(&s.graph, table, config.model.in_dim)
                .with_context(|| format!("snapshot of graph {} at {}", s.base, s.cutoff))
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .or_fail(Failure::BadInput)
}

fn write_metrics(config: &RunConfig, split: SplitName, report: &MetricsReport) -> CliResult<PathBuf> {
    let name = format!("metrics_{}.json", split.to_possible_value().expect("no skipped variants").get_name());
    let path = config.paths.report_dir.join(name);
    let file = MetricsFile {
        format: METRICS_FORMAT.into(),
        version: FORMAT_VERSION,
        config: config.to_json(),
        split,
        checkpoint: config.paths.checkpoint.clone(),
        report: report.clone(),
    };
    write_json(&path, &file).or_fail(Failure::Output)?;
    Ok(path)
}

pub fn train(config: &RunConfig) -> CliResult<Value> {
    let table = load_features(config)?;
    let graphs = load_featured_graphs(config, &table, config.model.in_dim)?;
    let split = split(config, &graphs)?;
    let mut train_set = split.train.clone();
    if config.graphs.augment_snapshots {
        train_set.extend(snapshot_graphs(config, &table, &split.train)?);
    }

    let outcome = train_eval::train(&config.model, &config.train, &train_set, &split.val)?;
    outcome.params.save(&config.paths.checkpoint, config.to_json()).or_fail(Failure::Output)?;

    let log_path = config.paths.report_dir.join("train_log.json");
    let log_file = TrainLogFile {
        format: TRAIN_LOG_FORMAT.into(),
        version: FORMAT_VERSION,
        config: config.to_json(),
        log: outcome.log.clone(),
    };
    write_json(&log_path, &log_file).or_fail(Failure::Output)?;
    let curves = config.paths.report_dir.join("curves.csv");
    train_eval::export_curves(&outcome.log, &curves, &config.to_json()).or_fail(Failure::Output)?;

    let report = train_eval::evaluate(&outcome.params, &split.test)?;
    write_metrics(config, SplitName::Test, &report)?;
    let best = outcome.log.best();
    Ok(json!({
        "command": "train",
        "train_graphs": split.train.len(),
        "snapshot_graphs": train_set.len() - split.train.len(),
        "val_graphs": split.val.len(),
        "test_graphs": split.test.len(),
        "epochs": outcome.log.epochs.len(),
        "best_epoch": outcome.log.best_epoch,
        "best_val_loss": best.map(|b| b.val_loss),
        "stopped_early": outcome.log.stopped_early,
        "test_accuracy": report.accuracy,
        "test_macro_f1": report.macro_f1,
    }))
}

pub fn evaluate(config: &RunConfig, which: SplitName) -> CliResult<Value> {
    let (params, _) = ModelParams::load(&config.paths.checkpoint)?;
    if params.config() != &config.model || params.kind() != config.train.kind {
        log::warn!("checkpoint model differs from the configured one; using the checkpoint's");
    }
    let table = load_features(config)?;
    let graphs = load_featured_graphs(config, &table, params.config().in_dim)?;
    let chosen = match which {
        SplitName::All => graphs,
        _ => {
            let s = split(config, &graphs)?;
            match which {
                SplitName::Train => s.train,
                SplitName::Val => s.val,
                _ => s.test,
            }
        }
    };
    let report = train_eval::evaluate(&params, &chosen)?;
    let path = write_metrics(config, which, &report)?;
    Ok(json!({
        "command": "evaluate",
        "split": which,
        "graphs": chosen.len(),
        "classes": report.per_class.len(),
        "accuracy": report.accuracy,
        "micro_f1": report.micro_f1,
        "macro_f1": report.macro_f1,
        "report": path,
    }))
}

pub fn export_curves(config: &RunConfig, out: Option<PathBuf>) -> CliResult<Value> {
    let log_path = config.paths.report_dir.join("train_log.json");
    let file: TrainLogFile = read_json(&log_path).or_fail(Failure::BadInput)?;
    if file.format != TRAIN_LOG_FORMAT {
        return Err(crate::error::CliError::new(
            Failure::BadInput,
            anyhow::anyhow!("{} is not a training log", log_path.display()),
        ));
    }
    let out = out.unwrap_or_else(|| config.paths.report_dir.join("curves.csv"));
    train_eval::export_curves(&file.log, &out, &file.config).or_fail(Failure::BadInput)?;
    Ok(json!({
        "command": "export-curves",
        "epochs": file.log.epochs.len(),
        "out": out,
    }))
}
