//! Run configuration: a TOML file plus dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rumorsage::graph::SNAPSHOT_INTERVAL_SECS;
use rumorsage::model::ModelConfig;
use rumorsage::pairs::DEFAULT_NEG_PER_POS;
use rumorsage::synth::SynthConfig;
use rumorsage::train_eval::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus_dir: PathBuf,
    pub post_sets: PathBuf,
    pub graphs: PathBuf,
    pub snapshots: PathBuf,
    pub features: PathBuf,
    pub pairs: PathBuf,
    pub checkpoint: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus_dir: "corpus".into(),
            post_sets: "post_sets.jsonl".into(),
            graphs: "graphs.jsonl".into(),
            snapshots: "snapshots.jsonl".into(),
            features: "features.nfv1".into(),
            pairs: "pairs.jsonl".into(),
            checkpoint: "checkpoint.json".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphsConfig {
    /// Also emit time snapshots and train on those of training graphs.
    pub augment_snapshots: bool,
    pub snapshot_interval_secs: i64,
}

impl Default for GraphsConfig {
    fn default() -> Self {
        Self {
            augment_snapshots: false,
            snapshot_interval_secs: SNAPSHOT_INTERVAL_SECS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsConfig {
    pub neg_per_pos: usize,
    pub seed: u64,
}

impl Default for PairsConfig {
    fn default() -> Self {
        Self {
            neg_per_pos: DEFAULT_NEG_PER_POS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub graphs: GraphsConfig,
    pub pairs: PairsConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Reads `file` (if any), applies `key=value` overrides in order, then
    /// validates every section.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
                text.parse::<toml::Table>()
                    .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow::anyhow!("{}", e.message()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        if self.graphs.snapshot_interval_secs <= 0 {
            anyhow::bail!("graphs.snapshot_interval_secs must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Sets `section.key = value`; the value is read as a TOML literal when it
/// parses as one and as a bare string otherwise.
fn apply_override(table: &mut toml::Table, item: &str) -> anyhow::Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| anyhow::anyhow!("override {item:?} is not key=value"))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        anyhow::bail!("override key {key:?} is malformed");
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow::anyhow!("override {key:?}: {p} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::load(None, &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.model.classes, 5);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = RunConfig::load(
            None,
            &[
                "train.max_epochs=7".into(),
                "model.neighborhood=undirected".into(),
                "paths.graphs=out/g.jsonl".into(),
                "train.split=[0.5, 0.25, 0.25]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.max_epochs, 7);
        assert_eq!(c.train.split, [0.5, 0.25, 0.25]);
        assert_eq!(c.paths.graphs, PathBuf::from("out/g.jsonl"));
        assert_eq!(c.model.neighborhood, rumorsage::graph::Neighborhood::Undirected);
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train]\nmax_epochs = 3\npatience = 2\n[model]\nhidden = 8\n").unwrap();
        let c = RunConfig::load(Some(&path), &["train.patience=1".into()]).unwrap();
        assert_eq!((c.train.max_epochs, c.train.patience, c.model.hidden), (3, 1, 8));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::load(None, &["train.epochs=3".into()]).is_err());
        assert!(RunConfig::load(None, &["model.dropout=1.5".into()]).is_err());
        assert!(RunConfig::load(None, &["nonsense".into()]).is_err());
        assert!(RunConfig::load(None, &["train.max_epochs.x=1".into()]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::load(None, &["synth.seed=9".into()]).unwrap();
        let back: RunConfig = serde_json::from_value(c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
