//! Plot-ready learning curves.
//!
//! A comment line carrying the producing configuration, a header, then one
//! row per epoch. The `best` column is 1 on the best-validation-loss epoch.

use std::path::Path;

use super::train::{EpochStats, TrainLog};
use super::TrainError;
use crate::artifact::atomic_write;

pub const CURVE_COLUMNS: &str = "epoch,train_loss,train_acc,val_loss,val_acc,best";

pub fn curves_to_string(log: &TrainLog, config: &serde_json::Value) -> String {
    let mut out = format!("# config: {config}\n{CURVE_COLUMNS}\n");
    for e in &log.epochs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch,
            e.train_loss,
            e.train_acc,
            e.val_loss,
            e.val_acc,
            u8::from(e.epoch == log.best_epoch)
        ));
    }
    out
}

pub fn export_curves(log: &TrainLog, path: &Path, config: &serde_json::Value) -> Result<(), TrainError> {
    if log.epochs.is_empty() {
        return Err(TrainError::Config("cannot export an empty training log".into()));
    }
    atomic_write(path, curves_to_string(log, config).as_bytes())?;
    Ok(())
}

/// Reads back a curve file. `stopped_early` is not recorded and comes back false.
pub fn parse_curves(text: &str) -> Result<TrainLog, TrainError> {
    let bad = |line: usize, m: &str| TrainError::Config(format!("curve file line {line}: {m}"));
    let mut epochs = Vec::new();
    let mut best = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != CURVE_COLUMNS {
                return Err(bad(i + 1, "unexpected header"));
            }
            header_seen = true;
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(bad(i + 1, "expected 6 columns"));
        }
        let num = |k: usize| cells[k].parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        let epoch: usize = cells[0].parse().map_err(|_| bad(i + 1, "bad epoch"))?;
        if cells[5] == "1" {
            best.push(epoch);
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: num(1)?,
            train_acc: num(2)?,
            val_loss: num(3)?,
            val_acc: num(4)?,
        });
    }
    match best.as_slice() {
        [b] => Ok(TrainLog {
            epochs,
            best_epoch: *b,
            stopped_early: false,
        }),
        _ => Err(TrainError::Config(format!("expected exactly one best row, found {}", best.len()))),
    }
}
