use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::counts::CountRow;
use super::fit::History;
use super::sweep::{ReprCell, SubsampleRow};
use crate::error::{Error, Result};

/// Version tag of run manifests; reports refuse to merge differing versions.
pub const MANIFEST_VERSION: u32 = 1;

/// Written next to every run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    /// `pcaudio <crate version>`
    pub version: String,
    pub command: String,
    pub preset: Option<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub metrics: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            schema_version: MANIFEST_VERSION,
            version: format!("pcaudio {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            preset: None,
            seed,
            config: serde_json::Value::Null,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
            metrics: serde_json::Value::Null,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MANIFEST_VERSION as u64 => Ok(serde_json::from_value(value)?),
            Some(v) => Err(Error::Schema(format!(
                "{} has manifest version {v}, this build reads version {MANIFEST_VERSION}",
                path.display()
            ))),
            None => Err(Error::Schema(format!("{} has no schema_version", path.display()))),
        }
    }
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct HistoryRow {
    epoch: usize,
    loss: f64,
    train_accuracy: f64,
}

/// One row per epoch. Timings are left out so reruns match byte for byte.
pub fn write_history_csv(path: impl AsRef<Path>, history: &History) -> Result<()> {
    write_rows(
        path.as_ref(),
        history.epochs.iter().map(|e| HistoryRow {
            epoch: e.epoch,
            loss: e.loss,
            train_accuracy: e.train_accuracy,
        }),
    )
}

#[derive(Serialize)]
struct ReprRow {
    n_fft: usize,
    sample_rate: u32,
    accuracy: String,
    examples: usize,
}

/// One row per cell; unsupported cells say so in the accuracy column.
pub fn write_repr_csv(path: impl AsRef<Path>, cells: &[ReprCell]) -> Result<()> {
    write_rows(
        path.as_ref(),
        cells.iter().map(|c| ReprRow {
            n_fft: c.n_fft,
            sample_rate: c.sample_rate,
            accuracy: c.accuracy.map_or_else(|| "unsupported".to_string(), |a| a.to_string()),
            examples: c.examples,
        }),
    )
}

#[derive(Serialize)]
struct SubsampleCsvRow {
    strategy: String,
    fraction: f64,
    repeats: usize,
    mean: f64,
    std: f64,
}

pub fn write_subsample_csv(path: impl AsRef<Path>, rows: &[SubsampleRow]) -> Result<()> {
    write_rows(
        path.as_ref(),
        rows.iter().map(|r| SubsampleCsvRow {
            strategy: r.strategy.to_string(),
            fraction: r.fraction,
            repeats: r.repeats,
            mean: r.mean,
            std: r.std,
        }),
    )
}

pub fn write_counts_csv(path: impl AsRef<Path>, rows: &[CountRow]) -> Result<()> {
    write_rows(path.as_ref(), rows)
}
