use super::{write_metrics_csv, MetricsSummary, RunOutcome, SkipTally};
use crate::features::FEATURE_ORDER_VERSION;
use crate::util::{sha256_hex, write_json_pretty, write_jsonl};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io;
use std::path::{Path, PathBuf};

/// Records how a run directory was produced. Contains no timestamps, so identical runs
/// produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub policy: String,
    pub seed: u64,
    pub rounds: u64,
    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub config_hash: String,
    /// SHA-256 over the input files, or over the world settings for simulations.
    pub data_fingerprint: String,
    pub skip_tallies: SkipTally,
    pub feature_order_version: String,
    /// Set for replays: how the reward metrics were estimated.
    pub estimator: Option<String>,
    pub files: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, policy: &str, seed: u64, config_hash: String, data_fingerprint: String) -> Self {
        Self {
            command: command.into(),
            policy: policy.into(),
            seed,
            rounds: 0,
            config_hash,
            data_fingerprint,
            skip_tallies: SkipTally::new(),
            feature_order_version: FEATURE_ORDER_VERSION.into(),
            estimator: None,
            files: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    command: &'a str,
    policy: &'a str,
    seed: u64,
    estimator: Option<&'a str>,
    #[serde(flatten)]
    metrics: &'a MetricsSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPaths {
    pub round_log: PathBuf,
    pub metrics_csv: PathBuf,
    pub summary: PathBuf,
    pub trajectories: PathBuf,
    pub manifest: PathBuf,
}

impl RunPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            round_log: dir.join("round_log.jsonl"),
            metrics_csv: dir.join("metrics.csv"),
            summary: dir.join("summary.json"),
            trajectories: dir.join("trajectories.jsonl"),
            manifest: dir.join("manifest.json"),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [
            &self.round_log,
            &self.metrics_csv,
            &self.summary,
            &self.trajectories,
            &self.manifest,
        ]
    }
}

/// Writes the round log, metrics CSV, JSON summary, trajectories and manifest into `dir`.
pub fn write_run_outputs(dir: &Path, outcome: &RunOutcome, manifest: &RunManifest) -> io::Result<RunPaths> {
    std::fs::create_dir_all(dir)?;
    let paths = RunPaths::in_dir(dir);
    write_jsonl(&paths.round_log, None, &outcome.logs)?;
    write_metrics_csv(&paths.metrics_csv, &outcome.metrics.rows)?;
    write_json_pretty(
        &paths.summary,
        &RunSummary {
            command: &manifest.command,
            policy: &manifest.policy,
            seed: manifest.seed,
            estimator: manifest.estimator.as_deref(),
            metrics: &outcome.metrics,
        },
    )?;
    outcome.trajectories.write(&paths.trajectories)?;
    let mut manifest = manifest.clone();
    manifest.rounds = outcome.metrics.rounds;
    manifest.skip_tallies = outcome.skips.clone();
    manifest.files = paths
        .all()
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    write_json_pretty(&paths.manifest, &manifest)?;
    Ok(paths)
}

/// SHA-256 of a value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

/// SHA-256 over each file's name and contents, in the given order.
pub fn fingerprint_files(paths: &[&Path]) -> io::Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(p.file_name().map(|f| f.as_encoded_bytes()).unwrap_or_default());
        h.update([0]);
        h.update(std::fs::read(p)?);
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}
