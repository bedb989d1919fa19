//! TOML run configuration: one section per module, all keys optional.

use crate::exploration::ExplorationConfig;
use crate::features::FeatureConfig;
use crate::harness::{GeneratorConfig, SyntheticConfig};
use crate::interpret::PayloadConfig;
use crate::learner::LearnerConfig;
use crate::mf::MfConfig;
use crate::policy::{EpsilonGreedyConfig, LinUcbConfig, PolicyKind, PolicyParams, ThompsonConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config key data.{key} is required for this command")]
    MissingPath { key: &'static str },
    #[error("config key data.{key} points to missing file {path}")]
    MissingFile { key: &'static str, path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub policy: PolicyKind,
    pub seed: u64,
    pub rounds: u64,
    pub out: PathBuf,
    /// Keep every n-th weight snapshot per (member, category).
    pub snapshot_every: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Camb,
            seed: 42,
            rounds: 5000,
            out: PathBuf::from("runs/default"),
            snapshot_every: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub transactions: Option<PathBuf>,
    pub offers: Option<PathBuf>,
    pub impressions: Option<PathBuf>,
    pub mf_scores: Option<PathBuf>,
    /// Backfit checkpoint to start CAMB from.
    pub checkpoint: Option<PathBuf>,
    /// Trajectory file read by `explain`.
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub features: FeatureConfig,
    pub learner: LearnerConfig,
    pub exploration: ExplorationConfig,
    pub linucb: LinUcbConfig,
    pub egreedy: EpsilonGreedyConfig,
    pub ts: ThompsonConfig,
    pub synthetic: SyntheticConfig,
    pub interpret: PayloadConfig,
    pub mf: MfConfig,
    pub generator: GeneratorConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
    pub policy: Option<PolicyKind>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    /// Reads a config file. Relative data paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        if let Some(base) = path.parent() {
            cfg.data.rebase(base);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(r) = o.rounds {
            self.run.rounds = r;
        }
        if let Some(p) = o.policy {
            self.run.policy = p;
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
    }

    /// Range checks delegated to the owning modules.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.learner.validate().map_err(|e| invalid(&e))?;
        self.exploration.validate().map_err(|e| invalid(&e))?;
        if !(self.features.cold_start_mpg.is_finite() && self.features.default_cycle_days > 0.0) {
            return Err(ConfigError::Invalid(
                "features.cold_start_mpg must be finite and features.default_cycle_days positive".into(),
            ));
        }
        if self.run.snapshot_every == 0 {
            return Err(ConfigError::Invalid("run.snapshot_every must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.egreedy.epsilon0) {
            return Err(ConfigError::Invalid("egreedy.epsilon0 must lie in [0, 1]".into()));
        }
        if !(self.linucb.l2_lambda > 0.0 && self.ts.l2_lambda > 0.0) {
            return Err(ConfigError::Invalid("linucb.l2_lambda and ts.l2_lambda must be positive".into()));
        }
        if !(self.linucb.alpha_explore >= 0.0 && self.ts.v >= 0.0) {
            return Err(ConfigError::Invalid("linucb.alpha_explore and ts.v must be non-negative".into()));
        }
        if self.mf.rank == 0 || !(self.mf.lambda >= 0.0) {
            return Err(ConfigError::Invalid("mf.rank must be positive and mf.lambda non-negative".into()));
        }
        Ok(())
    }

    pub fn policy_params(&self) -> PolicyParams {
        PolicyParams {
            learner: self.learner.clone(),
            exploration: self.exploration.clone(),
            linucb: self.linucb.clone(),
            egreedy: self.egreedy.clone(),
            ts: self.ts.clone(),
        }
    }
}

impl DataSection {
    fn entries(&mut self) -> [(&'static str, &mut Option<PathBuf>); 6] {
        [
            ("transactions", &mut self.transactions),
            ("offers", &mut self.offers),
            ("impressions", &mut self.impressions),
            ("mf_scores", &mut self.mf_scores),
            ("checkpoint", &mut self.checkpoint),
            ("trajectories", &mut self.trajectories),
        ]
    }

    fn rebase(&mut self, base: &Path) {
        for (_, p) in self.entries() {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    /// The path under `key`, which must be set and exist.
    pub fn require(&self, key: &'static str) -> Result<&Path, ConfigError> {
        let p = self.get(key).ok_or(ConfigError::MissingPath { key })?;
        if !p.exists() {
            return Err(ConfigError::MissingFile {
                key,
                path: p.to_path_buf(),
            });
        }
        Ok(p)
    }

    /// The path under `key` if set; it must then exist.
    pub fn optional(&self, key: &'static str) -> Result<Option<&Path>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.require(key).map(Some),
        }
    }

    fn get(&self, key: &str) -> Option<&Path> {
        match key {
            "transactions" => self.transactions.as_deref(),
            "offers" => self.offers.as_deref(),
            "impressions" => self.impressions.as_deref(),
            "mf_scores" => self.mf_scores.as_deref(),
            "checkpoint" => self.checkpoint.as_deref(),
            "trajectories" => self.trajectories.as_deref(),
            _ => None,
        }
    }
}
