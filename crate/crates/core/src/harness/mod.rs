//! Online evaluation loops: synthetic ground-truth simulation and offline log replay.

mod generate;
mod metrics;
mod output;
mod replay;
mod synthetic;

pub use generate::{generate_retail_logs, GeneratorConfig, RetailLogs};
pub use metrics::{compute_metrics, optimal_rate_in, write_metrics_csv, MetricsRow, MetricsSummary};
pub use output::{config_hash, fingerprint_files, write_run_outputs, RunManifest, RunPaths};
pub use replay::{backfit_examples, run_replay, Featurizer, ReplayData, SKIP_NO_ACTIVE_OFFERS, SKIP_UNKNOWN_SHOWN_OFFER};
pub use synthetic::{run_synthetic, RewardModel, SyntheticConfig, SyntheticOffer, SyntheticRound, SyntheticWorld};

use crate::exploration::ScoredOffer;
use crate::features::FeatureError;
use crate::interpret::{InterpretError, TrajectoryStore};
use crate::policy::{Policy, PolicyError};
use crate::{MemberId, OfferId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("round {round}: {source}")]
    Policy { round: u64, source: PolicyError },
    #[error("round {round}: {source}")]
    Feature { round: u64, source: FeatureError },
    #[error(transparent)]
    Trajectory(#[from] InterpretError),
    #[error("metrics need at least one round")]
    EmptyLog,
    #[error("invalid synthetic world: {0}")]
    World(String),
    #[error("rounds must be at least 1")]
    NoRounds,
}

/// One decision round as written to the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u64,
    pub member_id: MemberId,
    /// Candidates in presentation order, with deterministic `p` and the sampled score.
    pub ranked: Vec<ScoredOffer>,
    pub chosen: OfferId,
    /// 1 if the chosen offer was clipped, else 0.
    pub reward: u8,
    /// Replay only: whether the chosen offer was among those actually shown.
    /// Unmatched rounds carry no reward signal. Always true in simulation.
    pub matched: bool,
    pub oracle_best: Option<OfferId>,
    pub oracle_best_prob: Option<f64>,
    pub chosen_true_prob: Option<f64>,
}

impl RoundLog {
    pub fn is_optimal(&self) -> Option<bool> {
        self.oracle_best.as_ref().map(|b| *b == self.chosen)
    }

    pub fn instant_regret(&self) -> Option<f64> {
        self.oracle_best.as_ref()?;
        Some(self.oracle_best_prob? - self.chosen_true_prob?)
    }
}

/// Why rounds or records were skipped, keyed by reason.
pub type SkipTally = BTreeMap<String, u64>;

/// Everything a run produced.
pub struct RunOutcome {
    pub logs: Vec<RoundLog>,
    pub metrics: MetricsSummary,
    pub trajectories: TrajectoryStore,
    pub skips: SkipTally,
    pub policy: Box<dyn Policy>,
    /// Feature scaler state at the end of the run.
    pub scaler: crate::features::RunningScaler,
}

/// Snapshots the (member, category) models a CAMB update just touched.
fn snapshot_updated<'a, I>(
    policy: &dyn Policy,
    trajectories: &mut TrajectoryStore,
    member: &MemberId,
    categories: I,
    round: u64,
) -> Result<(), InterpretError>
where
    I: IntoIterator<Item = &'a crate::CategoryId>,
{
    if let Some(store) = policy.model_store() {
        for c in categories {
            trajectories.record_snapshot(member, c, store.get(member, c), round)?;
        }
    }
    Ok(())
}
