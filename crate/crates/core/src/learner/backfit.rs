use super::{LearnerConfig, LearnerError, ModelStore};
use crate::features::ContextVector;
use crate::{CategoryId, MemberId};
use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

/// One category-level training example extracted from history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub timestamp: NaiveDateTime,
    pub member_id: MemberId,
    pub category_id: CategoryId,
    pub x: ContextVector,
    pub y: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackfitReport {
    pub examples: usize,
    pub trained: usize,
    pub holdout: usize,
    pub positive_updates: usize,
    /// Mean log-loss of the fitted store on the held-out tail.
    pub holdout_log_loss: Option<f64>,
    /// Mean log-loss of the starting (prior) store on the same tail.
    pub prior_holdout_log_loss: Option<f64>,
    /// Set when there was no history; the store is left at its priors.
    pub empty_history: bool,
}

pub(crate) fn mean_log_loss(store: &ModelStore, examples: &[LabeledExample]) -> Option<f64> {
    if examples.is_empty() {
        return None;
    }
    let total: f64 = examples
        .iter()
        .map(|e| {
            let p = store.predict(&e.member_id, &e.category_id, &e.x).clamp(1e-15, 1.0 - 1e-15);
            if e.y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Some(total / examples.len() as f64)
}

/// Replays history through the SGD update in timestamp order.
///
/// The last 10% of examples (by position, rounded down) are held out and
/// scored with both the fitted store and the starting store.
pub fn backfit(
    store: &mut ModelStore,
    examples: &[LabeledExample],
    cfg: &LearnerConfig,
) -> Result<BackfitReport, LearnerError> {
    cfg.validate()?;
    if let Some(i) = examples.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(LearnerError::Unsorted(i + 1));
    }
    let holdout = examples.len() / 10;
    let (train, tail) = examples.split_at(examples.len() - holdout);
    let start = store.clone();
    let mut positive_updates = 0;
    for e in train {
        store.update(&e.member_id, &e.category_id, &e.x, e.y, cfg)?;
        positive_updates += usize::from(e.y);
    }
    Ok(BackfitReport {
        examples: examples.len(),
        trained: train.len(),
        holdout,
        positive_updates,
        holdout_log_loss: mean_log_loss(store, tail),
        prior_holdout_log_loss: mean_log_loss(&start, tail),
        empty_history: examples.is_empty(),
    })
}
