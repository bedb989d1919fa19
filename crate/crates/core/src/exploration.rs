//! Beta-sampled randomized scoring.
//!
//! A deterministic probability `p` becomes a draw from `Beta(κp, κ(1−p))`,
//! which has mean `p` and variance `p(1−p)/(κ+1)`. Raising κ over the run
//! shrinks the noise and moves the ranking toward plain sorting by `p`.

use crate::OfferId;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExplorationError {
    #[error("kappa must be positive and finite, got {0}")]
    Kappa(f64),
    #[error("probability clamp must lie in (0, 0.5), got {0}")]
    Clamp(f64),
    #[error("kappa growth rate must be non-negative, got {0}")]
    Rate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KappaSchedule {
    Constant,
    /// κ(t) = κ₀ · (1 + rate · t)
    LinearGrowth { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationConfig {
    pub kappa_initial: f64,
    pub kappa_schedule: KappaSchedule,
    /// Probabilities are clamped to `[ε, 1−ε]` before sampling.
    pub probability_clamp: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            kappa_initial: 10.0,
            kappa_schedule: KappaSchedule::LinearGrowth { rate: 0.01 },
            probability_clamp: 1e-4,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<(), ExplorationError> {
        if !(self.kappa_initial > 0.0 && self.kappa_initial.is_finite()) {
            return Err(ExplorationError::Kappa(self.kappa_initial));
        }
        if !(self.probability_clamp > 0.0 && self.probability_clamp < 0.5) {
            return Err(ExplorationError::Clamp(self.probability_clamp));
        }
        if let KappaSchedule::LinearGrowth { rate } = self.kappa_schedule {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(ExplorationError::Rate(rate));
            }
        }
        Ok(())
    }

    /// Concentration at round `t` (zero-based).
    pub fn kappa_at(&self, t: u64) -> f64 {
        match self.kappa_schedule {
            KappaSchedule::Constant => self.kappa_initial,
            KappaSchedule::LinearGrowth { rate } => self.kappa_initial * (1.0 + rate * t as f64),
        }
    }
}

/// Largest double below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// One draw from `Beta(κp, κ(1−p))` with `p` clamped to `[clamp, 1−clamp]`.
///
/// The result always lies strictly inside `(0, 1)`; draws that underflow
/// to an endpoint are nudged to the nearest representable interior value.
pub fn sample_score<R: Rng + ?Sized>(p: f64, kappa: f64, clamp: f64, rng: &mut R) -> Result<f64, ExplorationError> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(ExplorationError::Kappa(kappa));
    }
    let p = p.clamp(clamp, 1.0 - clamp);
    let beta = Beta::new(kappa * p, kappa * (1.0 - p)).map_err(|_| ExplorationError::Kappa(kappa))?;
    Ok(beta.sample(rng).clamp(f64::MIN_POSITIVE, BELOW_ONE))
}

/// An offer with its deterministic probability and the score it was ranked by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredOffer {
    pub offer_id: OfferId,
    pub p: f64,
    pub score: f64,
}

/// Sorts descending by score, breaking ties by offer id.
pub fn sort_by_score(offers: &mut [ScoredOffer]) {
    offers.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.offer_id.cmp(&b.offer_id)));
}

/// Samples one score per offer and ranks by it.
///
/// Draws are taken in offer-id order (the map's order), so the RNG stream is
/// consumed identically regardless of how the caller built the map.
pub fn rank_offers<R: Rng + ?Sized>(
    probs: &BTreeMap<OfferId, f64>,
    kappa: f64,
    clamp: f64,
    rng: &mut R,
) -> Result<Vec<ScoredOffer>, ExplorationError> {
    let mut out = probs
        .iter()
        .map(|(id, &p)| {
            Ok(ScoredOffer {
                offer_id: id.clone(),
                p,
                score: sample_score(p, kappa, clamp, rng)?,
            })
        })
        .collect::<Result<Vec<_>, ExplorationError>>()?;
    sort_by_score(&mut out);
    Ok(out)
}
