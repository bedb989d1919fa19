//! Offer-selection policies behind one interface.
//!
//! [`Camb`] is the category-level logistic bandit with Beta-sampled scoring.
//! The comparison baselines ([`LinUcb`], [`LinearThompson`], [`EpsilonGreedy`])
//! share one parameter vector across offers and read the offer-level
//! [`OfferCandidate::flat`] vector, so every policy sees the same features.
//! [`UniformRandom`] and [`Oracle`] are reference points for the harness.

mod camb;
mod egreedy;
mod linucb;
mod simple;
mod thompson;

pub use camb::Camb;
pub use egreedy::{EpsilonDecay, EpsilonGreedy, EpsilonGreedyConfig};
pub use linucb::{LinUcb, LinUcbConfig, LinUcbState};
pub use simple::{Oracle, UniformRandom};
pub use thompson::{LinearThompson, ThompsonConfig, ThompsonState};

use crate::exploration::{ExplorationError, ScoredOffer};
use crate::features::{ContextVector, NUM_FEATURES};
use crate::learner::{LearnerError, ModelStore};
use crate::{CategoryId, MemberId, OfferId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// RNG threaded through every policy's `select`.
pub type PolicyRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no candidate offers")]
    NoCandidates,
    #[error("duplicate candidate offer {0}")]
    DuplicateOffer(OfferId),
    #[error("{0} matrix is not positive definite; state update bug")]
    NotPositiveDefinite(&'static str),
    #[error("oracle needs the true probability of offer {0}")]
    MissingTruth(OfferId),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Exploration(#[from] ExplorationError),
    #[error("invalid policy setting: {0}")]
    Config(String),
}

/// One category of a candidate offer with its normalised context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryContext {
    pub category_id: CategoryId,
    pub x: ContextVector,
}

/// Everything a policy may look at for one offer in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct OfferCandidate {
    pub offer_id: OfferId,
    /// One entry per offer category, sorted by category id.
    pub categories: Vec<CategoryContext>,
    /// Member's purchase shares over this offer's categories (sum to 1).
    pub purchase_shares: BTreeMap<CategoryId, f64>,
    /// Raw MF score, added to the offer logit by CAMB.
    pub mf_score: f64,
    /// Share-weighted mean of the category contexts; the bias element stays 1.
    pub flat: ContextVector,
    /// Ground-truth clip probability; only synthetic worlds know it.
    pub true_prob: Option<f64>,
}

impl OfferCandidate {
    pub fn new(
        offer_id: OfferId,
        mut categories: Vec<CategoryContext>,
        purchase_shares: BTreeMap<CategoryId, f64>,
        mf_score: f64,
    ) -> Self {
        categories.sort_by(|a, b| a.category_id.cmp(&b.category_id));
        let flat = flatten(&categories, &purchase_shares);
        Self {
            offer_id,
            categories,
            purchase_shares,
            mf_score,
            flat,
            true_prob: None,
        }
    }

    pub fn with_truth(mut self, p: f64) -> Self {
        self.true_prob = Some(p);
        self
    }
}

fn flatten(categories: &[CategoryContext], shares: &BTreeMap<CategoryId, f64>) -> ContextVector {
    let raw: Vec<f64> = categories
        .iter()
        .map(|c| shares.get(&c.category_id).copied().unwrap_or(0.0).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    let n = categories.len().max(1) as f64;
    let mut values = [0.0; NUM_FEATURES];
    for (c, s) in categories.iter().zip(&raw) {
        let w = if total > 0.0 { s / total } else { 1.0 / n };
        for (v, x) in values.iter_mut().zip(&c.x.values) {
            *v += w * x;
        }
    }
    values[0] = 1.0;
    ContextVector { values }
}

/// The decision problem for one round.
#[derive(Debug, Clone, Copy)]
pub struct Round<'a> {
    /// One-based round index.
    pub t: u64,
    pub member_id: &'a MemberId,
    pub candidates: &'a [OfferCandidate],
}

impl Round<'_> {
    pub(crate) fn check(&self) -> Result<(), PolicyError> {
        if self.candidates.is_empty() {
            return Err(PolicyError::NoCandidates);
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in self.candidates {
            if !seen.insert(&c.offer_id) {
                return Err(PolicyError::DuplicateOffer(c.offer_id.clone()));
            }
        }
        Ok(())
    }
}

pub trait Policy {
    fn kind(&self) -> PolicyKind;

    /// Ranks the round's candidates, best first. Never mutates learned state.
    fn select(&self, round: &Round<'_>, rng: &mut PolicyRng) -> Result<Vec<ScoredOffer>, PolicyError>;

    /// Feeds back the observed reward for one shown offer.
    fn update(&mut self, member: &MemberId, candidate: &OfferCandidate, reward: bool) -> Result<(), PolicyError>;

    /// Per-(member, category) models, for policies that keep them.
    fn model_store(&self) -> Option<&ModelStore> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Camb,
    Linucb,
    Egreedy,
    Ts,
    Random,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Camb,
        PolicyKind::Linucb,
        PolicyKind::Egreedy,
        PolicyKind::Ts,
        PolicyKind::Random,
        PolicyKind::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Camb => "camb",
            PolicyKind::Linucb => "linucb",
            PolicyKind::Egreedy => "egreedy",
            PolicyKind::Ts => "ts",
            PolicyKind::Random => "random",
            PolicyKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}` (expected camb|linucb|egreedy|ts|random|oracle)"))
    }
}

/// Hyperparameters for every policy, one section each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyParams {
    pub learner: crate::learner::LearnerConfig,
    pub exploration: crate::exploration::ExplorationConfig,
    pub linucb: LinUcbConfig,
    pub egreedy: EpsilonGreedyConfig,
    pub ts: ThompsonConfig,
}

/// Builds a policy by kind. `store` seeds CAMB (e.g. from a backfit
/// checkpoint) and is ignored by the other policies.
pub fn build_policy(
    kind: PolicyKind,
    params: &PolicyParams,
    store: Option<ModelStore>,
) -> Result<Box<dyn Policy>, PolicyError> {
    Ok(match kind {
        PolicyKind::Camb => {
            let store = store.unwrap_or_else(|| ModelStore::from_config(&params.learner));
            Box::new(Camb::new(store, params.learner.clone(), params.exploration.clone())?)
        }
        PolicyKind::Linucb => Box::new(LinUcb::new(&params.linucb)?),
        PolicyKind::Egreedy => Box::new(EpsilonGreedy::new(params.egreedy.clone(), params.learner.clone())?),
        PolicyKind::Ts => Box::new(LinearThompson::new(&params.ts)?),
        PolicyKind::Random => Box::new(UniformRandom),
        PolicyKind::Oracle => Box::new(Oracle),
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn ctx(features: [f64; NUM_FEATURES - 1]) -> ContextVector {
        ContextVector::from_features(features).unwrap()
    }

    /// Single-category candidate whose flat vector equals `x`.
    pub fn candidate(id: &str, x: ContextVector) -> OfferCandidate {
        OfferCandidate::new(
            id.into(),
            vec![CategoryContext {
                category_id: "c".into(),
                x,
            }],
            [("c".into(), 1.0)].into_iter().collect(),
            0.0,
        )
    }
}
