use super::{OfferCandidate, Policy, PolicyError, PolicyKind, PolicyRng, Round};
use crate::exploration::{sort_by_score, ScoredOffer};
use crate::learner::{CategoryModel, LearnerConfig};
use crate::MemberId;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonDecay {
    Constant,
    /// ε_t = ε₀ / t
    InverseT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonGreedyConfig {
    pub epsilon0: f64,
    pub decay: EpsilonDecay,
}

impl Default for EpsilonGreedyConfig {
    fn default() -> Self {
        Self {
            epsilon0: 0.1,
            decay: EpsilonDecay::Constant,
        }
    }
}

impl EpsilonGreedyConfig {
    /// Exploration probability at one-based round `t`.
    pub fn epsilon_at(&self, t: u64) -> f64 {
        let eps = match self.decay {
            EpsilonDecay::Constant => self.epsilon0,
            EpsilonDecay::InverseT => self.epsilon0 / t.max(1) as f64,
        };
        eps.clamp(0.0, 1.0)
    }
}

/// ε-greedy over a single logistic model fitted on offer-level vectors.
#[derive(Debug, Clone)]
pub struct EpsilonGreedy {
    pub model: CategoryModel,
    learner: LearnerConfig,
    cfg: EpsilonGreedyConfig,
}

impl EpsilonGreedy {
    pub fn new(cfg: EpsilonGreedyConfig, learner: LearnerConfig) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&cfg.epsilon0) {
            return Err(PolicyError::Config(format!("epsilon0 must lie in [0, 1], got {}", cfg.epsilon0)));
        }
        learner.validate()?;
        Ok(Self {
            model: learner.prior_model(),
            learner,
            cfg,
        })
    }
}

impl Policy for EpsilonGreedy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Egreedy
    }

    /// One uniform draw decides explore vs exploit; exploring shuffles the
    /// candidates (in offer-id order first, for a fixed RNG stream).
    fn select(&self, round: &Round<'_>, rng: &mut PolicyRng) -> Result<Vec<ScoredOffer>, PolicyError> {
        round.check()?;
        let mut out: Vec<ScoredOffer> = round
            .candidates
            .iter()
            .map(|c| {
                let p = self.model.predict(&c.flat);
                ScoredOffer {
                    offer_id: c.offer_id.clone(),
                    p,
                    score: p,
                }
            })
            .collect();
        let u: f64 = rng.random();
        if u < self.cfg.epsilon_at(round.t) {
            out.sort_by(|a, b| a.offer_id.cmp(&b.offer_id));
            out.shuffle(rng);
            let n = out.len() as f64;
            for (i, s) in out.iter_mut().enumerate() {
                s.score = (n - i as f64) / n;
            }
        } else {
            sort_by_score(&mut out);
        }
        Ok(out)
    }

    fn update(&mut self, _member: &MemberId, candidate: &OfferCandidate, reward: bool) -> Result<(), PolicyError> {
        self.model.sgd_update(&candidate.flat, reward, &self.learner)?;
        Ok(())
    }
}
