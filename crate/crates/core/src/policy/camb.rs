use super::{OfferCandidate, Policy, PolicyError, PolicyKind, PolicyRng, Round};
use crate::exploration::{rank_offers, ExplorationConfig, ScoredOffer};
use crate::learner::{aggregate_offer, LearnerConfig, ModelStore};
use crate::MemberId;
use std::collections::BTreeMap;

/// Category-level logistic bandit: per-(member, category) SGD models,
/// share-weighted logit aggregation to offers, Beta-sampled ranking.
#[derive(Debug, Clone)]
pub struct Camb {
    store: ModelStore,
    learner: LearnerConfig,
    exploration: ExplorationConfig,
}

impl Camb {
    pub fn new(store: ModelStore, learner: LearnerConfig, exploration: ExplorationConfig) -> Result<Self, PolicyError> {
        learner.validate()?;
        exploration.validate()?;
        Ok(Self {
            store,
            learner,
            exploration,
        })
    }

    /// Deterministic offer probability before exploration noise.
    pub fn offer_probability(&self, member: &MemberId, cand: &OfferCandidate) -> Result<f64, PolicyError> {
        let probs: BTreeMap<_, _> = cand
            .categories
            .iter()
            .map(|c| (c.category_id.clone(), self.store.predict(member, &c.category_id, &c.x)))
            .collect();
        Ok(aggregate_offer(
            &probs,
            &cand.purchase_shares,
            cand.mf_score,
            self.learner.mf_bias_coeff,
        )?)
    }

    pub fn into_store(self) -> ModelStore {
        self.store
    }
}

impl Policy for Camb {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Camb
    }

    fn select(&self, round: &Round<'_>, rng: &mut PolicyRng) -> Result<Vec<ScoredOffer>, PolicyError> {
        round.check()?;
        let probs = round
            .candidates
            .iter()
            .map(|c| Ok((c.offer_id.clone(), self.offer_probability(round.member_id, c)?)))
            .collect::<Result<BTreeMap<_, _>, PolicyError>>()?;
        let kappa = self.exploration.kappa_at(round.t.saturating_sub(1));
        Ok(rank_offers(&probs, kappa, self.exploration.probability_clamp, rng)?)
    }

    fn update(&mut self, member: &MemberId, candidate: &OfferCandidate, reward: bool) -> Result<(), PolicyError> {
        for c in &candidate.categories {
            self.store.update(member, &c.category_id, &c.x, reward, &self.learner)?;
        }
        Ok(())
    }

    fn model_store(&self) -> Option<&ModelStore> {
        Some(&self.store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exploration::KappaSchedule;
    use crate::policy::test_support::*;
    use crate::policy::CategoryContext;
    use rand::SeedableRng;

    fn camb(kappa: f64) -> Camb {
        let learner = LearnerConfig::default();
        Camb::new(
            ModelStore::from_config(&learner),
            learner,
            ExplorationConfig {
                kappa_initial: kappa,
                kappa_schedule: KappaSchedule::Constant,
                probability_clamp: 1e-4,
            },
        )
        .unwrap()
    }

    #[test]
    fn update_touches_every_offer_category() {
        let mut p = camb(10.0);
        let m: MemberId = "m".into();
        let cand = OfferCandidate::new(
            "o".into(),
            vec![
                CategoryContext { category_id: "a".into(), x: ctx([1.0; 8]) },
                CategoryContext { category_id: "b".into(), x: ctx([0.5; 8]) },
            ],
            [("a".into(), 0.5), ("b".into(), 0.5)].into_iter().collect(),
            0.0,
        );
        p.update(&m, &cand, true).unwrap();
        let store = p.model_store().unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.get(&m, &"a".into()).update_count, 1);
        assert!(p.offer_probability(&m, &cand).unwrap() > 0.5);
    }

    #[test]
    fn select_is_pure_and_learns_preference() {
        let mut p = camb(1e8);
        let m: MemberId = "m".into();
        let good = candidate("good", ctx([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let bad = candidate("bad", ctx([-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        for _ in 0..20 {
            p.update(&m, &good, true).unwrap();
            p.update(&m, &bad, false).unwrap();
        }
        let cands = [bad.clone(), good.clone()];
        let round = Round { t: 5, member_id: &m, candidates: &cands };
        let before = p.model_store().unwrap().clone();
        let r1 = p.select(&round, &mut PolicyRng::seed_from_u64(1)).unwrap();
        let r2 = p.select(&round, &mut PolicyRng::seed_from_u64(1)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1[0].offer_id, "good".into());
        assert_eq!(p.model_store().unwrap(), &before);
    }
}
