use super::{OfferCandidate, Policy, PolicyError, PolicyKind, PolicyRng, Round};
use crate::exploration::{sort_by_score, ScoredOffer};
use crate::MemberId;
use rand::seq::SliceRandom;

/// Uniformly random permutation every round; learns nothing.
#[derive(Debug, Clone, Default)]
pub struct UniformRandom;

impl Policy for UniformRandom {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn select(&self, round: &Round<'_>, rng: &mut PolicyRng) -> Result<Vec<ScoredOffer>, PolicyError> {
        round.check()?;
        let mut ids: Vec<_> = round.candidates.iter().map(|c| c.offer_id.clone()).collect();
        ids.sort();
        ids.shuffle(rng);
        let n = ids.len() as f64;
        Ok(ids
            .into_iter()
            .enumerate()
            .map(|(i, offer_id)| ScoredOffer {
                offer_id,
                p: 1.0 / n,
                score: (n - i as f64) / n,
            })
            .collect())
    }

    fn update(&mut self, _: &MemberId, _: &OfferCandidate, _: bool) -> Result<(), PolicyError> {
        Ok(())
    }
}

/// Ranks by the ground-truth probability carried on synthetic candidates.
#[derive(Debug, Clone, Default)]
pub struct Oracle;

impl Policy for Oracle {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Oracle
    }

    fn select(&self, round: &Round<'_>, _rng: &mut PolicyRng) -> Result<Vec<ScoredOffer>, PolicyError> {
        round.check()?;
        let mut out = round
            .candidates
            .iter()
            .map(|c| {
                let p = c.true_prob.ok_or_else(|| PolicyError::MissingTruth(c.offer_id.clone()))?;
                Ok(ScoredOffer {
                    offer_id: c.offer_id.clone(),
                    p,
                    score: p,
                })
            })
            .collect::<Result<Vec<_>, PolicyError>>()?;
        sort_by_score(&mut out);
        Ok(out)
    }

    fn update(&mut self, _: &MemberId, _: &OfferCandidate, _: bool) -> Result<(), PolicyError> {
        Ok(())
    }
}
