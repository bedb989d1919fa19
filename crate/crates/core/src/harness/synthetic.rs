use super::{snapshot_updated, HarnessError, RoundLog, RunOutcome};
use crate::features::{ContextVector, RunningScaler, NUM_FEATURES};
use crate::harness::compute_metrics;
use crate::interpret::TrajectoryStore;
use crate::learner::sigmoid;
use crate::policy::{CategoryContext, OfferCandidate, Policy, PolicyError, PolicyRng, Round};
use crate::{CategoryId, MemberId, OfferId};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardModel {
    /// p* = σ(Σ_c share_c · w*_cᵀz_c + β·mf)
    Logistic,
    /// p* = clamp(θ*ᵀ z̄, 0.01, 0.99) with z̄ the share-weighted mean context.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub members: usize,
    pub categories: usize,
    pub offers_per_round: usize,
    pub max_categories_per_offer: usize,
    pub reward: RewardModel,
    /// Std of the non-bias entries of w*.
    pub weight_scale: f64,
    /// Mean of the bias entry of w*; sets the base clip rate.
    pub bias_mean: f64,
    /// Additive MF logit coefficient in the logistic world.
    pub mf_bias: f64,
    pub linear_bias: f64,
    /// Magnitude of each non-bias coefficient of θ* (signs are random).
    pub linear_coef: f64,
    /// Symmetric Dirichlet concentration for member category shares.
    pub share_concentration: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            members: 5,
            categories: 5,
            offers_per_round: 5,
            max_categories_per_offer: 3,
            reward: RewardModel::Logistic,
            weight_scale: 1.0,
            bias_mean: -1.0,
            mf_bias: 1.0,
            linear_bias: 0.3,
            linear_coef: 0.08,
            share_concentration: 1.0,
        }
    }
}

/// Raw feature ranges, as (population mean, population std) of the draws below.
const FEATURE_MOMENTS: [(f64, f64); NUM_FEATURES - 1] = [
    (1.5, 0.866_025_403_784_438_6),   // mpg ~ U[0, 3]
    (0.5, 0.288_675_134_594_812_9),   // brand_loyalty ~ U[0, 1]
    (0.5, 0.288_675_134_594_812_9),   // seasonality ~ U[0, 1]
    (0.5, 0.288_675_134_594_812_9),   // recency ~ U[0, 1]
    (15.5, 8.655_441_448_112_52),     // duration ~ U{1..30}
    (5.25, 2.742_413_778_650_46),     // value ~ U[0.5, 10]
    (3.0, 1.414_213_562_373_095_1),   // num_items ~ U{1..5}
    (0.0, 1.0),                       // mf_score ~ N(0, 1)
];

fn standardize(raw: &ContextVector) -> [f64; NUM_FEATURES] {
    let mut z = raw.values;
    for (v, (m, s)) in z.iter_mut().skip(1).zip(FEATURE_MOMENTS) {
        *v = (*v - m) / s;
    }
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOffer {
    pub offer_id: OfferId,
    /// Raw (unscaled) context per category, in category order.
    pub contexts: Vec<(CategoryId, ContextVector)>,
    pub shares: BTreeMap<CategoryId, f64>,
    pub mf_score: f64,
    pub true_prob: f64,
    /// Outcome if this offer were chosen, drawn before the policy acts.
    pub reward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRound {
    pub member_id: MemberId,
    pub offers: Vec<SyntheticOffer>,
}

/// A fixed ground-truth environment that emits candidate offers round by round.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub cfg: SyntheticConfig,
    pub categories: Vec<CategoryId>,
    pub members: Vec<MemberId>,
    pub true_weights: BTreeMap<CategoryId, [f64; NUM_FEATURES]>,
    pub linear_theta: [f64; NUM_FEATURES],
    pub member_shares: BTreeMap<MemberId, BTreeMap<CategoryId, f64>>,
    rng: ChaCha8Rng,
}

impl SyntheticWorld {
    pub fn new(cfg: SyntheticConfig, seed: u64) -> Result<Self, HarnessError> {
        let bad = |m: &str| Err(HarnessError::World(m.to_string()));
        if cfg.members == 0 || cfg.categories == 0 || cfg.offers_per_round == 0 {
            return bad("members, categories and offers_per_round must be positive");
        }
        if cfg.max_categories_per_offer == 0 || cfg.max_categories_per_offer > cfg.categories {
            return bad("max_categories_per_offer must lie in 1..=categories");
        }
        if !(cfg.weight_scale >= 0.0 && cfg.share_concentration > 0.0 && cfg.linear_coef >= 0.0) {
            return bad("weight_scale and linear_coef must be non-negative, share_concentration positive");
        }
        if ![cfg.bias_mean, cfg.mf_bias, cfg.linear_bias].iter().all(|v| v.is_finite()) {
            return bad("coefficients must be finite");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let categories: Vec<CategoryId> = (0..cfg.categories).map(|i| format!("c{i:02}").into()).collect();
        let members: Vec<MemberId> = (0..cfg.members).map(|i| format!("m{i:03}").into()).collect();

        let weight = Normal::new(0.0, cfg.weight_scale).expect("checked scale");
        let bias = Normal::new(cfg.bias_mean, 0.25).expect("finite mean");
        let true_weights = categories
            .iter()
            .map(|c| {
                let mut w = [0.0; NUM_FEATURES];
                w[0] = bias.sample(&mut rng);
                w.iter_mut().skip(1).for_each(|v| *v = weight.sample(&mut rng));
                (c.clone(), w)
            })
            .collect();

        let mut linear_theta = [cfg.linear_bias; NUM_FEATURES];
        for v in linear_theta.iter_mut().skip(1) {
            *v = if rng.random::<bool>() { cfg.linear_coef } else { -cfg.linear_coef };
        }

        let gamma = Gamma::new(cfg.share_concentration, 1.0).expect("checked concentration");
        let member_shares = members
            .iter()
            .map(|m| {
                let raw: Vec<f64> = categories.iter().map(|_| gamma.sample(&mut rng).max(1e-12)).collect();
                let total: f64 = raw.iter().sum();
                let shares = categories.iter().cloned().zip(raw.iter().map(|r| r / total)).collect();
                (m.clone(), shares)
            })
            .collect();

        Ok(Self {
            cfg,
            categories,
            members,
            true_weights,
            linear_theta,
            member_shares,
            rng,
        })
    }

    /// Ground-truth clip probability of an offer for a member.
    pub fn true_probability(
        &self,
        contexts: &[(CategoryId, ContextVector)],
        shares: &BTreeMap<CategoryId, f64>,
        mf_score: f64,
    ) -> f64 {
        match self.cfg.reward {
            RewardModel::Logistic => {
                let logit: f64 = contexts
                    .iter()
                    .map(|(c, x)| {
                        let z = standardize(x);
                        shares[c] * self.true_weights[c].iter().zip(&z).map(|(w, z)| w * z).sum::<f64>()
                    })
                    .sum();
                sigmoid(logit + self.cfg.mf_bias * mf_score)
            }
            RewardModel::Linear => {
                let mut flat = [0.0; NUM_FEATURES];
                for (c, x) in contexts {
                    for (f, z) in flat.iter_mut().zip(standardize(x)) {
                        *f += shares[c] * z;
                    }
                }
                flat[0] = 1.0;
                let p: f64 = self.linear_theta.iter().zip(&flat).map(|(t, x)| t * x).sum();
                p.clamp(0.01, 0.99)
            }
        }
    }

    pub fn next_round(&mut self) -> SyntheticRound {
        let member = self.members[self.rng.random_range(0..self.members.len())].clone();
        let member_shares = &self.member_shares[&member];
        let mut offers = Vec::with_capacity(self.cfg.offers_per_round);
        for k in 0..self.cfg.offers_per_round {
            let rng = &mut self.rng;
            let n_cat = rng.random_range(1..=self.cfg.max_categories_per_offer);
            let mut picks = sample(rng, self.categories.len(), n_cat).into_vec();
            picks.sort_unstable();
            let recency: f64 = rng.random();
            let duration = rng.random_range(1..=30u32) as f64;
            let value = rng.random_range(0.5..10.0);
            let items = rng.random_range(1..=5u32) as f64;
            let mf: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
            let contexts: Vec<(CategoryId, ContextVector)> = picks
                .iter()
                .map(|&i| {
                    let mpg = rng.random_range(0.0..3.0);
                    let loyalty: f64 = rng.random();
                    let season: f64 = rng.random();
                    let x = ContextVector::from_features([mpg, loyalty, season, recency, duration, value, items, mf])
                        .expect("finite draws");
                    (self.categories[i].clone(), x)
                })
                .collect();
            let total: f64 = contexts.iter().map(|(c, _)| member_shares[c]).sum();
            let shares: BTreeMap<CategoryId, f64> =
                contexts.iter().map(|(c, _)| (c.clone(), member_shares[c] / total)).collect();
            offers.push(SyntheticOffer {
                offer_id: format!("o{k:02}").into(),
                contexts,
                shares,
                mf_score: mf,
                true_prob: 0.0,
                reward: false,
            });
        }
        for o in &mut offers {
            o.true_prob = self.true_probability(&o.contexts, &o.shares, o.mf_score);
            o.reward = self.rng.random::<f64>() < o.true_prob;
        }
        SyntheticRound {
            member_id: member,
            offers,
        }
    }
}

/// Runs `rounds` top-1 decisions against the world. Only the chosen offer's
/// outcome is revealed to the policy.
///
/// The policy's RNG is a separate stream of `seed`, so every policy faces the
/// same sequence of rounds and outcomes for a given world seed.
pub fn run_synthetic(
    world: &mut SyntheticWorld,
    mut policy: Box<dyn Policy>,
    rounds: u64,
    seed: u64,
    snapshot_every: u64,
) -> Result<RunOutcome, HarnessError> {
    if rounds == 0 {
        return Err(HarnessError::NoRounds);
    }
    let mut rng = PolicyRng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut scaler = RunningScaler::new();
    let mut trajectories = TrajectoryStore::new(snapshot_every);
    let mut logs = Vec::with_capacity(rounds as usize);
    for t in 1..=rounds {
        let round = world.next_round();
        for o in &round.offers {
            o.contexts.iter().for_each(|(_, x)| scaler.update(x));
        }
        let candidates: Vec<OfferCandidate> = round
            .offers
            .iter()
            .map(|o| {
                let cats = o
                    .contexts
                    .iter()
                    .map(|(c, x)| CategoryContext {
                        category_id: c.clone(),
                        x: scaler.transform(x),
                    })
                    .collect();
                OfferCandidate::new(o.offer_id.clone(), cats, o.shares.clone(), o.mf_score).with_truth(o.true_prob)
            })
            .collect();
        let policy_err = |source: PolicyError| HarnessError::Policy { round: t, source };
        let ranked = policy
            .select(
                &Round {
                    t,
                    member_id: &round.member_id,
                    candidates: &candidates,
                },
                &mut rng,
            )
            .map_err(policy_err)?;
        let chosen = ranked[0].offer_id.clone();
        let idx = round.offers.iter().position(|o| o.offer_id == chosen).expect("chosen among candidates");
        let best = round
            .offers
            .iter()
            .fold(&round.offers[0], |b, o| if o.true_prob > b.true_prob { o } else { b });
        let chosen_offer = &round.offers[idx];

        policy
            .update(&round.member_id, &candidates[idx], chosen_offer.reward)
            .map_err(policy_err)?;
        snapshot_updated(
            policy.as_ref(),
            &mut trajectories,
            &round.member_id,
            candidates[idx].categories.iter().map(|c| &c.category_id),
            t,
        )?;
        logs.push(RoundLog {
            round: t,
            member_id: round.member_id,
            ranked,
            chosen,
            reward: u8::from(chosen_offer.reward),
            matched: true,
            oracle_best: Some(best.offer_id.clone()),
            oracle_best_prob: Some(best.true_prob),
            chosen_true_prob: Some(chosen_offer.true_prob),
        });
    }
    let metrics = compute_metrics(&logs)?;
    Ok(RunOutcome {
        logs,
        metrics,
        trajectories,
        skips: Default::default(),
        policy,
        scaler,
    })
}
