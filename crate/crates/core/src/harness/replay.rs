use super::{compute_metrics, snapshot_updated, HarnessError, MetricsSummary, RoundLog, RunOutcome, SkipTally};
use crate::data::{Impression, MfScoreTable, Offer, OfferCatalog, Transaction};
use crate::features::{build_context, FeatureConfig, FeatureError, PurchaseHistory, RunningScaler, SeasonalityProfile};
use crate::interpret::TrajectoryStore;
use crate::learner::LabeledExample;
use crate::policy::{CategoryContext, OfferCandidate, Policy, PolicyRng, Round};
use crate::{MemberId, OfferId};
use chrono::NaiveDate;
use rand::SeedableRng;
use std::collections::{BTreeMap, BTreeSet};

/// Validated inputs for a replay. Transactions and impressions are time-sorted.
#[derive(Debug, Clone, Default)]
pub struct ReplayData {
    pub transactions: Vec<Transaction>,
    pub catalog: OfferCatalog,
    pub impressions: Vec<Impression>,
    pub mf: MfScoreTable,
}

pub const SKIP_NO_ACTIVE_OFFERS: &str = "no_active_offers";
pub const SKIP_UNKNOWN_SHOWN_OFFER: &str = "shown_offer_not_in_catalog";

/// Builds scaled offer candidates from purchase history without look-ahead.
///
/// Purchase statistics only include transactions dated strictly before the
/// day being featurized. The seasonality profile is built once from the whole
/// transaction log.
pub struct Featurizer<'a> {
    transactions: &'a [Transaction],
    cursor: usize,
    history: PurchaseHistory,
    profile: SeasonalityProfile,
    pub scaler: RunningScaler,
    cfg: FeatureConfig,
}

impl<'a> Featurizer<'a> {
    pub fn new(transactions: &'a [Transaction], scaler: RunningScaler, cfg: FeatureConfig) -> Self {
        Self {
            transactions,
            cursor: 0,
            history: PurchaseHistory::new(),
            profile: SeasonalityProfile::from_transactions(transactions),
            scaler,
            cfg,
        }
    }

    pub fn advance_to(&mut self, date: NaiveDate) {
        while let Some(t) = self.transactions.get(self.cursor) {
            if t.event_date >= date {
                break;
            }
            self.history.observe(t);
            self.cursor += 1;
        }
    }

    /// Featurizes every category of `offer`, feeding each raw vector to the scaler first.
    pub fn candidate(
        &mut self,
        member: &MemberId,
        offer: &Offer,
        date: NaiveDate,
        mf: &MfScoreTable,
    ) -> Result<OfferCandidate, FeatureError> {
        let mut cats = Vec::with_capacity(offer.category_ids.len());
        for c in &offer.category_ids {
            let stats = self.history.stats(member, c, &self.cfg);
            let raw = build_context(member, offer, c, date, &stats, &self.profile, mf, &self.cfg)?;
            self.scaler.update(&raw);
            cats.push(CategoryContext {
                category_id: c.clone(),
                x: self.scaler.transform(&raw),
            });
        }
        let shares = self.history.purchase_shares(member, &offer.category_ids);
        Ok(OfferCandidate::new(
            offer.offer_id.clone(),
            cats,
            shares,
            mf.score(member, &offer.offer_id),
        ))
    }
}

fn tally(skips: &mut SkipTally, reason: &str) {
    *skips.entry(reason.to_string()).or_default() += 1;
}

/// Distinct shown offers that exist in the catalog, in id order.
fn shown_in_catalog<'c>(imp: &Impression, catalog: &'c OfferCatalog, skips: &mut SkipTally) -> Vec<&'c Offer> {
    let shown: BTreeSet<&OfferId> = imp.offers_shown.iter().collect();
    shown
        .into_iter()
        .filter_map(|id| {
            let o = catalog.get(id);
            if o.is_none() {
                tally(skips, SKIP_UNKNOWN_SHOWN_OFFER);
            }
            o
        })
        .collect()
}

/// Category-level training examples from logged impressions: every shown
/// offer yields one example per category, labeled by whether it was clipped.
pub fn backfit_examples(
    data: &ReplayData,
    featurizer: &mut Featurizer<'_>,
) -> Result<(Vec<LabeledExample>, SkipTally), FeatureError> {
    let mut skips = SkipTally::new();
    let mut out = Vec::new();
    for imp in &data.impressions {
        let date = imp.timestamp.date();
        featurizer.advance_to(date);
        for offer in shown_in_catalog(imp, &data.catalog, &mut skips) {
            let cand = featurizer.candidate(&imp.member_id, offer, date, &data.mf)?;
            let y = imp.was_clipped(&offer.offer_id);
            out.extend(cand.categories.into_iter().map(|c| LabeledExample {
                timestamp: imp.timestamp,
                member_id: imp.member_id.clone(),
                category_id: c.category_id,
                x: c.x,
                y,
            }));
        }
    }
    Ok((out, skips))
}

/// Replays logged impressions in time order.
///
/// Each round the policy ranks every catalog offer active on the impression
/// date. The round counts toward reward only when the top choice was among
/// the offers actually shown, and its reward is whether that offer was
/// clipped. This top-1 match estimator is biased toward the logging policy.
/// Every shown offer then updates the policy, clipped ones with y=1 and the
/// rest with y=0, regardless of the match.
pub fn run_replay(
    data: &ReplayData,
    mut policy: Box<dyn Policy>,
    mut featurizer: Featurizer<'_>,
    seed: u64,
    snapshot_every: u64,
) -> Result<RunOutcome, HarnessError> {
    let mut rng = PolicyRng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut trajectories = TrajectoryStore::new(snapshot_every);
    let mut skips = SkipTally::new();
    let mut logs = Vec::new();
    let mut t = 0u64;
    for imp in &data.impressions {
        let date = imp.timestamp.date();
        let active: Vec<&Offer> = data.catalog.values().filter(|o| o.is_active_on(date)).collect();
        if active.is_empty() {
            tally(&mut skips, SKIP_NO_ACTIVE_OFFERS);
            continue;
        }
        t += 1;
        let feature_err = |source| HarnessError::Feature { round: t, source };
        let policy_err = |source| HarnessError::Policy { round: t, source };
        featurizer.advance_to(date);

        let shown = shown_in_catalog(imp, &data.catalog, &mut skips);
        let mut built: BTreeMap<OfferId, OfferCandidate> = BTreeMap::new();
        for offer in active.iter().chain(&shown) {
            if !built.contains_key(&offer.offer_id) {
                let cand = featurizer
                    .candidate(&imp.member_id, offer, date, &data.mf)
                    .map_err(feature_err)?;
                built.insert(offer.offer_id.clone(), cand);
            }
        }
        let candidates: Vec<OfferCandidate> = active.iter().map(|o| built[&o.offer_id].clone()).collect();
        let ranked = policy
            .select(
                &Round {
                    t,
                    member_id: &imp.member_id,
                    candidates: &candidates,
                },
                &mut rng,
            )
            .map_err(policy_err)?;
        let chosen = ranked[0].offer_id.clone();
        let matched = imp.offers_shown.contains(&chosen);
        let reward = matched && imp.was_clipped(&chosen);

        for offer in &shown {
            let cand = &built[&offer.offer_id];
            policy
                .update(&imp.member_id, cand, imp.was_clipped(&offer.offer_id))
                .map_err(policy_err)?;
        }
        let touched: BTreeSet<_> = shown.iter().flat_map(|o| o.category_ids.iter()).collect();
        snapshot_updated(policy.as_ref(), &mut trajectories, &imp.member_id, touched, t)?;

        logs.push(RoundLog {
            round: t,
            member_id: imp.member_id.clone(),
            ranked,
            chosen,
            reward: u8::from(reward),
            matched,
            oracle_best: None,
            oracle_best_prob: None,
            chosen_true_prob: None,
        });
    }
    let metrics = if logs.is_empty() {
        MetricsSummary::empty()
    } else {
        compute_metrics(&logs)?
    };
    Ok(RunOutcome {
        logs,
        metrics,
        trajectories,
        skips,
        policy,
        scaler: featurizer.scaler,
    })
}
