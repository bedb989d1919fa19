use super::formulas::{week_of_year, WEEKS};
use super::FeatureConfig;
use crate::data::Transaction;
use crate::{BrandId, CategoryId, MemberId};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Purchase history summary for one (member, category) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberCategoryStats {
    pub last_purchase_date: Option<NaiveDate>,
    /// Replenishment cycle in days; always positive.
    pub cycle_length: f64,
    pub brand_counts: BTreeMap<BrandId, u64>,
}

/// Weekly transaction counts per category.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeasonalityProfile {
    pub weekly_counts: BTreeMap<CategoryId, [f64; WEEKS]>,
}

impl SeasonalityProfile {
    pub fn from_transactions<'a, I: IntoIterator<Item = &'a Transaction>>(txs: I) -> Self {
        let mut p = Self::default();
        for t in txs {
            p.weekly_counts
                .entry(t.category_id.clone())
                .or_insert([0.0; WEEKS])[week_of_year(t.event_date)] += 1.0;
        }
        p
    }
}

#[derive(Debug, Clone, Default)]
struct PairHistory {
    last: Option<NaiveDate>,
    // Gaps in whole days between consecutive distinct purchase dates, kept sorted.
    gaps: Vec<f64>,
    brand_counts: BTreeMap<BrandId, u64>,
}

fn insert_sorted(v: &mut Vec<f64>, x: f64) {
    let at = v.partition_point(|y| *y <= x);
    v.insert(at, x);
}

/// Incrementally accumulated purchase history.
///
/// Transactions must be observed in non-decreasing date order; feature
/// queries then reflect everything observed so far, which lets the replay
/// loop consume the log up to each impression without look-ahead.
#[derive(Debug, Clone, Default)]
pub struct PurchaseHistory {
    pairs: BTreeMap<(MemberId, CategoryId), PairHistory>,
    category_gaps: BTreeMap<CategoryId, Vec<f64>>,
    member_category_counts: BTreeMap<MemberId, BTreeMap<CategoryId, u64>>,
}

impl PurchaseHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_transactions<'a, I: IntoIterator<Item = &'a Transaction>>(txs: I) -> Self {
        let mut h = Self::new();
        for t in txs {
            h.observe(t);
        }
        h
    }

    pub fn observe(&mut self, t: &Transaction) {
        let pair = self
            .pairs
            .entry((t.member_id.clone(), t.category_id.clone()))
            .or_default();
        match pair.last {
            Some(last) if t.event_date > last => {
                let gap = (t.event_date - last).num_days() as f64;
                insert_sorted(&mut pair.gaps, gap);
                insert_sorted(self.category_gaps.entry(t.category_id.clone()).or_default(), gap);
                pair.last = Some(t.event_date);
            }
            Some(_) => {}
            None => pair.last = Some(t.event_date),
        }
        *pair.brand_counts.entry(t.brand_id.clone()).or_insert(0) += 1;
        *self
            .member_category_counts
            .entry(t.member_id.clone())
            .or_default()
            .entry(t.category_id.clone())
            .or_insert(0) += 1;
    }

    fn sorted_median(v: &[f64]) -> Option<f64> {
        let n = v.len();
        match n {
            0 => None,
            _ if n % 2 == 1 => Some(v[n / 2]),
            _ => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
        }
    }

    /// Cycle length: the pair's median gap, falling back to the category's median gap.
    ///
    /// With no gaps at all the configured default applies.
    pub fn cycle_length(&self, member: &MemberId, category: &CategoryId, cfg: &FeatureConfig) -> f64 {
        let key = (member.clone(), category.clone());
        self.pairs
            .get(&key)
            .and_then(|p| Self::sorted_median(&p.gaps))
            .or_else(|| self.category_gaps.get(category).and_then(|g| Self::sorted_median(g)))
            .filter(|c| *c > 0.0)
            .unwrap_or(cfg.default_cycle_days)
    }

    pub fn stats(&self, member: &MemberId, category: &CategoryId, cfg: &FeatureConfig) -> MemberCategoryStats {
        let pair = self.pairs.get(&(member.clone(), category.clone()));
        MemberCategoryStats {
            last_purchase_date: pair.and_then(|p| p.last),
            cycle_length: self.cycle_length(member, category, cfg),
            brand_counts: pair.map(|p| p.brand_counts.clone()).unwrap_or_default(),
        }
    }

    /// The member's purchase share of each of `categories`, renormalised over them.
    ///
    /// Falls back to uniform shares when the member has bought none of them.
    pub fn purchase_shares<'a, I>(&self, member: &MemberId, categories: I) -> BTreeMap<CategoryId, f64>
    where
        I: IntoIterator<Item = &'a CategoryId>,
    {
        let counts = self.member_category_counts.get(member);
        let raw: BTreeMap<CategoryId, f64> = categories
            .into_iter()
            .map(|c| {
                let n = counts.and_then(|m| m.get(c)).copied().unwrap_or(0);
                (c.clone(), n as f64)
            })
            .collect();
        let total: f64 = raw.values().sum();
        if total > 0.0 {
            raw.into_iter().map(|(c, n)| (c, n / total)).collect()
        } else {
            let u = 1.0 / raw.len().max(1) as f64;
            raw.into_keys().map(|c| (c, u)).collect()
        }
    }

    /// Member × category purchase counts, for matrix factorisation.
    pub fn member_category_counts(&self) -> &BTreeMap<MemberId, BTreeMap<CategoryId, u64>> {
        &self.member_category_counts
    }
}
