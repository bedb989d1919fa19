use super::HarnessError;
use crate::data::{Impression, Offer, Transaction};
use crate::learner::sigmoid;
use crate::{BrandId, CategoryId, MemberId, OfferId};
use chrono::{Days, NaiveDate, NaiveTime};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Settings for the synthetic retail log generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub members: usize,
    pub categories: usize,
    pub brands_per_category: usize,
    pub offers: usize,
    pub days: u32,
    pub start_date: NaiveDate,
    pub impressions_per_day: usize,
    pub offers_per_impression: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            members: 40,
            categories: 6,
            brands_per_category: 3,
            offers: 30,
            days: 120,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            impressions_per_day: 10,
            offers_per_impression: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetailLogs {
    pub transactions: Vec<Transaction>,
    pub offers: Vec<Offer>,
    pub impressions: Vec<Impression>,
}

struct Habit {
    cycle: f64,
    favorite: usize,
    loyalty: f64,
    /// Purchase days, ascending.
    purchases: Vec<u32>,
}

/// Generates a coherent transaction log, offer catalog and impression log.
///
/// Members buy each of their categories on a jittered personal cycle, mostly
/// from a favourite brand. Clip odds rise when the member is due to restock
/// the offer's category and when the offer carries the favourite brand, so
/// replayed policies have real signal to find. Output is sorted the way the
/// ingesters sort, so writing and re-reading it is lossless.
pub fn generate_retail_logs(cfg: &GeneratorConfig, seed: u64) -> Result<RetailLogs, HarnessError> {
    if cfg.members == 0 || cfg.categories == 0 || cfg.brands_per_category == 0 || cfg.offers == 0 {
        return Err(HarnessError::World("generator counts must be positive".into()));
    }
    if cfg.days < 8 || cfg.offers_per_impression == 0 {
        return Err(HarnessError::World("need at least 8 days and one offer per impression".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let date = |d: u32| cfg.start_date + Days::new(u64::from(d));
    let category = |c: usize| CategoryId::from(format!("cat{c:02}"));
    let brand = |c: usize, b: usize| BrandId::from(format!("cat{c:02}-b{b}"));
    let member = |m: usize| MemberId::from(format!("mem{m:04}"));

    let mut habits: BTreeMap<(usize, usize), Habit> = BTreeMap::new();
    let mut transactions = Vec::new();
    for m in 0..cfg.members {
        for c in 0..cfg.categories {
            if !rng.random_bool(0.7) {
                continue;
            }
            let mut h = Habit {
                cycle: rng.random_range(5.0..35.0),
                favorite: rng.random_range(0..cfg.brands_per_category),
                loyalty: rng.random_range(0.5..0.95),
                purchases: Vec::new(),
            };
            let mut day = rng.random_range(0.0..h.cycle) as u32;
            while day < cfg.days {
                let b = if rng.random_bool(h.loyalty) {
                    h.favorite
                } else {
                    rng.random_range(0..cfg.brands_per_category)
                };
                transactions.push(Transaction {
                    member_id: member(m),
                    category_id: category(c),
                    brand_id: brand(c, b),
                    event_date: date(day),
                    quantity: rng.random_range(1..=3),
                });
                h.purchases.push(day);
                day += ((h.cycle * rng.random_range(0.7..1.3)).round() as u32).max(1);
            }
            habits.insert((m, c), h);
        }
    }
    transactions.sort_by(|a, b| {
        (a.event_date, &a.member_id, &a.category_id, &a.brand_id).cmp(&(b.event_date, &b.member_id, &b.category_id, &b.brand_id))
    });

    // (offer, [(category index, brand index)])
    let mut offers = Vec::with_capacity(cfg.offers);
    let mut offer_brands: Vec<Vec<(usize, usize)>> = Vec::with_capacity(cfg.offers);
    for i in 0..cfg.offers {
        let n_cat = if cfg.categories > 1 && rng.random_bool(0.25) { 2 } else { 1 };
        let mut cats = rand::seq::index::sample(&mut rng, cfg.categories, n_cat).into_vec();
        cats.sort_unstable();
        let brands: Vec<(usize, usize)> = cats
            .iter()
            .map(|&c| (c, rng.random_range(0..cfg.brands_per_category)))
            .collect();
        let start = rng.random_range(0..cfg.days - 7);
        let end = (start + rng.random_range(7..=28)).min(cfg.days - 1);
        offers.push(Offer {
            offer_id: OfferId::from(format!("off{i:03}")),
            category_ids: cats.iter().map(|&c| category(c)).collect(),
            brand_ids: brands.iter().map(|&(c, b)| brand(c, b)).collect(),
            discount_value: (rng.random_range(0.5..5.0f64) * 100.0).round() / 100.0,
            start_date: date(start),
            end_date: date(end),
            num_items: rng.random_range(1..=3),
        });
        offer_brands.push(brands);
    }

    let mut impressions = Vec::new();
    let opening = NaiveTime::from_hms_opt(8, 0, 0).expect("valid time");
    for d in 1..cfg.days {
        let active: Vec<usize> = (0..offers.len()).filter(|&i| offers[i].is_active_on(date(d))).collect();
        if active.is_empty() {
            continue;
        }
        for k in 0..cfg.impressions_per_day {
            let m = rng.random_range(0..cfg.members);
            let mut shown: Vec<usize> = active
                .choose_multiple(&mut rng, cfg.offers_per_impression.min(active.len()))
                .copied()
                .collect();
            shown.shuffle(&mut rng);
            let mut clipped = Vec::new();
            for &i in &shown {
                let mut logit = -2.0 + 0.2 * offers[i].discount_value;
                for &(c, b) in &offer_brands[i] {
                    if let Some(h) = habits.get(&(m, c)) {
                        let last = h.purchases.partition_point(|&p| p < d);
                        if last > 0 && f64::from(d - h.purchases[last - 1]) / h.cycle > 0.8 {
                            logit += 1.2;
                        }
                        if b == h.favorite {
                            logit += 1.0;
                        }
                    }
                }
                if rng.random_bool(sigmoid(logit)) {
                    clipped.push(offers[i].offer_id.clone());
                }
            }
            impressions.push(Impression {
                timestamp: date(d).and_time(opening) + chrono::Duration::minutes(k as i64),
                member_id: member(m),
                offers_shown: shown.iter().map(|&i| offers[i].offer_id.clone()).collect(),
                clipped,
            });
        }
    }
    Ok(RetailLogs {
        transactions,
        offers,
        impressions,
    })
}
