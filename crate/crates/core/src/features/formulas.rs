use super::{FeatureError, MemberCategoryStats, SeasonalityProfile};
use crate::{BrandId, CategoryId};
use chrono::{Datelike, NaiveDate};

pub const WEEKS: usize = 52;

/// Zero-based week of the year; days 358..=365 fold into the last week.
pub fn week_of_year(date: NaiveDate) -> usize {
    (date.ordinal0() as usize / 7).min(WEEKS - 1)
}

/// Member purchase gap: days since the last purchase in the category over the member's cycle length.
///
/// A pair with no purchase yet gets `cold_start_mpg`.
pub fn compute_mpg(
    event_date: NaiveDate,
    stats: &MemberCategoryStats,
    cold_start_mpg: f64,
) -> Result<f64, FeatureError> {
    if !(stats.cycle_length > 0.0) {
        return Err(FeatureError::NonPositiveCycle(stats.cycle_length));
    }
    match stats.last_purchase_date {
        None => Ok(cold_start_mpg),
        Some(last) if event_date < last => Err(FeatureError::EventBeforeLastPurchase {
            event: event_date,
            last,
        }),
        Some(last) => Ok((event_date - last).num_days() as f64 / stats.cycle_length),
    }
}

/// Share of the member's purchases in the category that went to `brand`.
pub fn brand_loyalty(brand: &BrandId, stats: &MemberCategoryStats) -> f64 {
    let total: u64 = stats.brand_counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    stats.brand_counts.get(brand).copied().unwrap_or(0) as f64 / total as f64
}

/// Loyalty toward an offer: the best loyalty among the offer's brands, 0 when it lists none.
pub fn compute_brand_loyalty<'a, I>(brands: I, stats: &MemberCategoryStats) -> f64
where
    I: IntoIterator<Item = &'a BrandId>,
{
    brands
        .into_iter()
        .map(|b| brand_loyalty(b, stats))
        .fold(0.0, f64::max)
}

/// Circular 3-week moving average of the category's weekly purchase counts.
pub fn smoothed_profile(counts: &[f64; WEEKS]) -> [f64; WEEKS] {
    let mut out = [0.0; WEEKS];
    for (w, o) in out.iter_mut().enumerate() {
        let prev = counts[(w + WEEKS - 1) % WEEKS];
        let next = counts[(w + 1) % WEEKS];
        *o = (prev + counts[w] + next) / 3.0;
    }
    out
}

/// Smoothed weekly frequency at `date` relative to the category's peak week.
pub fn compute_seasonality(category: &CategoryId, date: NaiveDate, profile: &SeasonalityProfile) -> f64 {
    let Some(counts) = profile.weekly_counts.get(category) else {
        return 0.0;
    };
    let smoothed = smoothed_profile(counts);
    let peak = smoothed.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return 0.0;
    }
    (smoothed[week_of_year(date)] / peak).clamp(0.0, 1.0)
}
