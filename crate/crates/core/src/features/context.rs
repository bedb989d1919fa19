use super::formulas::{compute_brand_loyalty, compute_mpg, compute_seasonality};
use super::{ContextVector, FeatureConfig, FeatureError, MemberCategoryStats, SeasonalityProfile};
use crate::data::{MfScoreTable, Offer};
use crate::{CategoryId, MemberId};
use chrono::NaiveDate;

/// Assembles the raw (unnormalised) context for one (member, offer, category) on `date`.
///
/// Recency is the elapsed fraction of the offer's run, clamped to `[0, 1]`;
/// a single-day offer counts as fully elapsed. The caller guarantees the
/// offer is active on `date`.
#[allow(clippy::too_many_arguments)]
pub fn build_context(
    member: &MemberId,
    offer: &Offer,
    category: &CategoryId,
    date: NaiveDate,
    stats: &MemberCategoryStats,
    profile: &SeasonalityProfile,
    mf_table: &MfScoreTable,
    cfg: &FeatureConfig,
) -> Result<ContextVector, FeatureError> {
    let duration = offer.duration_days();
    let recency = if duration > 0 {
        ((date - offer.start_date).num_days() as f64 / duration as f64).clamp(0.0, 1.0)
    } else {
        1.0
    };
    ContextVector::from_features([
        compute_mpg(date, stats, cfg.cold_start_mpg)?,
        compute_brand_loyalty(&offer.brand_ids, stats),
        compute_seasonality(category, date, profile),
        recency,
        duration as f64,
        offer.discount_value,
        offer.num_items as f64,
        mf_table.score(member, &offer.offer_id),
    ])
}
