use super::{sigmoid, LearnerError};
use crate::CategoryId;
use std::collections::BTreeMap;

/// Category probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logits.
pub const PROB_CLAMP: f64 = 1e-6;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Offer-level clip probability from its category-level predictions.
///
/// The offer logit is the share-weighted mean of category logits plus
/// `beta_mf · mf_score`. Shares are renormalised over the offer's categories;
/// categories missing from `purchase_shares` count as zero, and an all-zero
/// share vector falls back to uniform weights.
pub fn aggregate_offer(
    category_probs: &BTreeMap<CategoryId, f64>,
    purchase_shares: &BTreeMap<CategoryId, f64>,
    mf_score: f64,
    beta_mf: f64,
) -> Result<f64, LearnerError> {
    if category_probs.is_empty() {
        return Err(LearnerError::EmptyOffer);
    }
    let bias = beta_mf * mf_score;
    if category_probs.len() == 1 && bias == 0.0 {
        let p = *category_probs.values().next().unwrap();
        return Ok(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP));
    }
    let raw: Vec<f64> = category_probs
        .keys()
        .map(|c| purchase_shares.get(c).copied().unwrap_or(0.0).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    let uniform = 1.0 / category_probs.len() as f64;
    let z: f64 = category_probs
        .values()
        .zip(&raw)
        .map(|(p, s)| {
            let w = if total > 0.0 { s / total } else { uniform };
            w * logit(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        })
        .sum::<f64>()
        + bias;
    Ok(sigmoid(z))
}
