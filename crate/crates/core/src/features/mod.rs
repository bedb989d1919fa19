//! Engineered context features and their normalisation.
//!
//! Every context vector has the same frozen layout, [`FEATURE_NAMES`], tagged
//! with [`FEATURE_ORDER_VERSION`] in every file that stores weights so that
//! trajectories from different runs line up.

mod context;
mod formulas;
mod scaler;
mod stats;

pub use context::build_context;
pub use formulas::{
    brand_loyalty, compute_brand_loyalty, compute_mpg, compute_seasonality, smoothed_profile,
    week_of_year, WEEKS,
};
pub use scaler::{RunningScaler, Welford};
pub use stats::{MemberCategoryStats, PurchaseHistory, SeasonalityProfile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_FEATURES: usize = 9;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "bias",
    "mpg",
    "brand_loyalty",
    "seasonality",
    "recency",
    "duration",
    "value",
    "num_items",
    "mf_score",
];

pub const FEATURE_ORDER_VERSION: &str = "camb-features-v1";

pub mod idx {
    pub const BIAS: usize = 0;
    pub const MPG: usize = 1;
    pub const BRAND_LOYALTY: usize = 2;
    pub const SEASONALITY: usize = 3;
    pub const RECENCY: usize = 4;
    pub const DURATION: usize = 5;
    pub const VALUE: usize = 6;
    pub const NUM_ITEMS: usize = 7;
    pub const MF_SCORE: usize = 8;
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("purchase cycle length must be positive, got {0}")]
    NonPositiveCycle(f64),
    #[error("event date {event} precedes last purchase {last}")]
    EventBeforeLastPurchase {
        event: chrono::NaiveDate,
        last: chrono::NaiveDate,
    },
    #[error("feature {name} is not finite ({value})")]
    NonFinite { name: &'static str, value: f64 },
}

/// Defaults used when a member has no usable history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// MPG reported for a (member, category) pair with no prior purchase.
    pub cold_start_mpg: f64,
    /// Purchase cycle used when neither the pair nor its category has an observed gap.
    pub default_cycle_days: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            cold_start_mpg: 1.0,
            default_cycle_days: 30.0,
        }
    }
}

/// A context vector in the frozen [`FEATURE_NAMES`] order. Element 0 is the bias and is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextVector {
    pub values: [f64; NUM_FEATURES],
}

impl ContextVector {
    /// Builds a vector from the eight non-bias features.
    pub fn from_features(features: [f64; NUM_FEATURES - 1]) -> Result<Self, FeatureError> {
        let mut values = [1.0; NUM_FEATURES];
        values[1..].copy_from_slice(&features);
        let v = Self { values };
        v.check_finite()?;
        Ok(v)
    }

    pub fn check_finite(&self) -> Result<(), FeatureError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(FeatureError::NonFinite {
                name: FEATURE_NAMES[i],
                value: self.values[i],
            }),
            None => Ok(()),
        }
    }

    pub fn feature_names(&self) -> &'static [&'static str; NUM_FEATURES] {
        &FEATURE_NAMES
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), NUM_FEATURES);
        self.values.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}
