//! Category-level contextual bandit engine for retail offer selection.
//!
//! The crate is organised the way a run flows:
//!
//! - [`data`]: transactions, offers, impressions and MF scores, plus ingestion.
//! - [`features`]: engineered context features and online z-scoring.
//! - [`learner`]: per-(member, category) online logistic models and offer-level aggregation.
//! - [`exploration`]: Beta-sampled randomized scoring.
//! - [`policy`]: the CAMB policy and the comparison baselines behind one trait.
//! - [`harness`]: replay of logged impressions and synthetic ground-truth simulation.
//! - [`interpret`]: weight trajectories, change detection and member personas.
//! - [`mf`]: a small alternating-least-squares utility producing MF scores.
//! - [`config`] and [`report`]: run configuration and cross-run aggregation.

pub mod config;
pub mod data;
pub mod exploration;
pub mod features;
pub mod harness;
pub mod interpret;
pub mod learner;
pub mod mf;
pub mod policy;
pub mod report;

mod ids;
mod util;

pub use ids::{BrandId, CategoryId, MemberId, OfferId};
