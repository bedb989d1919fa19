//! Retail event types and their on-disk formats.
//!
//! Flat tables (transactions, MF scores) are CSV; nested records (offers,
//! impressions) are JSONL. The log schema is this crate's own: field names
//! and headers are fixed by the ingest functions in [`ingest`].

mod ingest;

pub use ingest::{
    ingest_impressions, ingest_mf_scores, ingest_offers, ingest_transactions, validate_catalog,
    write_impressions, write_mf_scores, write_offers, write_transactions, write_validation_report,
    Ingested, IngestReport, ValidationIssue,
};

use crate::{BrandId, CategoryId, MemberId, OfferId};
use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    BadHeader {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path}: no valid records ({skipped} skipped)")]
    NoValidRows { path: PathBuf, skipped: usize },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// One purchase line from the transaction log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub member_id: MemberId,
    pub category_id: CategoryId,
    pub brand_id: BrandId,
    pub event_date: NaiveDate,
    pub quantity: u32,
}

/// A coupon that may cover several categories and brands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub offer_id: OfferId,
    pub category_ids: BTreeSet<CategoryId>,
    #[serde(default)]
    pub brand_ids: BTreeSet<BrandId>,
    pub discount_value: f64,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub num_items: u32,
}

impl Offer {
    pub fn is_active_on(&self, date: NaiveDate) -> bool {
        self.start_date <= date && date <= self.end_date
    }

    /// Whole days between start and end date.
    pub fn duration_days(&self) -> i64 {
        (self.end_date - self.start_date).num_days()
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.category_ids.is_empty() {
            return Err("category_ids is empty".into());
        }
        if self.start_date > self.end_date {
            return Err(format!(
                "start_date {} is after end_date {}",
                self.start_date, self.end_date
            ));
        }
        if !(self.discount_value.is_finite() && self.discount_value >= 0.0) {
            return Err(format!("discount_value {} is not a non-negative number", self.discount_value));
        }
        if self.num_items == 0 {
            return Err("num_items must be positive".into());
        }
        Ok(())
    }
}

/// One gallery view: the offers a member was shown and which of them were clipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Impression {
    pub timestamp: NaiveDateTime,
    pub member_id: MemberId,
    pub offers_shown: Vec<OfferId>,
    #[serde(default)]
    pub clipped: Vec<OfferId>,
}

impl Impression {
    pub fn was_clipped(&self, offer: &OfferId) -> bool {
        self.clipped.contains(offer)
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.offers_shown.is_empty() {
            return Err("offers_shown is empty".into());
        }
        if let Some(c) = self.clipped.iter().find(|c| !self.offers_shown.contains(c)) {
            return Err(format!("clipped offer {c} not in offers_shown"));
        }
        Ok(())
    }
}

/// Precomputed collaborative-filtering affinities keyed by (member, offer).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MfScoreTable {
    pub entries: BTreeMap<(MemberId, OfferId), f64>,
    pub default_score: f64,
}

impl MfScoreTable {
    pub fn new(default_score: f64) -> Self {
        Self {
            entries: BTreeMap::new(),
            default_score,
        }
    }

    pub fn insert(&mut self, member: MemberId, offer: OfferId, score: f64) {
        self.entries.insert((member, offer), score);
    }

    pub fn score(&self, member: &MemberId, offer: &OfferId) -> f64 {
        // BTreeMap<(A, B), _> cannot be queried by borrowed tuple parts, so clone the key.
        self.entries
            .get(&(member.clone(), offer.clone()))
            .copied()
            .unwrap_or(self.default_score)
    }
}

/// Offer catalog indexed by id.
pub type OfferCatalog = BTreeMap<OfferId, Offer>;

pub fn catalog(offers: &[Offer]) -> OfferCatalog {
    offers.iter().map(|o| (o.offer_id.clone(), o.clone())).collect()
}
