use super::{DataError, Impression, MfScoreTable, Offer, OfferCatalog, Transaction};
use crate::util::write_jsonl;
use crate::{BrandId, CategoryId, MemberId, OfferId};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const TRANSACTION_HEADER: &str = "member_id,category_id,brand_id,event_date,quantity";
const MF_HEADER: &str = "member_id,offer_id,score";

/// A rejected record: its zero-based index among the data records of a file and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub record_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: String,
    pub accepted: usize,
    pub issues: Vec<ValidationIssue>,
}

impl IngestReport {
    fn new(path: &Path) -> Self {
        Self {
            source: path.display().to_string(),
            ..Self::default()
        }
    }

    pub fn skipped(&self) -> usize {
        self.issues.len()
    }

    fn reject(&mut self, record_index: usize, reason: impl Into<String>) {
        self.issues.push(ValidationIssue {
            record_index,
            reason: reason.into(),
        });
    }
}

/// Records that passed validation plus the tally of those that did not.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub report: IngestReport,
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_reader(path: &Path, expected: &'static str) -> Result<csv::Reader<File>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers().map_err(|source| DataError::Csv {
        path: path.to_owned(),
        source,
    })?;
    let found = headers.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(DataError::BadHeader {
            path: path.to_owned(),
            expected,
            found,
        });
    }
    Ok(rdr)
}

fn parse_transaction(rec: &csv::StringRecord) -> Result<Transaction, String> {
    if rec.len() != 5 {
        return Err(format!("expected 5 fields, found {}", rec.len()));
    }
    let non_empty = |i: usize, name: &str| -> Result<String, String> {
        let v = &rec[i];
        if v.is_empty() {
            Err(format!("{name} is empty"))
        } else {
            Ok(v.to_owned())
        }
    };
    let event_date = NaiveDate::parse_from_str(&rec[3], "%Y-%m-%d")
        .map_err(|e| format!("event_date `{}`: {e}", &rec[3]))?;
    let quantity: u32 = rec[4]
        .parse()
        .map_err(|_| format!("quantity `{}` is not a positive integer", &rec[4]))?;
    if quantity == 0 {
        return Err("quantity must be >= 1".into());
    }
    Ok(Transaction {
        member_id: MemberId(non_empty(0, "member_id")?),
        category_id: CategoryId(non_empty(1, "category_id")?),
        brand_id: BrandId(non_empty(2, "brand_id")?),
        event_date,
        quantity,
    })
}

/// Reads the transaction log, skipping and tallying malformed rows.
///
/// Rows come back sorted by `event_date`; equal dates keep file order.
pub fn ingest_transactions(path: &Path) -> Result<Ingested<Transaction>, DataError> {
    let mut rdr = csv_reader(path, TRANSACTION_HEADER)?;
    let mut report = IngestReport::new(path);
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        match rec {
            Ok(rec) => match parse_transaction(&rec) {
                Ok(t) => records.push(t),
                Err(reason) => report.reject(i, reason),
            },
            Err(e) => report.reject(i, e.to_string()),
        }
    }
    if records.is_empty() {
        return Err(DataError::NoValidRows {
            path: path.to_owned(),
            skipped: report.skipped(),
        });
    }
    records.sort_by_key(|t| t.event_date);
    report.accepted = records.len();
    Ok(Ingested { records, report })
}

pub fn write_transactions(path: &Path, records: &[Transaction]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{TRANSACTION_HEADER}")?;
    for t in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.member_id,
            t.category_id,
            t.brand_id,
            t.event_date.format("%Y-%m-%d"),
            t.quantity
        )?;
    }
    out.flush()
}

fn read_jsonl<T, F>(path: &Path, mut validate: F) -> Result<Ingested<T>, DataError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(&T) -> Result<(), String>,
{
    let reader = BufReader::new(open(path)?);
    let mut report = IngestReport::new(path);
    let mut records = Vec::new();
    let mut index = 0;
    for line in reader.lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(r) => match validate(&r) {
                Ok(()) => records.push(r),
                Err(reason) => report.reject(index, reason),
            },
            Err(e) => report.reject(index, e.to_string()),
        }
        index += 1;
    }
    report.accepted = records.len();
    Ok(Ingested { records, report })
}

/// Reads the offer catalog (JSONL, one offer per line).
pub fn ingest_offers(path: &Path) -> Result<Ingested<Offer>, DataError> {
    read_jsonl(path, Offer::validate)
}

/// Reads logged impressions (JSONL) and returns them sorted by timestamp.
pub fn ingest_impressions(path: &Path) -> Result<Ingested<Impression>, DataError> {
    let mut ingested = read_jsonl(path, Impression::validate)?;
    ingested.records.sort_by_key(|i| i.timestamp);
    Ok(ingested)
}

pub fn write_offers(path: &Path, offers: &[Offer]) -> std::io::Result<()> {
    write_jsonl(path, None, offers)
}

pub fn write_impressions(path: &Path, impressions: &[Impression]) -> std::io::Result<()> {
    write_jsonl(path, None, impressions)
}

/// Reads `member_id,offer_id,score`; pairs absent from the file resolve to `default_score`.
pub fn ingest_mf_scores(path: &Path, default_score: f64) -> Result<Ingested<MfScoreTable>, DataError> {
    let mut rdr = csv_reader(path, MF_HEADER)?;
    let mut report = IngestReport::new(path);
    let mut table = MfScoreTable::new(default_score);
    for (i, rec) in rdr.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.reject(i, e.to_string());
                continue;
            }
        };
        if rec.len() != 3 || rec[0].is_empty() || rec[1].is_empty() {
            report.reject(i, "expected non-empty member_id, offer_id and a score");
            continue;
        }
        match rec[2].parse::<f64>() {
            Ok(s) if s.is_finite() => {
                table.insert(MemberId::from(&rec[0]), OfferId::from(&rec[1]), s);
                report.accepted += 1;
            }
            _ => report.reject(i, format!("score `{}` is not a finite number", &rec[2])),
        }
    }
    Ok(Ingested {
        records: vec![table],
        report,
    })
}

pub fn write_mf_scores(path: &Path, table: &MfScoreTable) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{MF_HEADER}")?;
    for ((m, o), s) in &table.entries {
        writeln!(out, "{m},{o},{s}")?;
    }
    out.flush()
}

/// Join check: every offer referenced by an impression must exist in the catalog.
pub fn validate_catalog(impressions: &[Impression], catalog: &OfferCatalog) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    for (i, imp) in impressions.iter().enumerate() {
        for o in imp.offers_shown.iter().filter(|o| !catalog.contains_key(*o)) {
            issues.push(ValidationIssue {
                record_index: i,
                reason: format!("orphan offer {o} not in catalog"),
            });
        }
    }
    issues
}

/// Writes a validation report as JSONL of `{record_index, reason}`.
pub fn write_validation_report(path: &Path, issues: &[ValidationIssue]) -> std::io::Result<()> {
    write_jsonl(path, None, issues)
}
