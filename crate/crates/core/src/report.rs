//! Merges metric files from several run directories into one averaged series.

use crate::harness::MetricsRow;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no run directories given")]
    NoRuns,
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path} row {row}: round {found} does not line up with round {expected}")]
    Misaligned {
        path: PathBuf,
        row: usize,
        expected: u64,
        found: u64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const HEADER: [&str; 5] = ["round", "cum_reward", "avg_reward", "regret", "optimal_rate"];

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, ReportError> {
    let err = |message: String| ReportError::Read {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.iter().ne(HEADER) {
        return Err(err(format!("expected header {}", HEADER.join(","))));
    }
    let opt = |s: &str| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("bad number {s:?}: {e}"))
        }
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let at = |e: String| err(format!("row {}: {e}", i + 1));
        rows.push(MetricsRow {
            round: rec[0].parse().map_err(|e| at(format!("{e}")))?,
            cum_reward: rec[1].parse().map_err(|e| at(format!("{e}")))?,
            avg_reward: opt(&rec[2]).map_err(at)?,
            regret: opt(&rec[3]).map_err(at)?,
            optimal_rate: opt(&rec[4]).map_err(at)?,
        });
    }
    Ok(rows)
}

/// Row-wise mean across runs, with cumulative reward averaged as a real.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedRow {
    pub round: u64,
    pub cum_reward: f64,
    pub avg_reward: Option<f64>,
    pub regret: Option<f64>,
    pub optimal_rate: Option<f64>,
}

/// Averages runs over their common prefix of rounds. A column is empty in
/// the result wherever any run leaves it empty.
pub fn merge_runs(runs: &[(PathBuf, Vec<MetricsRow>)]) -> Result<Vec<MergedRow>, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::NoRuns);
    }
    let len = runs.iter().map(|(_, r)| r.len()).min().unwrap_or(0);
    let n = runs.len() as f64;
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let round = runs[0].1[i].round;
        for (path, rows) in runs {
            if rows[i].round != round {
                return Err(ReportError::Misaligned {
                    path: path.clone(),
                    row: i + 1,
                    expected: round,
                    found: rows[i].round,
                });
            }
        }
        let mean = |f: fn(&MetricsRow) -> Option<f64>| -> Option<f64> {
            let mut total = 0.0;
            for (_, rows) in runs {
                total += f(&rows[i])?;
            }
            Some(total / n)
        };
        out.push(MergedRow {
            round,
            cum_reward: runs.iter().map(|(_, r)| r[i].cum_reward as f64).sum::<f64>() / n,
            avg_reward: mean(|r| r.avg_reward),
            regret: mean(|r| r.regret),
            optimal_rate: mean(|r| r.optimal_rate),
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct ReportSummary {
    pub runs: Vec<RunEntry>,
    /// Rounds in the merged series (the shortest run).
    pub rounds: usize,
    pub final_row: Option<MergedRow>,
}

#[derive(Debug, Serialize)]
pub struct RunEntry {
    pub dir: String,
    pub rounds: usize,
    pub summary: Option<serde_json::Value>,
}

/// Reads `metrics.csv` (and `summary.json` when present) from each run
/// directory and writes `merged_metrics.csv` and `report.json` into `out`.
pub fn write_report(run_dirs: &[PathBuf], out: &Path) -> Result<ReportSummary, ReportError> {
    let mut runs = Vec::with_capacity(run_dirs.len());
    let mut entries = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        let rows = read_metrics_csv(&dir.join("metrics.csv"))?;
        let summary = match std::fs::read_to_string(dir.join("summary.json")) {
            Ok(text) => Some(serde_json::from_str(&text).map_err(|e| ReportError::Read {
                path: dir.join("summary.json"),
                message: e.to_string(),
            })?),
            Err(_) => None,
        };
        entries.push(RunEntry {
            dir: dir.display().to_string(),
            rounds: rows.len(),
            summary,
        });
        runs.push((dir.clone(), rows));
    }
    let merged = merge_runs(&runs)?;
    std::fs::create_dir_all(out)?;
    write_merged_csv(&out.join("merged_metrics.csv"), &merged)?;
    let summary = ReportSummary {
        runs: entries,
        rounds: merged.len(),
        final_row: merged.last().cloned(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("report serializes");
    std::fs::write(out.join("report.json"), text + "\n")?;
    Ok(summary)
}

fn write_merged_csv(path: &Path, rows: &[MergedRow]) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", HEADER.join(","))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.round,
            r.cum_reward,
            opt(r.avg_reward),
            opt(r.regret),
            opt(r.optimal_rate)
        )?;
    }
    out.flush()
}
