use super::{HarnessError, RoundLog};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// One row of the metrics time series. Fields a run cannot provide are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: u64,
    pub cum_reward: u64,
    pub avg_reward: Option<f64>,
    pub regret: Option<f64>,
    pub optimal_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub rounds: u64,
    /// Rounds that count toward reward; equal to `rounds` outside replay.
    pub matched_rounds: u64,
    pub cumulative_reward: u64,
    pub average_reward: Option<f64>,
    pub regret: Option<f64>,
    pub optimal_action_rate: Option<f64>,
    /// Running mean of reward over counted rounds, one entry per round.
    #[serde(skip)]
    pub per_round_reward: Vec<f64>,
    #[serde(skip)]
    pub rows: Vec<MetricsRow>,
}

impl MetricsSummary {
    /// Summary of a run with no rounds.
    pub fn empty() -> Self {
        Self {
            rounds: 0,
            matched_rounds: 0,
            cumulative_reward: 0,
            average_reward: None,
            regret: None,
            optimal_action_rate: None,
            per_round_reward: Vec::new(),
            rows: Vec::new(),
        }
    }
}

/// Regret and optimal-action rate are reported only when every round carries oracle data.
pub fn compute_metrics(logs: &[RoundLog]) -> Result<MetricsSummary, HarnessError> {
    if logs.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    let has_oracle = logs.iter().all(|l| l.instant_regret().is_some());
    let (mut cum, mut matched, mut regret, mut optimal) = (0u64, 0u64, 0.0f64, 0u64);
    let mut rows = Vec::with_capacity(logs.len());
    let mut per_round_reward = Vec::with_capacity(logs.len());
    for (i, l) in logs.iter().enumerate() {
        if l.matched {
            matched += 1;
            cum += u64::from(l.reward);
        }
        let avg = (matched > 0).then(|| cum as f64 / matched as f64);
        per_round_reward.push(avg.unwrap_or(0.0));
        if has_oracle {
            regret += l.instant_regret().unwrap_or(0.0);
            optimal += u64::from(l.is_optimal() == Some(true));
        }
        rows.push(MetricsRow {
            round: l.round,
            cum_reward: cum,
            avg_reward: avg,
            regret: has_oracle.then_some(regret),
            optimal_rate: has_oracle.then(|| optimal as f64 / (i + 1) as f64),
        });
    }
    Ok(MetricsSummary {
        rounds: logs.len() as u64,
        matched_rounds: matched,
        cumulative_reward: cum,
        average_reward: (matched > 0).then(|| cum as f64 / matched as f64),
        regret: has_oracle.then_some(regret),
        optimal_action_rate: has_oracle.then(|| optimal as f64 / logs.len() as f64),
        per_round_reward,
        rows,
    })
}

/// Fraction of optimal choices among `logs[range]`; `None` without oracle data.
pub fn optimal_rate_in(logs: &[RoundLog], range: std::ops::Range<usize>) -> Option<f64> {
    let slice = logs.get(range)?;
    if slice.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    for l in slice {
        hits += usize::from(l.is_optimal()?);
    }
    Some(hits as f64 / slice.len() as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV `round,cum_reward,avg_reward,regret,optimal_rate`; unavailable values are empty.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "round,cum_reward,avg_reward,regret,optimal_rate")?;
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
