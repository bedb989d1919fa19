mod commands;
mod guard;

use camb_core::config::Overrides;
use camb_core::policy::PolicyKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Contextual bandit engine for retail offers.
#[derive(Debug, Parser)]
#[command(name = "camb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<PolicyKind>,
    /// Output directory (overrides run.out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            rounds: self.rounds,
            policy: self.policy,
            out: self.out.clone(),
        }
    }
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the input logs and write per-file validation reports.
    Ingest(Common),
    /// Fit CAMB models on logged impressions and write a checkpoint.
    Backfit(Common),
    /// Replay logged impressions through a policy.
    Replay(Common),
    /// Run a policy against the synthetic ground-truth world.
    Simulate(Common),
    /// Average metrics across run directories.
    Report {
        /// Run directories containing metrics.csv.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe a member from their weight trajectories.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        member: String,
        /// Use the offline rule-based persona instead of the HTTP endpoint.
        #[arg(long)]
        mock: bool,
        /// Trajectory file; defaults to data.trajectories, then <run.out>/trajectories.jsonl.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Last round to include; defaults to the latest snapshot.
        #[arg(long)]
        as_of: Option<u64>,
    },
    /// Factorize member × category purchase counts and write MF scores.
    Mf(Common),
    /// Write a synthetic transaction, offer and impression log.
    GenerateLogs(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Backfit(_) => "backfit",
            Command::Replay(_) => "replay",
            Command::Simulate(_) => "simulate",
            Command::Report { .. } => "report",
            Command::Explain { .. } => "explain",
            Command::Mf(_) => "mf",
            Command::GenerateLogs(_) => "generate-logs",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let result = match cli.command {
        Command::Ingest(c) => commands::ingest(&c),
        Command::Backfit(c) => commands::backfit(&c),
        Command::Replay(c) => commands::replay(&c),
        Command::Simulate(c) => commands::simulate(&c),
        Command::Report { runs, out } => commands::report(&runs, &out),
        Command::Explain {
            common,
            member,
            mock,
            trajectories,
            as_of,
        } => commands::explain(&common, &member, mock, trajectories.as_deref(), as_of),
        Command::Mf(c) => commands::mf(&c),
        Command::GenerateLogs(c) => commands::generate_logs(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "status": "error",
                "command": name,
                "message": format!("{e:#}").replace('\n', " "),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
