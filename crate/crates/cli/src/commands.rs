use crate::guard::OutputGuard;
use crate::Common;
use anyhow::{bail, Context, Result};
use camb_core::config::RunConfig;
use camb_core::data::{
    catalog, ingest_impressions, ingest_mf_scores, ingest_offers, ingest_transactions, validate_catalog,
    write_impressions, write_mf_scores, write_offers, write_transactions, write_validation_report, IngestReport,
    MfScoreTable, ValidationIssue,
};
use camb_core::features::RunningScaler;
use camb_core::harness::{
    backfit_examples, config_hash, fingerprint_files, generate_retail_logs, run_replay, run_synthetic,
    write_run_outputs, Featurizer, ReplayData, RunManifest, RunOutcome, SyntheticWorld,
};
use camb_core::interpret::{build_payload, explain as run_explain, HttpClient, MockClient, PersonaClient, TrajectoryStore};
use camb_core::learner::{backfit as fit, read_checkpoint, write_checkpoint, Checkpoint, ModelStore};
use camb_core::mf::score_offers;
use camb_core::policy::{build_policy, PolicyKind};
use camb_core::MemberId;
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

const RUN_FILES: [&str; 5] = [
    "round_log.jsonl",
    "metrics.csv",
    "summary.json",
    "trajectories.jsonl",
    "manifest.json",
];

const REPLAY_ESTIMATOR: &str = "top-1 replay match (biased toward logging policy)";

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&c.overrides());
    cfg.validate()?;
    Ok(cfg)
}

/// Hash of the effective config minus the output directory, so the same
/// experiment written to two places gets the same manifest.
fn run_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.run.out = PathBuf::new();
    config_hash(&c)
}

fn ok_line(command: &str, extra: serde_json::Value) {
    let mut v = json!({"status": "ok", "command": command});
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    println!("{v}");
}

/// Everything a replay or backfit reads, plus the files it came from.
struct Loaded {
    data: ReplayData,
    reports: Vec<(&'static str, IngestReport)>,
    catalog_issues: Vec<ValidationIssue>,
    inputs: Vec<PathBuf>,
}

fn load_data(cfg: &RunConfig, need_impressions: bool) -> Result<Loaded> {
    let d = &cfg.data;
    let tx_path = d.require("transactions")?;
    let offers_path = d.require("offers")?;
    let mut inputs = vec![tx_path.to_path_buf(), offers_path.to_path_buf()];
    let tx = ingest_transactions(tx_path)?;
    let offers = ingest_offers(offers_path)?;
    let mut reports = vec![("transactions", tx.report), ("offers", offers.report)];
    let cat = catalog(&offers.records);

    let imp_path = if need_impressions {
        Some(d.require("impressions")?)
    } else {
        d.optional("impressions")?
    };
    let (impressions, catalog_issues) = match imp_path {
        Some(p) => {
            inputs.push(p.to_path_buf());
            let imp = ingest_impressions(p)?;
            reports.push(("impressions", imp.report));
            let issues = validate_catalog(&imp.records, &cat);
            (imp.records, issues)
        }
        None => (Vec::new(), Vec::new()),
    };

    let mf = match d.optional("mf_scores")? {
        Some(p) => {
            inputs.push(p.to_path_buf());
            let t = ingest_mf_scores(p, cfg.mf.default_score)?;
            reports.push(("mf_scores", t.report));
            t.records.into_iter().next().unwrap_or_else(|| MfScoreTable::new(cfg.mf.default_score))
        }
        None => MfScoreTable::new(cfg.mf.default_score),
    };
    Ok(Loaded {
        data: ReplayData {
            transactions: tx.records,
            catalog: cat,
            impressions,
            mf,
        },
        reports,
        catalog_issues,
        inputs,
    })
}

fn fingerprint(paths: &[PathBuf]) -> Result<String> {
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    Ok(fingerprint_files(&refs)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn ingest(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let loaded = load_data(&cfg, false)?;
    let mut names: Vec<String> = loaded.reports.iter().map(|(k, _)| format!("validation_{k}.jsonl")).collect();
    names.extend(["validation_catalog.jsonl", "ingest_summary.json", "manifest.json"].map(String::from));
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let guard = OutputGuard::new(&cfg.run.out, &name_refs)?;

    let mut summary = serde_json::Map::new();
    for (kind, report) in &loaded.reports {
        write_validation_report(&guard.path(&format!("validation_{kind}.jsonl")), &report.issues)?;
        summary.insert(
            kind.to_string(),
            json!({"source": report.source, "accepted": report.accepted, "skipped": report.skipped()}),
        );
    }
    write_validation_report(&guard.path("validation_catalog.jsonl"), &loaded.catalog_issues)?;
    summary.insert(
        "catalog".into(),
        json!({"impressions_with_unknown_offers": loaded.catalog_issues.len()}),
    );
    write_json(&guard.path("ingest_summary.json"), &summary)?;
    let mut manifest = RunManifest::new("ingest", "none", cfg.run.seed, run_hash(&cfg), fingerprint(&loaded.inputs)?);
    manifest.files = names.clone();
    write_json(&guard.path("manifest.json"), &manifest)?;
    guard.commit();
    ok_line("ingest", json!({"out": cfg.run.out, "summary": summary}));
    Ok(())
}

pub fn backfit(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let loaded = load_data(&cfg, true)?;
    let guard = OutputGuard::new(&cfg.run.out, &["checkpoint.jsonl", "backfit_report.json", "manifest.json"])?;

    let mut featurizer = Featurizer::new(&loaded.data.transactions, RunningScaler::new(), cfg.features.clone());
    let (examples, skips) = backfit_examples(&loaded.data, &mut featurizer)?;
    let mut store = ModelStore::from_config(&cfg.learner);
    let report = fit(&mut store, &examples, &cfg.learner)?;
    let models = store.len();
    write_checkpoint(
        &guard.path("checkpoint.jsonl"),
        &Checkpoint {
            store,
            learner: cfg.learner.clone(),
            scaler: featurizer.scaler.clone(),
        },
    )?;
    write_json(&guard.path("backfit_report.json"), &json!({"report": report, "models": models, "skip_tallies": skips}))?;
    let mut manifest = RunManifest::new("backfit", "camb", cfg.run.seed, run_hash(&cfg), fingerprint(&loaded.inputs)?);
    manifest.rounds = report.trained as u64;
    manifest.skip_tallies = skips;
    manifest.files = vec!["checkpoint.jsonl".into(), "backfit_report.json".into(), "manifest.json".into()];
    write_json(&guard.path("manifest.json"), &manifest)?;
    guard.commit();
    ok_line("backfit", json!({"out": cfg.run.out, "models": models, "report": report}));
    Ok(())
}

fn finish_run(command: &str, guard: OutputGuard, outcome: &RunOutcome, manifest: &RunManifest, out: &Path) -> Result<()> {
    write_run_outputs(out, outcome, manifest).with_context(|| format!("writing run outputs to {}", out.display()))?;
    guard.commit();
    let m = &outcome.metrics;
    ok_line(
        command,
        json!({
            "out": out,
            "policy": manifest.policy,
            "rounds": m.rounds,
            "average_reward": m.average_reward,
            "regret": m.regret,
            "skip_tallies": outcome.skips,
        }),
    );
    Ok(())
}

pub fn replay(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let mut loaded = load_data(&cfg, true)?;
    let (store, scaler) = match cfg.data.optional("checkpoint")? {
        Some(p) => {
            loaded.inputs.push(p.to_path_buf());
            let ck = read_checkpoint(p).with_context(|| format!("reading checkpoint {}", p.display()))?;
            (Some(ck.store), ck.scaler)
        }
        None => (None, RunningScaler::new()),
    };
    if cfg.run.policy == PolicyKind::Oracle {
        bail!("policy oracle needs ground truth and only runs under simulate");
    }
    let policy = build_policy(cfg.run.policy, &cfg.policy_params(), store)?;
    let guard = OutputGuard::new(&cfg.run.out, &RUN_FILES)?;
    let featurizer = Featurizer::new(&loaded.data.transactions, scaler, cfg.features.clone());
    let outcome = run_replay(&loaded.data, policy, featurizer, cfg.run.seed, cfg.run.snapshot_every)?;
    let mut manifest = RunManifest::new(
        "replay",
        cfg.run.policy.as_str(),
        cfg.run.seed,
        run_hash(&cfg),
        fingerprint(&loaded.inputs)?,
    );
    manifest.estimator = Some(REPLAY_ESTIMATOR.into());
    finish_run("replay", guard, &outcome, &manifest, &cfg.run.out)
}

pub fn simulate(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let policy = build_policy(cfg.run.policy, &cfg.policy_params(), None)?;
    let mut world = SyntheticWorld::new(cfg.synthetic.clone(), cfg.run.seed)?;
    let guard = OutputGuard::new(&cfg.run.out, &RUN_FILES)?;
    let outcome = run_synthetic(&mut world, policy, cfg.run.rounds, cfg.run.seed, cfg.run.snapshot_every)?;
    let manifest = RunManifest::new(
        "simulate",
        cfg.run.policy.as_str(),
        cfg.run.seed,
        run_hash(&cfg),
        config_hash(&cfg.synthetic),
    );
    finish_run("simulate", guard, &outcome, &manifest, &cfg.run.out)
}

pub fn report(runs: &[PathBuf], out: &Path) -> Result<()> {
    let guard = OutputGuard::new(out, &["merged_metrics.csv", "report.json"])?;
    let summary = camb_core::report::write_report(runs, out)?;
    guard.commit();
    ok_line("report", json!({"out": out, "runs": runs.len(), "rounds": summary.rounds}));
    Ok(())
}

pub fn explain(c: &Common, member: &str, mock: bool, trajectories: Option<&Path>, as_of: Option<u64>) -> Result<()> {
    let cfg = load_config(c)?;
    let path = match (trajectories, cfg.data.optional("trajectories")?) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.to_path_buf(),
        (None, None) => cfg.run.out.join("trajectories.jsonl"),
    };
    let store = TrajectoryStore::read(&path).with_context(|| format!("reading trajectories {}", path.display()))?;
    let as_of = as_of.unwrap_or_else(|| store.snapshots().map(|s| s.round).max().unwrap_or(0));
    let payload = build_payload(&store, &MemberId::from(member.to_string()), as_of, &cfg.interpret)?;

    let client: Box<dyn PersonaClient> = if mock {
        Box::new(MockClient {
            top_k: cfg.interpret.top_k,
        })
    } else {
        Box::new(HttpClient::from_env()?)
    };
    let out_dir = c.out.as_deref();
    match run_explain(&payload, client.as_ref()) {
        Ok(text) => {
            if let Some(dir) = out_dir {
                let guard = OutputGuard::new(dir, &["explanation.json"])?;
                write_json(
                    &guard.path("explanation.json"),
                    &json!({"member_id": member, "as_of": as_of, "mock": mock, "persona": text, "payload": payload}),
                )?;
                guard.commit();
            }
            ok_line("explain", json!({"member_id": member, "as_of": as_of, "persona": text}));
            Ok(())
        }
        Err(e) => {
            // Keep the payload so the call can be retried without recomputing it.
            if let (Some(dir), Some(p)) = (out_dir, e.payload()) {
                std::fs::create_dir_all(dir)?;
                write_json(&dir.join("explanation_payload.json"), p)?;
            }
            Err(e.into())
        }
    }
}

pub fn mf(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let tx_path = cfg.data.require("transactions")?;
    let offers_path = cfg.data.require("offers")?;
    let tx = ingest_transactions(tx_path)?;
    let offers = ingest_offers(offers_path)?;
    let guard = OutputGuard::new(&cfg.run.out, &["mf_scores.csv", "manifest.json"])?;
    let (table, rel_err) = score_offers(&tx.records, &offers.records, &cfg.mf, cfg.run.seed)?;
    write_mf_scores(&guard.path("mf_scores.csv"), &table)?;
    let mut manifest = RunManifest::new(
        "mf",
        "none",
        cfg.run.seed,
        run_hash(&cfg),
        fingerprint(&[tx_path.to_path_buf(), offers_path.to_path_buf()])?,
    );
    manifest.files = vec!["mf_scores.csv".into(), "manifest.json".into()];
    write_json(&guard.path("manifest.json"), &manifest)?;
    guard.commit();
    ok_line(
        "mf",
        json!({"out": cfg.run.out, "scores": table.entries.len(), "relative_error": rel_err}),
    );
    Ok(())
}

pub fn generate_logs(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let logs = generate_retail_logs(&cfg.generator, cfg.run.seed)?;
    let guard = OutputGuard::new(&cfg.run.out, &["transactions.csv", "offers.jsonl", "impressions.jsonl"])?;
    write_transactions(&guard.path("transactions.csv"), &logs.transactions)?;
    write_offers(&guard.path("offers.jsonl"), &logs.offers)?;
    write_impressions(&guard.path("impressions.jsonl"), &logs.impressions)?;
    guard.commit();
    ok_line(
        "generate-logs",
        json!({
            "out": cfg.run.out,
            "transactions": logs.transactions.len(),
            "offers": logs.offers.len(),
            "impressions": logs.impressions.len(),
        }),
    );
    Ok(())
}
