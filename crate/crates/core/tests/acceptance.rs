//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

use camb_core::data::Transaction;
use camb_core::exploration::sample_score;
use camb_core::features::{
    compute_brand_loyalty, compute_mpg, compute_seasonality, idx, ContextVector, FeatureConfig, PurchaseHistory,
    SeasonalityProfile, Welford, NUM_FEATURES,
};
use camb_core::harness::{
    generate_retail_logs, optimal_rate_in, run_replay, run_synthetic, write_run_outputs, Featurizer, GeneratorConfig,
    ReplayData, RewardModel, RunManifest, SyntheticConfig, SyntheticWorld,
};
use camb_core::interpret::{
    build_payload, detect_changes, ChangeConfig, MockClient, PayloadConfig, PersonaClient, TrajectoryStore,
    WeightSnapshot,
};
use camb_core::learner::{CategoryModel, LearnerConfig};
use camb_core::mf::als;
use camb_core::policy::{build_policy, LinUcbState, PolicyKind, PolicyParams, ThompsonState};
use camb_core::{BrandId, CategoryId, MemberId};
use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within_time(pass: bool, started: Instant, limit: Duration) -> (bool, String) {
    let took = started.elapsed();
    (pass && took < limit, format!("{:.2}s (limit {}s)", took.as_secs_f64(), limit.as_secs()))
}

fn random_context(r: &mut ChaCha8Rng, span: f64) -> ContextVector {
    let mut f = [0.0; NUM_FEATURES - 1];
    f.iter_mut().for_each(|v| *v = r.random_range(-span..span));
    ContextVector::from_features(f).unwrap()
}

/// Log-loss of σ(wᵀx) against y, in the overflow-safe softplus form.
fn log_loss(w: &[f64; NUM_FEATURES], x: &ContextVector, y: bool) -> f64 {
    let z: f64 = w.iter().zip(&x.values).map(|(a, b)| a * b).sum();
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    softplus - if y { z } else { 0.0 }
}

fn c1_gradient() -> Outcome {
    let started = Instant::now();
    let cfg = LearnerConfig {
        learning_rate: 1.0,
        positive_boost: 1.0,
        ..LearnerConfig::default()
    };
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    let h = 1e-3;
    for _ in 0..100 {
        let mut w = [0.0; NUM_FEATURES];
        w.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
        let x = random_context(&mut r, 1.0);
        let y = r.random_bool(0.5);
        let step = CategoryModel::with_weights(w).sgd_step(&x, y, &cfg);
        for i in 0..NUM_FEATURES {
            let at = |d: f64| {
                let mut v = w;
                v[i] += d;
                log_loss(&v, &x, y)
            };
            // Five-point central difference.
            let grad = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            let (a, b) = (step[i], -grad);
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
    }
    let (pass, time) = within_time(worst < 1e-6, started, Duration::from_secs(1));
    outcome(pass, format!("max componentwise relative error {worst:.2e} (tol 1e-6), {time}"))
}

fn c2_boost() -> Outcome {
    let mut r = rng(2);
    let mut worst_ulps: f64 = 0.0;
    let mut negatives_untouched = true;
    for alpha in [2.0, 3.7, 1.25] {
        let plain = LearnerConfig {
            positive_boost: 1.0,
            ..LearnerConfig::default()
        };
        let boosted = LearnerConfig {
            positive_boost: alpha,
            ..plain.clone()
        };
        for _ in 0..200 {
            let mut w = [0.0; NUM_FEATURES];
            w.iter_mut().for_each(|v| *v = r.random_range(-2.0..2.0));
            let m = CategoryModel::with_weights(w);
            let x = random_context(&mut r, 2.0);
            let a = m.sgd_step(&x, true, &boosted);
            let b = m.sgd_step(&x, true, &plain);
            for (ai, bi) in a.iter().zip(&b) {
                let expect = alpha * bi;
                let ulps = (ai - expect).abs() / (f64::EPSILON * expect.abs().max(f64::MIN_POSITIVE));
                worst_ulps = worst_ulps.max(ulps);
            }
            negatives_untouched &= m.sgd_step(&x, false, &boosted) == m.sgd_step(&x, false, &plain);
        }
    }
    outcome(
        worst_ulps <= 2.0 && negatives_untouched,
        format!("max deviation {worst_ulps:.1} ulp from α × unboosted step; y=0 steps identical: {negatives_untouched}"),
    )
}

fn day(start: NaiveDate, d: u64) -> NaiveDate {
    start + Days::new(d)
}

fn tx(member: &str, category: &str, brand: &str, date: NaiveDate) -> Transaction {
    Transaction {
        member_id: MemberId::from(member),
        category_id: CategoryId::from(category),
        brand_id: BrandId::from(brand),
        event_date: date,
        quantity: 1,
    }
}

fn brute_median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn c3_features() -> Outcome {
    let mut r = rng(3);
    let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
    let cfg = FeatureConfig::default();
    let (mut mpg_err, mut loyalty_err, mut season_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut in_unit = true;
    for _ in 0..50 {
        // MPG: last purchase and median gap over distinct dates, by hand.
        let n = r.random_range(2..12);
        let mut days: Vec<u64> = (0..n).map(|_| r.random_range(0..300)).collect();
        days.sort_unstable();
        let txs: Vec<_> = days.iter().map(|&d| tx("m", "c", "b", day(start, d))).collect();
        let hist = PurchaseHistory::from_transactions(&txs);
        let stats = hist.stats(&"m".into(), &"c".into(), &cfg);
        let mut distinct = days.clone();
        distinct.dedup();
        let mut gaps: Vec<f64> = distinct.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let cycle = if gaps.is_empty() { cfg.default_cycle_days } else { brute_median(&mut gaps) };
        let event = *days.last().unwrap() + r.random_range(0..90);
        let expect = (event - days.last().unwrap()) as f64 / cycle;
        let got = compute_mpg(day(start, event), &stats, cfg.cold_start_mpg).unwrap();
        mpg_err = mpg_err.max((got - expect).abs());

        // Loyalty: best share among the offer's brands, counted by hand.
        let brands = ["b0", "b1", "b2", "b3"];
        let picks: Vec<&str> = (0..r.random_range(1..40)).map(|_| brands[r.random_range(0..4)]).collect();
        let txs: Vec<_> = picks.iter().map(|b| tx("m", "c", b, start)).collect();
        let stats = PurchaseHistory::from_transactions(&txs).stats(&"m".into(), &"c".into(), &cfg);
        let offer: Vec<BrandId> = brands.iter().filter(|_| r.random_bool(0.5)).map(|b| BrandId::from(*b)).collect();
        let expect = offer
            .iter()
            .map(|b| picks.iter().filter(|p| **p == b.as_str()).count() as f64 / picks.len() as f64)
            .fold(0.0, f64::max);
        let got = compute_brand_loyalty(&offer, &stats);
        loyalty_err = loyalty_err.max((got - expect).abs());
        in_unit &= (0.0..=1.0).contains(&got);

        // Seasonality: circular three-week sums relative to the peak sum.
        let txs: Vec<_> = (0..r.random_range(1..200))
            .map(|_| tx("m", "c", "b", day(start, r.random_range(0..365))))
            .collect();
        let profile = SeasonalityProfile::from_transactions(&txs);
        let mut weeks = [0u64; 52];
        for t in &txs {
            weeks[((t.event_date - start).num_days() as usize / 7).min(51)] += 1;
        }
        let sums: Vec<u64> = (0..52).map(|w| weeks[(w + 51) % 52] + weeks[w] + weeks[(w + 1) % 52]).collect();
        let peak = *sums.iter().max().unwrap() as f64;
        let at = r.random_range(0..365);
        let expect = sums[((at as usize) / 7).min(51)] as f64 / peak;
        let got = compute_seasonality(&"c".into(), day(start, at), &profile);
        season_err = season_err.max((got - expect).abs());
        in_unit &= (0.0..=1.0).contains(&got);
    }
    let pass = mpg_err <= 1e-12 && loyalty_err <= 1e-12 && season_err <= 1e-12 && in_unit;
    outcome(
        pass,
        format!(
            "50 cases each, max abs error mpg {mpg_err:.1e}, loyalty {loyalty_err:.1e}, seasonality {season_err:.1e} (tol 1e-12); loyalty and seasonality in [0,1]: {in_unit}"
        ),
    )
}

fn c4_welford() -> Outcome {
    let mut r = rng(4);
    let normal = Normal::new(1000.0, 3.0).unwrap();
    let xs: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut r)).collect();
    let mut w = Welford::default();
    xs.iter().for_each(|&x| w.push(x));
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mean_rel = (w.mean - mean).abs() / mean.abs();
    let sd_rel = (w.std_dev() - sd).abs() / sd;
    outcome(
        mean_rel < 1e-9 && sd_rel < 1e-9,
        format!("10^5 samples: mean rel error {mean_rel:.1e}, std rel error {sd_rel:.1e} (tol 1e-9)"),
    )
}

fn c5_exploration() -> Outcome {
    let started = Instant::now();
    let mut r = rng(5);
    let mut ok = true;
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for p in [0.1, 0.5, 0.9] {
        for kappa in [5.0, 50.0] {
            let mut w = Welford::default();
            for _ in 0..100_000 {
                w.push(sample_score(p, kappa, 1e-4, &mut r).unwrap());
            }
            let mean_gap = (w.mean - p).abs();
            let var_rel = (w.variance() / (p * (1.0 - p) / (kappa + 1.0)) - 1.0).abs();
            ok &= mean_gap <= 0.01 && var_rel <= 0.10;
            worst_mean = worst_mean.max(mean_gap);
            worst_var = worst_var.max(var_rel);
        }
    }
    let (pass, time) = within_time(ok, started, Duration::from_secs(5));
    outcome(
        pass,
        format!("worst |mean−p| {worst_mean:.4} (tol 0.01), worst variance deviation {:.1}% (tol 10%), {time}", worst_var * 100.0),
    )
}

fn c6_learning() -> Outcome {
    let started = Instant::now();
    let (seeds, t) = (20u64, 5000u64);
    let (mut half, mut full, mut first, mut last) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let mut world = SyntheticWorld::new(SyntheticConfig::default(), seed).unwrap();
        let policy = build_policy(PolicyKind::Camb, &PolicyParams::default(), None).unwrap();
        let out = run_synthetic(&mut world, policy, t, seed, 1000).unwrap();
        half += out.metrics.rows[2499].regret.unwrap();
        full += out.metrics.rows[4999].regret.unwrap();
        first += optimal_rate_in(&out.logs, 0..500).unwrap();
        last += optimal_rate_in(&out.logs, 4500..5000).unwrap();
    }
    let n = seeds as f64;
    let ratio = full / half;
    let gain = (last - first) / n;
    let (pass, time) = within_time(ratio < 1.8 && gain >= 0.15, started, Duration::from_secs(120));
    outcome(
        pass,
        format!(
            "20 seeds, T=5000: regret(5000)/regret(2500) = {ratio:.3} (< 1.8), optimal-action rate {:.3} → {:.3}, gain {gain:.3} (≥ 0.15), {time}",
            first / n,
            last / n
        ),
    )
}

fn ridge(xs: &[Vec<f64>], rs: &[f64], lambda: f64) -> DVector<f64> {
    let d = xs[0].len();
    let x = DMatrix::from_fn(xs.len(), d, |i, j| xs[i][j]);
    let y = DVector::from_column_slice(rs);
    let gram = x.transpose() * &x + DMatrix::identity(d, d) * lambda;
    gram.try_inverse().unwrap() * x.transpose() * y
}

fn c7_baselines() -> Outcome {
    let linear = SyntheticConfig {
        reward: RewardModel::Linear,
        ..SyntheticConfig::default()
    };
    let mean_reward = |kind: PolicyKind| {
        (0..20u64)
            .map(|seed| {
                let mut world = SyntheticWorld::new(linear.clone(), seed).unwrap();
                let policy = build_policy(kind, &PolicyParams::default(), None).unwrap();
                run_synthetic(&mut world, policy, 2000, seed, 1000).unwrap().metrics.average_reward.unwrap()
            })
            .sum::<f64>()
            / 20.0
    };
    let (lin, rand) = (mean_reward(PolicyKind::Linucb), mean_reward(PolicyKind::Random));
    let lift = lin / rand;

    let mut r = rng(7);
    let xs: Vec<Vec<f64>> = (0..300).map(|_| (0..NUM_FEATURES).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
    let rs: Vec<f64> = (0..300).map(|_| f64::from(u8::from(r.random_bool(0.4)))).collect();
    let lambda = 1.0;
    let oracle = ridge(&xs, &rs, lambda);
    let mut ucb = LinUcbState::new(NUM_FEATURES, 1.0, lambda);
    let mut ts = ThompsonState::new(NUM_FEATURES, lambda, 0.25);
    for (x, y) in xs.iter().zip(&rs) {
        ucb.update(x, *y);
        ts.update(x, *y);
    }
    let rel = |v: DVector<f64>| (v - &oracle).amax() / oracle.amax();
    let ucb_err = rel(ucb.theta().unwrap());
    let ts_err = rel(ts.mean().unwrap());
    outcome(
        lift >= 1.2 && ucb_err <= 1e-8 && ts_err <= 1e-8,
        format!(
            "linear world, 20 seeds, T=2000: LinUCB {lin:.3} vs random {rand:.3} = {lift:.2}× (≥ 1.2); θ̂ vs batch ridge {ucb_err:.1e}, TS mean vs ridge {ts_err:.1e} (tol 1e-8)"
        ),
    )
}

fn c8_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let files = ["round_log.jsonl", "metrics.csv", "summary.json", "trajectories.jsonl", "manifest.json"];
    let mut identical = true;

    let simulate = |out: &std::path::Path| {
        let mut world = SyntheticWorld::new(SyntheticConfig::default(), 11).unwrap();
        let policy = build_policy(PolicyKind::Camb, &PolicyParams::default(), None).unwrap();
        let outcome = run_synthetic(&mut world, policy, 800, 11, 1).unwrap();
        let manifest = RunManifest::new("simulate", "camb", 11, "cfg".into(), "world".into());
        write_run_outputs(out, &outcome, &manifest).unwrap();
    };
    let logs = generate_retail_logs(&GeneratorConfig::default(), 5).unwrap();
    let data = ReplayData {
        transactions: logs.transactions,
        catalog: camb_core::data::catalog(&logs.offers),
        impressions: logs.impressions,
        mf: Default::default(),
    };
    let replay = |out: &std::path::Path| {
        let policy = build_policy(PolicyKind::Camb, &PolicyParams::default(), None).unwrap();
        let featurizer = Featurizer::new(&data.transactions, Default::default(), FeatureConfig::default());
        let outcome = run_replay(&data, policy, featurizer, 11, 1).unwrap();
        let manifest = RunManifest::new("replay", "camb", 11, "cfg".into(), "logs".into());
        write_run_outputs(out, &outcome, &manifest).unwrap();
    };
    for (name, run) in [("simulate", &simulate as &dyn Fn(&std::path::Path)), ("replay", &replay)] {
        let (a, b) = (dir.path().join(format!("{name}-a")), dir.path().join(format!("{name}-b")));
        run(&a);
        run(&b);
        for f in files {
            identical &= std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
        }
    }
    outcome(
        identical,
        format!("simulate and replay each run twice: {} output files byte-identical: {identical}", files.join(", ")),
    )
}

fn trajectory(values: &[f64], feature: usize) -> Vec<WeightSnapshot> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut weights = [0.0; NUM_FEATURES];
            weights[feature] = *v;
            WeightSnapshot {
                round: i as u64 + 1,
                member_id: "m".into(),
                category_id: "c".into(),
                weights,
                update_count: i as u64 + 1,
            }
        })
        .collect()
}

fn c9_changes() -> Outcome {
    let walk = |seed: u64, n: usize, sd: f64| {
        let mut r = rng(seed);
        let step = Normal::new(0.0, sd).unwrap();
        let mut v = 0.0;
        (0..n)
            .map(|_| {
                v += step.sample(&mut r);
                v
            })
            .collect::<Vec<f64>>()
    };
    let step_cfg = ChangeConfig {
        window: 20,
        k: 4.0,
        tau_abs: 0.0,
    };
    let sd = 0.01;
    let at = 150;
    let height = 10.0 * sd * (step_cfg.window as f64).sqrt();
    let step_ok = (0..20u64).all(|seed| {
        let mut v = walk(seed, 300, sd);
        v.iter_mut().skip(at).for_each(|x| *x += height);
        let ev = detect_changes(&trajectory(&v, idx::VALUE), &step_cfg);
        ev.len() == 1 && ev[0].round == at as u64 + 1 && ev[0].feature == "value"
    });

    let noise_cfg = ChangeConfig {
        k: 6.0,
        ..ChangeConfig::default()
    };
    let quiet_walk = (0..100u64)
        .filter(|&s| detect_changes(&trajectory(&walk(500 + s, 400, 0.02), idx::MPG), &noise_cfg).is_empty())
        .count();
    let quiet_iid = (0..100u64)
        .filter(|&s| {
            let mut r = rng(900 + s);
            let noise = Normal::new(0.3, 0.02).unwrap();
            let v: Vec<f64> = (0..400).map(|_| noise.sample(&mut r)).collect();
            detect_changes(&trajectory(&v, idx::MPG), &noise_cfg).is_empty()
        })
        .count();
    outcome(
        step_ok && quiet_walk >= 99 && quiet_iid >= 99,
        format!(
            "step: exactly one event at the step in 20/20 seeds: {step_ok}; k=6 noise quiet in {quiet_walk}/100 random-walk and {quiet_iid}/100 i.i.d. seeds (≥ 99)"
        ),
    )
}

fn c10_explanation() -> Outcome {
    let mut store = TrajectoryStore::new(1);
    for t in 1..=60u64 {
        let mut weights = [0.0; NUM_FEATURES];
        weights[idx::BRAND_LOYALTY] = 1.2 + 0.001 * t as f64;
        weights[idx::SEASONALITY] = -0.4;
        weights[idx::VALUE] = 0.1;
        let model = CategoryModel {
            weights,
            update_count: t,
        };
        store.record_snapshot(&"m7".into(), &"coffee".into(), &model, t).unwrap();
    }
    let payload = build_payload(&store, &"m7".into(), 60, &PayloadConfig::default()).unwrap();
    let text = MockClient::default().explain(&payload).unwrap();
    let pass = text.contains("brand-loyal") && text.contains("non-seasonal");
    outcome(
        pass,
        format!("offline mock persona: {:?}", text.lines().nth(1).unwrap_or_default()),
    )
}

fn c11_als() -> Outcome {
    let started = Instant::now();
    let mut r = rng(11);
    let u: Vec<f64> = (0..30).map(|_| r.random_range(0.5..5.0)).collect();
    let v: Vec<f64> = (0..12).map(|_| r.random_range(0.5..5.0)).collect();
    let counts = DMatrix::from_fn(u.len(), v.len(), |i, j| (u[i] * v[j]).round());
    let exact = DMatrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j]);
    let err_counts = als(&counts, 1, 50, 0.01, 3).unwrap().relative_error(&counts);
    let err_exact = als(&exact, 1, 50, 0.01, 3).unwrap().relative_error(&exact);
    let (pass, time) = within_time(err_counts < 0.05 && err_exact < 0.05, started, Duration::from_secs(5));
    outcome(
        pass,
        format!("rank 1, 50 iterations: relative error {err_exact:.1e} exact, {err_counts:.1e} rounded counts (< 0.05), {time}"),
    )
}

fn main() {
    // A bare `cargo test -- <filter>` passes extra args; honour `--list` so tooling can enumerate.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient correctness", c1_gradient),
        ("boost semantics", c2_boost),
        ("feature formula oracles", c3_features),
        ("scaler equivalence", c4_welford),
        ("exploration concentration", c5_exploration),
        ("learning at desk scale", c6_learning),
        ("baseline sanity", c7_baselines),
        ("determinism", c8_determinism),
        ("change detection", c9_changes),
        ("explanation pipeline offline", c10_explanation),
        ("ALS utility", c11_als),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
