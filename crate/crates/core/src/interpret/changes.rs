use super::WeightSnapshot;
use crate::features::{Welford, FEATURE_NAMES};
use crate::{CategoryId, MemberId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChangeConfig {
    /// Window W, in snapshots.
    pub window: usize,
    /// Threshold k, in units of the windowed-delta spread.
    pub k: f64,
    /// Absolute floor on the windowed delta.
    pub tau_abs: f64,
}

impl Default for ChangeConfig {
    fn default() -> Self {
        Self {
            window: 20,
            k: 4.0,
            tau_abs: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub member_id: MemberId,
    pub category_id: CategoryId,
    pub feature: String,
    /// Round of the snapshot that closed the window.
    pub round: u64,
    /// `w_j(t) − w_j(t−W)`.
    pub delta: f64,
    /// Delta over the windowed spread; absent while the spread is still zero.
    pub z_magnitude: Option<f64>,
    pub direction: Direction,
}

/// Flags windowed weight moves that are large relative to the trajectory's own noise.
///
/// For each feature j and each snapshot t ≥ W the windowed move
/// `Δ = w_j(t) − w_j(t−W)` is compared with `max(τ_abs, k·√W·σ_j)`, where
/// σ_j is the sample std of the per-step deltas that precede the window.
/// The √W factor puts σ on the scale of a W-step sum of independent steps.
/// Until W prior deltas exist, σ_j is instead a median-absolute-deviation
/// estimate over every delta seen so far, which a single jump barely moves.
/// After an event the feature is quiet for W snapshots.
pub fn detect_changes(trajectory: &[WeightSnapshot], cfg: &ChangeConfig) -> Vec<ChangeEvent> {
    let w = cfg.window.max(1);
    let n = trajectory.len();
    let mut events = Vec::new();
    if n < w + 1 {
        return events;
    }
    let root_w = (w as f64).sqrt();
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        let value = |i: usize| trajectory[i].weights[j];
        let mut spread = Welford::default();
        let mut quiet_until = 0usize;
        for t in w..n {
            // Deltas 1..=t-W lie entirely before the current window.
            if t - w >= 1 {
                spread.push(value(t - w) - value(t - w - 1));
            }
            let sigma = if spread.count >= w as u64 {
                spread.std_dev()
            } else {
                robust_sigma((1..=t).map(|i| value(i) - value(i - 1)).collect())
            };
            let scale = sigma * root_w;
            let threshold = cfg.tau_abs.max(cfg.k * scale);
            let delta = value(t) - value(t - w);
            if t >= quiet_until && threshold > 0.0 && delta.abs() > threshold {
                let snap = &trajectory[t];
                events.push(ChangeEvent {
                    member_id: snap.member_id.clone(),
                    category_id: snap.category_id.clone(),
                    feature: (*name).to_string(),
                    round: snap.round,
                    delta,
                    z_magnitude: (scale > 0.0).then(|| delta / scale),
                    direction: if delta > 0.0 { Direction::Up } else { Direction::Down },
                });
                quiet_until = t + w;
            }
        }
    }
    events.sort_by(|a, b| a.round.cmp(&b.round).then_with(|| a.feature.cmp(&b.feature)));
    events
}

/// 1.4826 × MAD, which matches the std for Gaussian deltas.
fn robust_sigma(mut deltas: Vec<f64>) -> f64 {
    fn median(v: &mut [f64]) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
    if deltas.is_empty() {
        return 0.0;
    }
    let m = median(&mut deltas);
    let mut dev: Vec<f64> = deltas.iter().map(|d| (d - m).abs()).collect();
    1.4826 * median(&mut dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::NUM_FEATURES;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn traj(values: &[f64], feature: usize) -> Vec<WeightSnapshot> {
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

    fn random_walk(seed: u64, n: usize, sd: f64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let step = Normal::new(0.0, sd).unwrap();
        let mut v = 0.0;
        (0..n)
            .map(|_| {
                v += step.sample(&mut rng);
                v
            })
            .collect()
    }

    #[test]
    fn constant_trajectory_is_quiet() {
        assert!(detect_changes(&traj(&[0.7; 200], 2), &ChangeConfig::default()).is_empty());
    }

    #[test]
    fn short_trajectory_is_quiet() {
        let t = traj(&[0.0, 5.0, 10.0], 1);
        assert!(detect_changes(&t, &ChangeConfig::default()).is_empty());
    }

    #[test]
    fn step_fires_once_at_first_covering_window() {
        let cfg = ChangeConfig {
            window: 20,
            k: 4.0,
            tau_abs: 0.0,
        };
        let sd = 0.01;
        let height = 10.0 * sd * (cfg.window as f64).sqrt();
        let step_at = 120;
        for seed in 0..20 {
            let mut v = random_walk(seed, 300, sd);
            v.iter_mut().skip(step_at).for_each(|x| *x += height);
            let ev = detect_changes(&traj(&v, 2), &cfg);
            assert_eq!(ev.len(), 1, "seed {seed}: {ev:?}");
            assert_eq!(ev[0].round, step_at as u64 + 1);
            assert_eq!(ev[0].feature, "brand_loyalty");
            assert_eq!(ev[0].direction, Direction::Up);
            assert!(ev[0].z_magnitude.unwrap() >= cfg.k);
        }
    }

    #[test]
    fn noise_rarely_fires_at_k6() {
        let cfg = ChangeConfig {
            window: 20,
            k: 6.0,
            tau_abs: 0.0,
        };
        let quiet = (0..100)
            .filter(|&seed| detect_changes(&traj(&random_walk(1000 + seed, 400, 0.02), 1), &cfg).is_empty())
            .count();
        assert!(quiet >= 99, "{quiet}");
    }

    #[test]
    fn warm_up_catches_jumps_but_not_noise() {
        let mut v = vec![0.0; 30];
        v.iter_mut().skip(25).for_each(|x| *x = 1.0);
        let ev = detect_changes(&traj(&v, 1), &ChangeConfig::default());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].round, 26);
        assert_eq!(ev[0].z_magnitude, None);

        let cfg = ChangeConfig { window: 20, k: 4.0, tau_abs: 0.0 };
        let mut v = random_walk(3, 35, 0.01);
        v.iter_mut().skip(28).for_each(|x| *x += 0.5);
        let ev = detect_changes(&traj(&v, 1), &cfg);
        assert_eq!(ev.iter().map(|e| e.round).collect::<Vec<_>>(), vec![29]);

        // Per-step noise well above the absolute floor must not fire before W prior deltas exist.
        let cfg = ChangeConfig { k: 6.0, ..ChangeConfig::default() };
        let quiet = (0..100).filter(|&s| detect_changes(&traj(&random_walk(s, 40, 0.05), 1), &cfg).is_empty()).count();
        assert!(quiet >= 99, "{quiet}");
    }

    proptest! {
        #[test]
        fn scale_equivariant(seed in 0u64..500, pow in -3i32..4, jump in 0.0f64..0.5) {
            let cfg = ChangeConfig { window: 10, k: 3.0, tau_abs: 0.02 };
            let mut v = random_walk(seed, 120, 0.01);
            v.iter_mut().skip(60).for_each(|x| *x += jump);
            let c = 2f64.powi(pow);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let scaled_cfg = ChangeConfig { tau_abs: cfg.tau_abs * c, ..cfg.clone() };
            let a: Vec<u64> = detect_changes(&traj(&v, 4), &cfg).iter().map(|e| e.round).collect();
            let b: Vec<u64> = detect_changes(&traj(&scaled, 4), &scaled_cfg).iter().map(|e| e.round).collect();
            prop_assert_eq!(a, b);
        }
    }
}
