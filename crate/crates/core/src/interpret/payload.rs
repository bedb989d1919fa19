use super::{detect_changes, ChangeConfig, ChangeEvent, InterpretError, TrajectoryStore, WeightSnapshot};
use crate::features::{FEATURE_NAMES, FEATURE_ORDER_VERSION};
use crate::{CategoryId, MemberId};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const PROMPT_TEMPLATE: &str = include_str!("../../assets/persona_prompt_v1.txt");
pub const PROMPT_TEMPLATE_VERSION: &str = "persona-prompt-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayloadConfig {
    /// Largest-magnitude non-bias weights to highlight.
    pub top_k: usize,
    /// Snapshots used for trend slopes and for the recent-change horizon.
    pub trend_window: usize,
    /// Most recent change events kept per category.
    pub max_events: usize,
    pub changes: ChangeConfig,
}

impl Default for PayloadConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            trend_window: 100,
            max_events: 10,
            changes: ChangeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryInsight {
    pub category_id: CategoryId,
    pub update_count: u64,
    pub snapshots: usize,
    /// All nine weights in feature order.
    pub weights: Vec<NamedValue>,
    pub top_features: Vec<NamedValue>,
    /// Least-squares slope of each weight against round, per round.
    pub trend_slopes: Vec<NamedValue>,
    pub change_events: Vec<ChangeEvent>,
}

impl CategoryInsight {
    pub fn weight(&self, feature: &str) -> f64 {
        lookup(&self.weights, feature)
    }

    pub fn slope(&self, feature: &str) -> f64 {
        lookup(&self.trend_slopes, feature)
    }

    /// 1-based rank of `feature` by |weight| among non-bias features.
    pub fn magnitude_rank(&self, feature: &str) -> usize {
        let target = self.weight(feature).abs();
        1 + self
            .weights
            .iter()
            .skip(1)
            .filter(|w| w.feature != feature && w.value.abs() > target)
            .count()
    }
}

fn lookup(list: &[NamedValue], feature: &str) -> f64 {
    list.iter().find(|n| n.feature == feature).map_or(0.0, |n| n.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationPayload {
    pub member_id: MemberId,
    pub as_of: u64,
    pub feature_order_version: String,
    pub categories: Vec<CategoryInsight>,
}

/// Summarises a member's trajectories up to and including round `as_of`.
pub fn build_payload(
    store: &TrajectoryStore,
    member: &MemberId,
    as_of: u64,
    cfg: &PayloadConfig,
) -> Result<ExplanationPayload, InterpretError> {
    let mut categories = Vec::new();
    for category in store.categories_of(member) {
        let traj = store.trajectory(member, &category);
        let upto = traj.partition_point(|s| s.round <= as_of);
        if upto == 0 {
            continue;
        }
        categories.push(insight(&traj[..upto], category, cfg));
    }
    if categories.is_empty() {
        return Err(InterpretError::UnknownMember(member.clone(), as_of));
    }
    Ok(ExplanationPayload {
        member_id: member.clone(),
        as_of,
        feature_order_version: FEATURE_ORDER_VERSION.into(),
        categories,
    })
}

fn insight(traj: &[WeightSnapshot], category_id: CategoryId, cfg: &PayloadConfig) -> CategoryInsight {
    let last = traj.last().expect("non-empty trajectory");
    let named = |vals: &mut dyn Iterator<Item = f64>| -> Vec<NamedValue> {
        FEATURE_NAMES
            .iter()
            .zip(vals)
            .map(|(f, value)| NamedValue {
                feature: (*f).to_string(),
                value,
            })
            .collect()
    };
    let weights = named(&mut last.weights.iter().copied());

    let mut top_features: Vec<NamedValue> = weights[1..].to_vec();
    top_features.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()).then_with(|| a.feature.cmp(&b.feature)));
    top_features.truncate(cfg.top_k);

    let recent = &traj[traj.len().saturating_sub(cfg.trend_window.max(1))..];
    let trend_slopes = named(&mut (0..FEATURE_NAMES.len()).map(|j| slope(recent, j)));

    let horizon = recent[0].round;
    let mut change_events: Vec<ChangeEvent> = detect_changes(traj, &cfg.changes)
        .into_iter()
        .filter(|e| e.round >= horizon)
        .collect();
    let drop = change_events.len().saturating_sub(cfg.max_events);
    change_events.drain(..drop);

    CategoryInsight {
        category_id,
        update_count: last.update_count,
        snapshots: traj.len(),
        weights,
        top_features,
        trend_slopes,
        change_events,
    }
}

fn slope(traj: &[WeightSnapshot], j: usize) -> f64 {
    let n = traj.len() as f64;
    if traj.len() < 2 {
        return 0.0;
    }
    let mx = traj.iter().map(|s| s.round as f64).sum::<f64>() / n;
    let my = traj.iter().map(|s| s.weights[j]).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for s in traj {
        let dx = s.round as f64 - mx;
        sxy += dx * (s.weights[j] - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Fills the prompt template with the payload as labeled text fields.
pub fn render_prompt(payload: &ExplanationPayload) -> String {
    let mut body = String::new();
    for c in &payload.categories {
        let _ = writeln!(body, "Category {} ({} updates, {} snapshots)", c.category_id, c.update_count, c.snapshots);
        let _ = writeln!(body, "  current weights:");
        for (w, s) in c.weights.iter().zip(&c.trend_slopes) {
            let _ = writeln!(body, "    {}: {:+.4} (trend {:+.6} per round)", w.feature, w.value, s.value);
        }
        let top: Vec<String> = c.top_features.iter().map(|t| format!("{} ({:+.4})", t.feature, t.value)).collect();
        let _ = writeln!(body, "  strongest drivers: {}", top.join(", "));
        if c.change_events.is_empty() {
            let _ = writeln!(body, "  significant changes: none");
        } else {
            let _ = writeln!(body, "  significant changes:");
            for e in &c.change_events {
                let _ = writeln!(
                    body,
                    "    round {}: {} moved {:+.4}{}",
                    e.round,
                    e.feature,
                    e.delta,
                    e.z_magnitude.map(|z| format!(" (z = {z:.1})")).unwrap_or_default()
                );
            }
        }
    }
    PROMPT_TEMPLATE
        .replace("{{member_id}}", payload.member_id.as_str())
        .replace("{{as_of}}", &payload.as_of.to_string())
        .replace("{{feature_order_version}}", &payload.feature_order_version)
        .replace("{{categories}}", body.trim_end())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{idx, NUM_FEATURES};
    use crate::learner::CategoryModel;

    fn record(store: &mut TrajectoryStore, m: &str, c: &str, round: u64, w: [f64; NUM_FEATURES]) {
        store
            .record_snapshot(&m.into(), &c.into(), &CategoryModel { weights: w, update_count: round }, round)
            .unwrap();
    }

    #[test]
    fn single_snapshot_has_flat_trends() {
        let mut s = TrajectoryStore::default();
        record(&mut s, "m", "c", 5, [0.3; NUM_FEATURES]);
        let p = build_payload(&s, &"m".into(), 5, &PayloadConfig::default()).unwrap();
        assert_eq!(p.categories.len(), 1);
        assert!(p.categories[0].trend_slopes.iter().all(|s| s.value == 0.0));
        assert!(p.categories[0].change_events.is_empty());
    }

    #[test]
    fn linear_trend_slope_recovered() {
        let mut s = TrajectoryStore::default();
        for t in 1..=100u64 {
            let mut w = [0.0; NUM_FEATURES];
            w[idx::MPG] = 0.2 + 0.01 * t as f64;
            record(&mut s, "m", "c", t, w);
        }
        let p = build_payload(&s, &"m".into(), 100, &PayloadConfig::default()).unwrap();
        assert!((p.categories[0].slope("mpg") - 0.01).abs() < 1e-9);
        assert_eq!(p.categories[0].slope("seasonality"), 0.0);
    }

    #[test]
    fn categories_sorted_and_unknown_member_rejected() {
        let mut s = TrajectoryStore::default();
        record(&mut s, "m", "zeta", 1, [0.1; NUM_FEATURES]);
        record(&mut s, "m", "alpha", 1, [0.2; NUM_FEATURES]);
        let p = build_payload(&s, &"m".into(), 1, &PayloadConfig::default()).unwrap();
        let ids: Vec<_> = p.categories.iter().map(|c| c.category_id.as_str()).collect();
        assert_eq!(ids, ["alpha", "zeta"]);
        assert!(matches!(
            build_payload(&s, &"ghost".into(), 1, &PayloadConfig::default()),
            Err(InterpretError::UnknownMember(..))
        ));
        assert!(build_payload(&s, &"m".into(), 0, &PayloadConfig::default()).is_err());
    }

    #[test]
    fn as_of_cuts_history_and_store_untouched() {
        let mut s = TrajectoryStore::default();
        for t in 1..=10 {
            record(&mut s, "m", "c", t, [t as f64; NUM_FEATURES]);
        }
        let before = s.clone();
        let p = build_payload(&s, &"m".into(), 4, &PayloadConfig::default()).unwrap();
        assert_eq!(p.categories[0].weight("mpg"), 4.0);
        assert_eq!(p.categories[0].snapshots, 4);
        assert_eq!(s, before);
    }

    #[test]
    fn top_features_and_rank_skip_bias() {
        let mut s = TrajectoryStore::default();
        record(&mut s, "m", "c", 1, [9.0, 0.1, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let p = build_payload(&s, &"m".into(), 1, &PayloadConfig::default()).unwrap();
        let c = &p.categories[0];
        let top: Vec<_> = c.top_features.iter().map(|t| t.feature.as_str()).collect();
        assert_eq!(top, ["brand_loyalty", "mf_score", "seasonality"]);
        assert_eq!(c.magnitude_rank("brand_loyalty"), 1);
        assert_eq!(c.magnitude_rank("mpg"), 4);
    }

    #[test]
    fn prompt_embeds_labeled_fields() {
        let mut s = TrajectoryStore::default();
        record(&mut s, "m42", "dairy", 3, [0.1; NUM_FEATURES]);
        let text = render_prompt(&build_payload(&s, &"m42".into(), 3, &PayloadConfig::default()).unwrap());
        assert!(text.contains("m42"));
        assert!(text.contains("Category dairy"));
        assert!(text.contains("brand_loyalty: +0.1000"));
        assert!(!text.contains("{{"));
    }
}
