use super::InterpretError;
use crate::features::{FEATURE_NAMES, FEATURE_ORDER_VERSION, NUM_FEATURES};
use crate::learner::CategoryModel;
use crate::util::write_jsonl;
use crate::{CategoryId, MemberId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// Weights of one (member, category) model at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub round: u64,
    pub member_id: MemberId,
    pub category_id: CategoryId,
    pub weights: [f64; NUM_FEATURES],
    pub update_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct PairTrajectory {
    calls: u64,
    last_round: Option<u64>,
    snapshots: Vec<WeightSnapshot>,
}

/// Append-only weight history per (member, category), optionally thinned to every n-th call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStore {
    every: u64,
    pairs: BTreeMap<(MemberId, CategoryId), PairTrajectory>,
}

impl Default for TrajectoryStore {
    fn default() -> Self {
        Self::new(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrajectoryHeader {
    feature_order_version: String,
    feature_order: Vec<String>,
}

impl TrajectoryStore {
    /// `every = n` keeps calls n, 2n, 3n, … for each pair.
    pub fn new(every: u64) -> Self {
        Self {
            every: every.max(1),
            pairs: BTreeMap::new(),
        }
    }

    /// Records the model's weights at `round`. Returns whether a snapshot was kept.
    ///
    /// Rounds must strictly increase per pair, thinned calls included.
    pub fn record_snapshot(
        &mut self,
        member: &MemberId,
        category: &CategoryId,
        model: &CategoryModel,
        round: u64,
    ) -> Result<bool, InterpretError> {
        let traj = self.pairs.entry((member.clone(), category.clone())).or_default();
        if let Some(last) = traj.last_round {
            if round <= last {
                return Err(InterpretError::TimeRegression {
                    member: member.clone(),
                    category: category.clone(),
                    last,
                    round,
                });
            }
        }
        traj.last_round = Some(round);
        traj.calls += 1;
        if traj.calls % self.every != 0 {
            return Ok(false);
        }
        traj.snapshots.push(WeightSnapshot {
            round,
            member_id: member.clone(),
            category_id: category.clone(),
            weights: model.weights,
            update_count: model.update_count,
        });
        Ok(true)
    }

    pub fn trajectory(&self, member: &MemberId, category: &CategoryId) -> &[WeightSnapshot] {
        self.pairs
            .get(&(member.clone(), category.clone()))
            .map(|t| t.snapshots.as_slice())
            .unwrap_or(&[])
    }

    /// Categories with at least one snapshot for `member`, in id order.
    pub fn categories_of(&self, member: &MemberId) -> Vec<CategoryId> {
        self.pairs
            .iter()
            .filter(|((m, _), t)| m == member && !t.snapshots.is_empty())
            .map(|((_, c), _)| c.clone())
            .collect()
    }

    pub fn members(&self) -> Vec<MemberId> {
        let mut v: Vec<MemberId> = self.pairs.keys().map(|(m, _)| m.clone()).collect();
        v.dedup();
        v
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &WeightSnapshot> {
        self.pairs.values().flat_map(|t| t.snapshots.iter())
    }

    pub fn len(&self) -> usize {
        self.pairs.values().map(|t| t.snapshots.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// JSONL: a feature-order header line, then snapshots grouped by pair in round order.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let header = serde_json::to_value(TrajectoryHeader {
            feature_order_version: FEATURE_ORDER_VERSION.into(),
            feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        })?;
        write_jsonl(path, Some(&header), self.snapshots())
    }

    pub fn read(path: &Path) -> Result<Self, InterpretError> {
        let io = |e: std::io::Error| InterpretError::Io(e.to_string());
        let mut lines = BufReader::new(File::open(path).map_err(io)?).lines();
        let header: TrajectoryHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l.map_err(io)?).map_err(|e| InterpretError::Io(e.to_string()))?,
            None => return Err(InterpretError::Io(format!("{}: empty trajectory file", path.display()))),
        };
        if header.feature_order_version != FEATURE_ORDER_VERSION {
            return Err(InterpretError::Io(format!(
                "trajectory feature order {} does not match {}",
                header.feature_order_version, FEATURE_ORDER_VERSION
            )));
        }
        let mut store = Self::new(1);
        for line in lines {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let s: WeightSnapshot = serde_json::from_str(&line).map_err(|e| InterpretError::Io(e.to_string()))?;
            let model = CategoryModel {
                weights: s.weights,
                update_count: s.update_count,
            };
            store.record_snapshot(&s.member_id, &s.category_id, &model, s.round)?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(v: f64) -> CategoryModel {
        CategoryModel {
            weights: [v; NUM_FEATURES],
            update_count: 1,
        }
    }

    #[test]
    fn snapshots_kept_in_order_and_regressions_rejected() {
        let mut s = TrajectoryStore::default();
        let (m, c) = ("m".into(), "c".into());
        assert!(s.record_snapshot(&m, &c, &model(0.1), 1).unwrap());
        assert!(s.record_snapshot(&m, &c, &model(0.2), 2).unwrap());
        let rounds: Vec<u64> = s.trajectory(&m, &c).iter().map(|x| x.round).collect();
        assert_eq!(rounds, [1, 2]);

        let mut s = TrajectoryStore::default();
        s.record_snapshot(&m, &c, &model(0.1), 2).unwrap();
        assert!(matches!(
            s.record_snapshot(&m, &c, &model(0.1), 1),
            Err(InterpretError::TimeRegression { last: 2, round: 1, .. })
        ));
        assert!(s.record_snapshot(&m, &c, &model(0.1), 2).is_err());
    }

    #[test]
    fn thinning_keeps_every_nth() {
        let mut s = TrajectoryStore::new(10);
        let (m, c) = ("m".into(), "c".into());
        let kept = (1..=100)
            .filter(|&t| s.record_snapshot(&m, &c, &model(t as f64), t).unwrap())
            .count();
        assert_eq!(kept, 10);
        assert_eq!(s.trajectory(&m, &c).len(), 10);
        assert_eq!(s.trajectory(&m, &c)[0].round, 10);
    }

    #[test]
    fn file_round_trip() {
        let mut s = TrajectoryStore::default();
        for t in 1..5 {
            s.record_snapshot(&"m2".into(), &"c1".into(), &model(t as f64 * 0.1), t).unwrap();
            s.record_snapshot(&"m1".into(), &"c9".into(), &model(-(t as f64)), t).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.jsonl");
        s.write(&p).unwrap();
        assert_eq!(TrajectoryStore::read(&p).unwrap(), s);
        let first = std::fs::read_to_string(&p).unwrap();
        assert!(first.lines().next().unwrap().contains("brand_loyalty"));
        assert_eq!(s.members(), vec![MemberId::from("m1"), MemberId::from("m2")]);
    }
}
