use super::{CategoryModel, LearnerConfig, LearnerError};
use crate::features::{ContextVector, RunningScaler, FEATURE_NAMES, FEATURE_ORDER_VERSION, NUM_FEATURES};
use crate::util::write_jsonl;
use crate::{CategoryId, MemberId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// All (member, category) models plus the prior new pairs start from.
///
/// Pairs are materialised on first update; reads of an absent pair see the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStore {
    models: BTreeMap<(MemberId, CategoryId), CategoryModel>,
    prior: CategoryModel,
}

impl ModelStore {
    pub fn new(prior: CategoryModel) -> Self {
        Self {
            models: BTreeMap::new(),
            prior,
        }
    }

    pub fn from_config(cfg: &LearnerConfig) -> Self {
        Self::new(cfg.prior_model())
    }

    pub fn prior(&self) -> &CategoryModel {
        &self.prior
    }

    pub fn get(&self, member: &MemberId, category: &CategoryId) -> &CategoryModel {
        self.models
            .get(&(member.clone(), category.clone()))
            .unwrap_or(&self.prior)
    }

    pub fn contains(&self, member: &MemberId, category: &CategoryId) -> bool {
        self.models.contains_key(&(member.clone(), category.clone()))
    }

    pub fn predict(&self, member: &MemberId, category: &CategoryId, x: &ContextVector) -> f64 {
        self.get(member, category).predict(x)
    }

    pub fn update(
        &mut self,
        member: &MemberId,
        category: &CategoryId,
        x: &ContextVector,
        y: bool,
        cfg: &LearnerConfig,
    ) -> Result<&CategoryModel, LearnerError> {
        let prior = self.prior;
        let model = self
            .models
            .entry((member.clone(), category.clone()))
            .or_insert(prior);
        model.sgd_update(x, y, cfg)?;
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(MemberId, CategoryId), &CategoryModel)> {
        self.models.iter()
    }

    pub fn insert(&mut self, member: MemberId, category: CategoryId, model: CategoryModel) {
        self.models.insert((member, category), model);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub feature_order_version: String,
    pub feature_order: Vec<String>,
    pub learner: LearnerConfig,
    pub scaler: RunningScaler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub member_id: MemberId,
    pub category_id: CategoryId,
    pub weights: [f64; NUM_FEATURES],
    pub update_count: u64,
}

/// A model store together with the scaler state it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub store: ModelStore,
    pub learner: LearnerConfig,
    pub scaler: RunningScaler,
}

/// Writes a header line with the learner and scaler state, then one line per model.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> std::io::Result<()> {
    let header = CheckpointHeader {
        feature_order_version: FEATURE_ORDER_VERSION.into(),
        feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        learner: ckpt.learner.clone(),
        scaler: ckpt.scaler.clone(),
    };
    let header = serde_json::to_value(header)?;
    let records: Vec<CheckpointRecord> = ckpt
        .store
        .iter()
        .map(|((m, c), model)| CheckpointRecord {
            member_id: m.clone(),
            category_id: c.clone(),
            weights: model.weights,
            update_count: model.update_count,
        })
        .collect();
    write_jsonl(path, Some(&header), &records)
}

pub fn read_checkpoint(path: &Path) -> std::io::Result<Checkpoint> {
    let invalid = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header: CheckpointHeader = match lines.next() {
        Some(l) => serde_json::from_str(&l?)?,
        None => return Err(invalid("empty checkpoint".into())),
    };
    if header.feature_order_version != FEATURE_ORDER_VERSION {
        return Err(invalid(format!(
            "checkpoint feature order {} does not match {}",
            header.feature_order_version, FEATURE_ORDER_VERSION
        )));
    }
    let mut store = ModelStore::from_config(&header.learner);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: CheckpointRecord = serde_json::from_str(&line)?;
        store.insert(
            r.member_id,
            r.category_id,
            CategoryModel {
                weights: r.weights,
                update_count: r.update_count,
            },
        );
    }
    Ok(Checkpoint {
        store,
        learner: header.learner,
        scaler: header.scaler,
    })
}
