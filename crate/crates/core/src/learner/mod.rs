//! Online logistic models per (member, category) and their aggregation to offers.

mod aggregate;
mod backfit;
mod store;

pub use aggregate::{aggregate_offer, logit, PROB_CLAMP};
pub use backfit::{backfit, BackfitReport, LabeledExample};
pub use store::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointRecord, ModelStore};

use crate::features::{ContextVector, NUM_FEATURES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("learning_rate must be positive, got {0}")]
    LearningRate(f64),
    #[error("positive_boost must be >= 1, got {0}")]
    Boost(f64),
    #[error("l2_lambda must be non-negative, got {0}")]
    L2(f64),
    #[error("prior_weights must have {expected} finite entries")]
    Prior { expected: usize },
    #[error("update produced non-finite weight {index} ({value}); learning rate too large?")]
    NonFinite { index: usize, value: f64 },
    #[error("offer has no categories to aggregate")]
    EmptyOffer,
    #[error("examples are not in timestamp order at position {0}")]
    Unsorted(usize),
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// SGD step size η.
    pub learning_rate: f64,
    /// Multiplier α ≥ 1 on steps taken for positive (clipped) samples.
    pub positive_boost: f64,
    /// Coefficient on the MF score when it enters the offer logit.
    pub mf_bias_coeff: f64,
    /// Optional L2 shrinkage; each step adds `-η·λ·w`.
    pub l2_lambda: f64,
    /// Initial weights for every new (member, category) model; zeros when absent.
    pub prior_weights: Option<Vec<f64>>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            positive_boost: 2.0,
            mf_bias_coeff: 1.0,
            l2_lambda: 0.0,
            prior_weights: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnerError::LearningRate(self.learning_rate));
        }
        if !(self.positive_boost >= 1.0 && self.positive_boost.is_finite()) {
            return Err(LearnerError::Boost(self.positive_boost));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(LearnerError::L2(self.l2_lambda));
        }
        if let Some(p) = &self.prior_weights {
            if p.len() != NUM_FEATURES || p.iter().any(|v| !v.is_finite()) {
                return Err(LearnerError::Prior {
                    expected: NUM_FEATURES,
                });
            }
        }
        Ok(())
    }

    pub fn prior_model(&self) -> CategoryModel {
        let mut m = CategoryModel::default();
        if let Some(p) = &self.prior_weights {
            m.weights.copy_from_slice(p);
        }
        m
    }
}

/// Logistic weight vector for one (member, category) pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryModel {
    pub weights: [f64; NUM_FEATURES],
    pub update_count: u64,
}

impl CategoryModel {
    pub fn with_weights(weights: [f64; NUM_FEATURES]) -> Self {
        Self {
            weights,
            update_count: 0,
        }
    }

    pub fn logit(&self, x: &ContextVector) -> f64 {
        x.dot(&self.weights)
    }

    /// Clip probability σ(wᵀx).
    pub fn predict(&self, x: &ContextVector) -> f64 {
        sigmoid(self.logit(x))
    }

    /// The weight increment one SGD step on (x, y) would apply.
    ///
    /// `η(y − σ(wᵀx))x`, scaled by the positive boost when `y` is a clip,
    /// minus `η·λ·w` when L2 shrinkage is enabled.
    pub fn sgd_step(&self, x: &ContextVector, y: bool, cfg: &LearnerConfig) -> [f64; NUM_FEATURES] {
        let target = if y { 1.0 } else { 0.0 };
        let mut scale = cfg.learning_rate * (target - self.predict(x));
        if y {
            scale *= cfg.positive_boost;
        }
        let shrink = cfg.learning_rate * cfg.l2_lambda;
        let mut step = [0.0; NUM_FEATURES];
        for ((s, xi), wi) in step.iter_mut().zip(&x.values).zip(&self.weights) {
            *s = scale * xi;
            if shrink != 0.0 {
                *s -= shrink * wi;
            }
        }
        step
    }

    /// Applies one SGD step in place. On a non-finite result the model is left unchanged.
    pub fn sgd_update(&mut self, x: &ContextVector, y: bool, cfg: &LearnerConfig) -> Result<(), LearnerError> {
        let step = self.sgd_step(x, y, cfg);
        let mut next = self.weights;
        for (i, (w, s)) in next.iter_mut().zip(step).enumerate() {
            *w += s;
            if !w.is_finite() {
                return Err(LearnerError::NonFinite { index: i, value: *w });
            }
        }
        self.weights = next;
        self.update_count += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e1() -> ContextVector {
        ContextVector::from_features([0.0; NUM_FEATURES - 1]).unwrap()
    }

    fn cfg(eta: f64, alpha: f64) -> LearnerConfig {
        LearnerConfig {
            learning_rate: eta,
            positive_boost: alpha,
            ..LearnerConfig::default()
        }
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((1.0 - sigmoid(50.0)).abs() <= 1e-15);
        assert!((sigmoid(1.0) - 0.7310585786300049).abs() < 1e-15);
        assert!(sigmoid(-700.0) > 0.0);
        assert!(sigmoid(700.0) <= 1.0 && sigmoid(-745.0).is_finite());
    }

    #[test]
    fn predict_examples() {
        let x = ContextVector::from_features([0.3, -2.0, 1.0, 0.0, 5.0, 0.1, 2.0, -0.4]).unwrap();
        assert_eq!(CategoryModel::default().predict(&x), 0.5);
        let mut w = [0.0; NUM_FEATURES];
        w[0] = 2.0;
        assert!((CategoryModel::with_weights(w).predict(&x) - 0.8807970779778823).abs() < 1e-15);
        let w: [f64; NUM_FEATURES] = [0.1, -0.2, 0.3, 0.05, 0.0, 0.7, -0.1, 0.2, 0.4];
        let w2 = w.map(|v| 2.0 * v);
        let m = CategoryModel::with_weights(w);
        assert_eq!(CategoryModel::with_weights(w2).predict(&x), sigmoid(2.0 * m.logit(&x)));
    }

    #[test]
    fn sgd_examples() {
        let mut m = CategoryModel::default();
        m.sgd_update(&e1(), true, &cfg(0.1, 1.0)).unwrap();
        assert!((m.weights[0] - 0.05).abs() < 1e-17);
        assert_eq!(m.update_count, 1);

        let mut m = CategoryModel::default();
        m.sgd_update(&e1(), true, &cfg(0.1, 2.0)).unwrap();
        assert!((m.weights[0] - 0.10).abs() < 1e-16);

        let mut m = CategoryModel::default();
        m.sgd_update(&e1(), false, &cfg(0.1, 2.0)).unwrap();
        assert!((m.weights[0] + 0.05).abs() < 1e-17);
        assert!(m.weights[1..].iter().all(|w| *w == 0.0));
    }

    #[test]
    fn l2_shrinks_toward_zero() {
        let mut c = cfg(0.1, 1.0);
        c.l2_lambda = 0.5;
        let mut w = [0.0; NUM_FEATURES];
        w[3] = 1.0;
        let m = CategoryModel::with_weights(w);
        let step = m.sgd_step(&e1(), false, &c);
        assert!((step[3] + 0.05).abs() < 1e-17);
    }

    #[test]
    fn blow_up_is_reported_and_model_untouched() {
        let x = ContextVector::from_features([1e300; NUM_FEATURES - 1]).unwrap();
        let mut m = CategoryModel::default();
        let err = m.sgd_update(&x, true, &cfg(1e300, 1.0)).unwrap_err();
        assert!(matches!(err, LearnerError::NonFinite { .. }));
        assert_eq!(m, CategoryModel::default());
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig::default().validate().is_ok());
        assert_eq!(cfg(0.0, 2.0).validate(), Err(LearnerError::LearningRate(0.0)));
        assert_eq!(cfg(0.1, 0.5).validate(), Err(LearnerError::Boost(0.5)));
        let mut c = LearnerConfig::default();
        c.prior_weights = Some(vec![0.0; 3]);
        assert!(matches!(c.validate(), Err(LearnerError::Prior { .. })));
    }

    proptest! {
        #[test]
        fn repeated_clips_raise_the_prediction(
            f in prop::array::uniform8(-3.0f64..3.0),
            eta in 0.001f64..0.5,
            alpha in 1.0f64..4.0,
        ) {
            let x = ContextVector::from_features(f).unwrap();
            let c = cfg(eta, alpha);
            let mut m = CategoryModel::default();
            let mut last = m.predict(&x);
            for _ in 0..20 {
                m.sgd_update(&x, true, &c).unwrap();
                let p = m.predict(&x);
                prop_assert!(p >= last);
                last = p;
            }
        }
    }
}
