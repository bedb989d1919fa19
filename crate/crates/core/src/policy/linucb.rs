use super::{OfferCandidate, Policy, PolicyError, PolicyKind, PolicyRng, Round};
use crate::exploration::{sort_by_score, ScoredOffer};
use crate::features::NUM_FEATURES;
use crate::MemberId;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinUcbConfig {
    /// Width of the confidence bonus.
    pub alpha_explore: f64,
    /// Ridge penalty; the design matrix starts at `λ·I`.
    pub l2_lambda: f64,
}

impl Default for LinUcbConfig {
    fn default() -> Self {
        Self {
            alpha_explore: 1.0,
            l2_lambda: 1.0,
        }
    }
}

/// Shared-parameter ridge state: `A = λI + Σ xxᵀ`, `b = Σ r·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinUcbState {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub alpha_explore: f64,
    pub l2_lambda: f64,
}

impl LinUcbState {
    pub fn new(dim: usize, alpha_explore: f64, l2_lambda: f64) -> Self {
        Self {
            a: DMatrix::identity(dim, dim) * l2_lambda,
            b: DVector::zeros(dim),
            alpha_explore,
            l2_lambda,
        }
    }

    pub fn update(&mut self, x: &[f64], r: f64) {
        let x = DVector::from_column_slice(x);
        self.a.ger(1.0, &x, &x, 1.0);
        if r != 0.0 {
            self.b.axpy(r, &x, 1.0);
        }
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, PolicyError> {
        self.a
            .clone()
            .cholesky()
            .ok_or(PolicyError::NotPositiveDefinite("LinUCB design"))
    }

    /// Ridge estimate `θ̂ = A⁻¹b`.
    pub fn theta(&self) -> Result<DVector<f64>, PolicyError> {
        Ok(self.cholesky()?.solve(&self.b))
    }

    /// `(xᵀθ̂, α·√(xᵀA⁻¹x))` for each context.
    pub fn scores<'a, I>(&self, contexts: I) -> Result<Vec<(f64, f64)>, PolicyError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let chol = self.cholesky()?;
        let theta = chol.solve(&self.b);
        Ok(contexts
            .into_iter()
            .map(|x| {
                let x = DVector::from_column_slice(x);
                let mean = x.dot(&theta);
                let width = x.dot(&chol.solve(&x)).max(0.0).sqrt();
                (mean, self.alpha_explore * width)
            })
            .collect())
    }
}

/// LinUCB over the offer-level context vector.
#[derive(Debug, Clone)]
pub struct LinUcb {
    pub state: LinUcbState,
}

impl LinUcb {
    pub fn new(cfg: &LinUcbConfig) -> Result<Self, PolicyError> {
        if !(cfg.l2_lambda > 0.0) || !(cfg.alpha_explore >= 0.0) {
            return Err(PolicyError::Config(format!(
                "linucb needs l2_lambda > 0 and alpha_explore >= 0, got {cfg:?}"
            )));
        }
        Ok(Self {
            state: LinUcbState::new(NUM_FEATURES, cfg.alpha_explore, cfg.l2_lambda),
        })
    }
}

impl Policy for LinUcb {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Linucb
    }

    fn select(&self, round: &Round<'_>, _rng: &mut PolicyRng) -> Result<Vec<ScoredOffer>, PolicyError> {
        round.check()?;
        let scores = self.state.scores(round.candidates.iter().map(|c| c.flat.as_slice()))?;
        let mut out: Vec<ScoredOffer> = round
            .candidates
            .iter()
            .zip(scores)
            .map(|(c, (mean, bonus))| ScoredOffer {
                offer_id: c.offer_id.clone(),
                p: mean,
                score: mean + bonus,
            })
            .collect();
        sort_by_score(&mut out);
        Ok(out)
    }

    fn update(&mut self, _member: &MemberId, candidate: &OfferCandidate, reward: bool) -> Result<(), PolicyError> {
        self.state.update(candidate.flat.as_slice(), if reward { 1.0 } else { 0.0 });
        Ok(())
    }
}
