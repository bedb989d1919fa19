use super::{OfferCandidate, Policy, PolicyError, PolicyKind, PolicyRng, Round};
use crate::exploration::{sort_by_score, ScoredOffer};
use crate::features::NUM_FEATURES;
use crate::MemberId;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThompsonConfig {
    /// Prior precision λ; `B` starts at `λ·I`.
    pub l2_lambda: f64,
    /// Posterior scale v; samples are drawn from `N(μ, v²B⁻¹)`.
    pub v: f64,
}

impl Default for ThompsonConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1.0,
            v: 0.25,
        }
    }
}

/// Gaussian posterior for linear Thompson sampling. Rewards are treated as
/// Gaussian even though clips are binary.
#[derive(Debug, Clone, PartialEq)]
pub struct ThompsonState {
    pub precision: DMatrix<f64>,
    pub f: DVector<f64>,
    pub v: f64,
}

impl ThompsonState {
    pub fn new(dim: usize, l2_lambda: f64, v: f64) -> Self {
        Self {
            precision: DMatrix::identity(dim, dim) * l2_lambda,
            f: DVector::zeros(dim),
            v,
        }
    }

    pub fn update(&mut self, x: &[f64], r: f64) {
        let x = DVector::from_column_slice(x);
        self.precision.ger(1.0, &x, &x, 1.0);
        if r != 0.0 {
            self.f.axpy(r, &x, 1.0);
        }
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, PolicyError> {
        self.precision
            .clone()
            .cholesky()
            .ok_or(PolicyError::NotPositiveDefinite("Thompson precision"))
    }

    pub fn mean(&self) -> Result<DVector<f64>, PolicyError> {
        Ok(self.cholesky()?.solve(&self.f))
    }

    /// One draw `θ̃ = μ + v·L⁻ᵀz` with `B = LLᵀ` and `z ~ N(0, I)`.
    ///
    /// Always consumes exactly `dim` normals, even when `v = 0`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>, PolicyError> {
        let chol = self.cholesky()?;
        let mu = chol.solve(&self.f);
        let z = DVector::from_iterator(mu.len(), (0..mu.len()).map(|_| StandardNormal.sample(rng)));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or(PolicyError::NotPositiveDefinite("Thompson precision"))?;
        Ok(mu + noise * self.v)
    }
}

/// Linear Thompson sampling over the offer-level context vector.
#[derive(Debug, Clone)]
pub struct LinearThompson {
    pub state: ThompsonState,
}

impl LinearThompson {
    pub fn new(cfg: &ThompsonConfig) -> Result<Self, PolicyError> {
        if !(cfg.l2_lambda > 0.0) || !(cfg.v >= 0.0) {
            return Err(PolicyError::Config(format!("ts needs l2_lambda > 0 and v >= 0, got {cfg:?}")));
        }
        Ok(Self {
            state: ThompsonState::new(NUM_FEATURES, cfg.l2_lambda, cfg.v),
        })
    }
}

impl Policy for LinearThompson {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Ts
    }

    fn select(&self, round: &Round<'_>, rng: &mut PolicyRng) -> Result<Vec<ScoredOffer>, PolicyError> {
        round.check()?;
        let mu = self.state.mean()?;
        let theta = self.state.sample(rng)?;
        let mut out: Vec<ScoredOffer> = round
            .candidates
            .iter()
            .map(|c| {
                let x = DVector::from_column_slice(c.flat.as_slice());
                ScoredOffer {
                    offer_id: c.offer_id.clone(),
                    p: x.dot(&mu),
                    score: x.dot(&theta),
                }
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
