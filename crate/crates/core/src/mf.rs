//! Small dense alternating-least-squares factorization of member × category counts.

use crate::data::{MfScoreTable, Offer, Transaction};
use crate::{CategoryId, MemberId};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MfError {
    #[error("rank must be at least 1")]
    Rank,
    #[error("regularization must be non-negative, got {0}")]
    Lambda(f64),
    #[error("count matrix is empty")]
    Empty,
    #[error("normal equations are singular; use a positive lambda")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfConfig {
    pub rank: usize,
    pub iterations: usize,
    pub lambda: f64,
    /// Rescale written offer scores to zero mean and unit variance, so they
    /// can serve directly as a logit bias.
    pub standardize: bool,
    /// Score for (member, offer) pairs absent from the table.
    pub default_score: f64,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self {
            rank: 4,
            iterations: 50,
            lambda: 0.1,
            standardize: true,
            default_score: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// rows × rank
    pub u: DMatrix<f64>,
    /// cols × rank
    pub v: DMatrix<f64>,
}

impl Factorization {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    pub fn predict(&self, row: usize, col: usize) -> f64 {
        self.u.row(row).dot(&self.v.row(col))
    }

    /// ‖R − UVᵀ‖_F / ‖R‖_F
    pub fn relative_error(&self, r: &DMatrix<f64>) -> f64 {
        (r - self.reconstruct()).norm() / r.norm()
    }
}

/// Solves `min ‖R − UVᵀ‖² + λ(‖U‖² + ‖V‖²)` by alternating ridge solves.
/// V starts from seeded N(0, 0.1²) noise so the run is reproducible.
pub fn als(r: &DMatrix<f64>, rank: usize, iterations: usize, lambda: f64, seed: u64) -> Result<Factorization, MfError> {
    if rank == 0 {
        return Err(MfError::Rank);
    }
    if !(lambda >= 0.0) {
        return Err(MfError::Lambda(lambda));
    }
    if r.is_empty() {
        return Err(MfError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, 0.1).expect("valid normal");
    let mut v = DMatrix::from_fn(r.ncols(), rank, |_, _| init.sample(&mut rng));
    let mut u = DMatrix::zeros(r.nrows(), rank);
    let reg = DMatrix::<f64>::identity(rank, rank) * lambda;
    for _ in 0..iterations {
        u = ridge_side(r, &v, &reg)?;
        v = ridge_side(&r.transpose(), &u, &reg)?;
    }
    Ok(Factorization { u, v })
}

/// Returns X minimizing ‖R − X·Fᵀ‖² + λ‖X‖², i.e. `X = R F (FᵀF + λI)⁻¹`.
fn ridge_side(r: &DMatrix<f64>, f: &DMatrix<f64>, reg: &DMatrix<f64>) -> Result<DMatrix<f64>, MfError> {
    let gram = f.transpose() * f + reg;
    let chol = gram.cholesky().ok_or(MfError::Singular)?;
    // (FᵀF + λI) Xᵀ = Fᵀ Rᵀ
    Ok(chol.solve(&(f.transpose() * r.transpose())).transpose())
}

/// Transaction counts per (member, category), with row and column labels.
pub struct CountMatrix {
    pub members: Vec<MemberId>,
    pub categories: Vec<CategoryId>,
    pub counts: DMatrix<f64>,
}

pub fn count_matrix(transactions: &[Transaction]) -> CountMatrix {
    let members: Vec<MemberId> = transactions
        .iter()
        .map(|t| t.member_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let categories: Vec<CategoryId> = transactions
        .iter()
        .map(|t| t.category_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let row: BTreeMap<&MemberId, usize> = members.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let col: BTreeMap<&CategoryId, usize> = categories.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut counts = DMatrix::zeros(members.len(), categories.len());
    for t in transactions {
        counts[(row[&t.member_id], col[&t.category_id])] += 1.0;
    }
    CountMatrix {
        members,
        categories,
        counts,
    }
}

/// Factorizes the purchase counts and scores every (member, offer) pair as the
/// mean predicted affinity over the offer's categories. Categories never
/// purchased by anyone contribute nothing; offers with none of them are left
/// to the table default.
pub fn score_offers(
    transactions: &[Transaction],
    offers: &[Offer],
    cfg: &MfConfig,
    seed: u64,
) -> Result<(MfScoreTable, f64), MfError> {
    let m = count_matrix(transactions);
    let fact = als(&m.counts, cfg.rank, cfg.iterations, cfg.lambda, seed)?;
    let col: BTreeMap<&CategoryId, usize> = m.categories.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut raw = Vec::new();
    for (i, member) in m.members.iter().enumerate() {
        for offer in offers {
            let cols: Vec<usize> = offer.category_ids.iter().filter_map(|c| col.get(c).copied()).collect();
            if cols.is_empty() {
                continue;
            }
            let s = cols.iter().map(|&j| fact.predict(i, j)).sum::<f64>() / cols.len() as f64;
            raw.push((member.clone(), offer.offer_id.clone(), s));
        }
    }
    if cfg.standardize && raw.len() > 1 {
        let n = raw.len() as f64;
        let mean = raw.iter().map(|r| r.2).sum::<f64>() / n;
        let sd = (raw.iter().map(|r| (r.2 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        for r in &mut raw {
            r.2 = if sd > 0.0 { (r.2 - mean) / sd } else { 0.0 };
        }
    }
    let mut table = MfScoreTable::new(cfg.default_score);
    for (member, offer, s) in raw {
        table.insert(member, offer, s);
    }
    Ok((table, fact.relative_error(&m.counts)))
}
