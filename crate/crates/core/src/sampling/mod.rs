//! Adaptive user sampling and training-time candidate selection.
//!
//! Three stages produce the user multiset that drives instruction
//! generation: importance-aware draws (`U₁`, probability ∝ ln of the user's
//! interaction count), cluster-proportional draws (`U₂`, probability ∝ size of
//! the user's k-means cluster), and a repetition-penalized resample of
//! `U₃ = U₁ + U₂` with weights `C^{M₃(u)}`.

mod candidates;
mod cluster;
mod importance;
mod multiset;
mod penalty;

use rand::distributions::{Distribution, WeightedIndex};
use thiserror::Error;

use crate::corpus::{SplitDataset, UserIdx};
use crate::num::Real;
use crate::seed;

pub use candidates::{select_training_candidates, CandidateEntry, CandidateLabel, Composition, TrainingCandidateSet};
pub use cluster::{cluster_users, MAX_LLOYD_ITERATIONS};
pub use importance::{importance_probabilities, importance_sampling, importance_weights, ImportanceWeights};
pub use multiset::{read_multiset, write_multiset, SamplingReport, UserMultiset};
pub use penalty::{penalty_probabilities, penalty_resampling, proportional_resampling};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("invalid sampling configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot form {k} clusters from {users} users")]
    TooManyClusters { k: usize, users: usize },
    #[error("no users eligible for sampling")]
    NoEligibleUsers,
    #[error("user {user} has only {available} eligible negative items, {needed} needed")]
    NoEligibleNegatives { user: String, available: usize, needed: usize },
    #[error("unknown user index {0}")]
    UnknownUser(UserIdx),
    #[error("malformed multiset file: {0}")]
    Format(String),
}

pub type Result<T, E = SamplingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    /// Draws per strategy; also the size of the final multiset.
    pub n_target: usize,
    /// Number of k-means clusters.
    pub clusters: usize,
    /// Penalty base `C`, strictly between 0 and 1.
    pub penalty_base: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { n_target: 5000, clusters: 10, penalty_base: 0.92, seed: 0 }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_target == 0 {
            return Err(SamplingError::InvalidConfig("n_target must be at least 1".into()));
        }
        if self.clusters == 0 {
            return Err(SamplingError::InvalidConfig("cluster count must be at least 1".into()));
        }
        if !(self.penalty_base > 0.0 && self.penalty_base < 1.0) {
            return Err(SamplingError::InvalidConfig("penalty base must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Draws `n` users with replacement from `(user, probability)` pairs.
pub(crate) fn draw<T: Real>(probabilities: &[(UserIdx, T)], n: usize, seed: u64) -> Result<UserMultiset> {
    if probabilities.is_empty() {
        return Err(SamplingError::NoEligibleUsers);
    }
    let weights: Vec<f64> = probabilities.iter().map(|(_, p)| p.to_f64_lossy()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| SamplingError::InvalidConfig(e.to_string()))?;
    let mut rng = seed::rng(seed);
    Ok(UserMultiset::from_draws((0..n).map(|_| probabilities[dist.sample(&mut rng)].0)))
}

/// All intermediate multisets of one sampling run.
#[derive(Debug, Clone)]
pub struct SamplingOutcome {
    pub importance: UserMultiset,
    pub clustering: UserMultiset,
    pub combined: UserMultiset,
    pub selected: UserMultiset,
    pub assignments: Vec<usize>,
    pub excluded_users: usize,
}

/// Runs importance and clustering sampling, sums them and applies the
/// repetition penalty. `embeddings` has one row per train user.
pub fn sample_users<T: Real>(
    split: &SplitDataset,
    embeddings: &[Vec<T>],
    cfg: &SamplingConfig,
) -> Result<SamplingOutcome> {
    cfg.validate()?;
    let weights = importance_weights::<T>(&split.train);
    let importance = importance_sampling(&weights, cfg.n_target, seed::derive(cfg.seed, "importance"))?;
    let assignments = cluster_users(embeddings, cfg.clusters, seed::derive(cfg.seed, "kmeans"))?;
    let clustering = cluster_sampling_from(&assignments, cfg.n_target, seed::derive(cfg.seed, "clustering"))?;
    let combined = &importance + &clustering;
    let selected =
        penalty_resampling(&combined, cfg.n_target, T::lit(cfg.penalty_base), seed::derive(cfg.seed, "penalty"))?;
    Ok(SamplingOutcome { importance, clustering, combined, selected, assignments, excluded_users: weights.excluded })
}

fn cluster_sampling_from(assignments: &[usize], n: usize, seed: u64) -> Result<UserMultiset> {
    clustering_sampling::<f64>(assignments, n, seed)
}

/// `p_u = |cluster(u)| / Σ_v |cluster(v)|` for every user in `assignments`.
pub fn clustering_probabilities<T: Real>(assignments: &[usize]) -> Vec<(UserIdx, T)> {
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &c in assignments {
        sizes[c] += 1;
    }
    let total: usize = assignments.iter().map(|&c| sizes[c]).sum();
    let total = T::from_usize_exact(total);
    assignments.iter().enumerate().map(|(u, &c)| (u, T::from_usize_exact(sizes[c]) / total)).collect()
}

pub fn clustering_sampling<T: Real>(assignments: &[usize], n: usize, seed: u64) -> Result<UserMultiset> {
    draw(&clustering_probabilities::<T>(assignments), n, seed)
}
