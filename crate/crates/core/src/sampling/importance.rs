use std::collections::BTreeMap;

use log::warn;

use super::{draw, Result, UserMultiset};
use crate::corpus::{Dataset, UserIdx};
use crate::num::Real;

/// `w_u = ln q_u` for every user with at least two train interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights<T> {
    pub weights: BTreeMap<UserIdx, T>,
    /// Users left out because `q_u ≤ 1` makes the weight zero.
    pub excluded: usize,
}

pub fn importance_weights<T: Real>(train: &Dataset) -> ImportanceWeights<T> {
    let mut weights = BTreeMap::new();
    let mut excluded = 0;
    for u in 0..train.n_users() {
        let q = train.user_ratings(u).len();
        if q <= 1 {
            excluded += 1;
            continue;
        }
        weights.insert(u, T::from_usize_exact(q).ln());
    }
    if excluded > 0 {
        warn!("importance sampling: excluded {excluded} users with at most one interaction");
    }
    ImportanceWeights { weights, excluded }
}

/// `p_u = w_u / Σ_v w_v`.
pub fn importance_probabilities<T: Real>(weights: &ImportanceWeights<T>) -> Vec<(UserIdx, T)> {
    let total: T = weights.weights.values().copied().sum();
    weights.weights.iter().map(|(&u, &w)| (u, w / total)).collect()
}

/// `n` independent draws with replacement under the importance distribution.
pub fn importance_sampling<T: Real>(weights: &ImportanceWeights<T>, n: usize, seed: u64) -> Result<UserMultiset> {
    draw(&importance_probabilities(weights), n, seed)
}
