//! Matrix-factorization retrieval models.
//!
//! Two trainers share one [`FactorModel`] representation: an explicit rating
//! model (biased MF fitted by SGD on squared error) used for rating hints, and
//! an implicit ranking model (pairwise BPR with sampled negatives) used as the
//! candidate-retrieval backbone.

mod io;
mod ranking;
mod rating;

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use thiserror::Error;

use crate::corpus::{Dataset, ItemIdx, UserIdx};
use crate::num::Real;
use crate::seed;

pub use io::{read_candidates, read_model, write_candidates, write_model};
pub use ranking::train_ranking_mf;
pub use rating::{sample_loss, squared_error_gradient, train_rating_mf, Gradient};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rating,
    Ranking,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rating => "rating",
            ModelKind::Ranking => "ranking",
        }
    }
}

/// Training hyper-parameters shared by both trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct MfConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    /// Sampled negatives per positive (ranking model only).
    pub negatives: usize,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self { dim: 64, learning_rate: 0.01, regularization: 0.02, epochs: 30, negatives: 4, seed: 0 }
    }
}

impl MfConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(RetrievalError::InvalidConfig("latent dimension must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(RetrievalError::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(RetrievalError::InvalidConfig("regularization must be non-negative".into()));
        }
        Ok(())
    }
}

/// Latent-factor model over a fixed user and item index.
#[derive(Debug, Clone)]
pub struct FactorModel<T> {
    pub(crate) kind: ModelKind,
    pub(crate) dim: usize,
    pub(crate) users: Vec<String>,
    pub(crate) items: Vec<String>,
    pub(crate) user_lookup: HashMap<String, UserIdx>,
    pub(crate) item_lookup: HashMap<String, ItemIdx>,
    /// Row-major `users × dim`.
    pub(crate) user_factors: Vec<T>,
    /// Row-major `items × dim`.
    pub(crate) item_factors: Vec<T>,
    pub(crate) user_bias: Vec<T>,
    pub(crate) item_bias: Vec<T>,
    pub(crate) global_mean: T,
    pub(crate) scale_max: u32,
    pub(crate) seed: u64,
    pub(crate) loss_history: Vec<f64>,
}

impl<T: Real> FactorModel<T> {
    /// Zero factors and biases; the global mean is the mean train rating for
    /// rating models and zero for ranking models.
    pub(crate) fn zeroed(train: &Dataset, kind: ModelKind, dim: usize, seed: u64) -> Self {
        let n_users = train.n_users();
        let n_items = train.n_items();
        let global_mean = match kind {
            ModelKind::Rating if train.n_interactions() > 0 => {
                let sum: f64 = train.ratings().iter().map(|r| r.rating).sum();
                T::lit(sum / train.n_interactions() as f64)
            }
            _ => T::zero(),
        };
        let users = train.users().to_vec();
        let items = train.items().to_vec();
        Self {
            kind,
            dim,
            user_lookup: users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect(),
            item_lookup: items.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect(),
            users,
            items,
            user_factors: vec![T::zero(); n_users * dim],
            item_factors: vec![T::zero(); n_items * dim],
            user_bias: vec![T::zero(); n_users],
            item_bias: vec![T::zero(); n_items],
            global_mean,
            scale_max: train.scale().max(),
            seed,
            loss_history: Vec::new(),
        }
    }

    /// Draws every factor from `uniform(-0.01, 0.01)`.
    pub(crate) fn randomize_factors(&mut self, seed: u64) {
        let mut rng = seed::rng(seed::derive(seed, "mf-init"));
        for v in self.user_factors.iter_mut().chain(self.item_factors.iter_mut()) {
            *v = T::lit(rng.gen_range(-0.01..0.01));
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn global_mean(&self) -> T {
        self.global_mean
    }

    pub fn user_bias(&self) -> &[T] {
        &self.user_bias
    }

    pub fn item_bias(&self) -> &[T] {
        &self.item_bias
    }

    /// Mean training loss per epoch, in order.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn user_index(&self, user: &str) -> Option<UserIdx> {
        self.user_lookup.get(user).copied()
    }

    pub fn item_index(&self, item: &str) -> Option<ItemIdx> {
        self.item_lookup.get(item).copied()
    }

    pub fn user_row(&self, u: UserIdx) -> &[T] {
        &self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_row(&self, i: ItemIdx) -> &[T] {
        &self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn dot(&self, u: UserIdx, i: ItemIdx) -> T {
        self.user_row(u).iter().zip(self.item_row(i)).map(|(&a, &b)| a * b).sum()
    }

    /// Raw model score used for retrieval. Rating models score with the full
    /// unclamped prediction; ranking models with `item_bias + p_u · q_i`.
    pub fn score(&self, u: UserIdx, i: ItemIdx) -> T {
        match self.kind {
            ModelKind::Rating => self.global_mean + self.user_bias[u] + self.item_bias[i] + self.dot(u, i),
            ModelKind::Ranking => self.item_bias[i] + self.dot(u, i),
        }
    }

    /// Rating prediction clamped to `[1, scale_max]`. Unknown users or items
    /// drop their bias and the interaction term. Intended for rating models.
    pub fn predict_rating_idx(&self, u: Option<UserIdx>, i: Option<ItemIdx>) -> T {
        let mut p = self.global_mean;
        if let Some(u) = u {
            p = p + self.user_bias[u];
        }
        if let Some(i) = i {
            p = p + self.item_bias[i];
        }
        if let (Some(u), Some(i)) = (u, i) {
            p = p + self.dot(u, i);
        }
        let hi = T::from_u32(self.scale_max).unwrap_or_else(T::one);
        p.max(T::one()).min(hi)
    }

    pub fn predict_rating(&self, user: &str, item: &str) -> T {
        self.predict_rating_idx(self.user_index(user), self.item_index(item))
    }

    /// The user factor matrix, one row per user in index order.
    pub fn user_embeddings(&self) -> Vec<Vec<T>> {
        (0..self.n_users()).map(|u| self.user_row(u).to_vec()).collect()
    }
}

/// Top-k′ retrieval result for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList<T> {
    pub user: UserIdx,
    pub items: Vec<ItemIdx>,
    pub scores: Vec<T>,
}

impl<T> CandidateList<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// True when the user has no eligible items left.
    pub fn is_degenerate(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based retrieval position of `item`.
    pub fn position(&self, item: ItemIdx) -> Option<usize> {
        self.items.iter().position(|&i| i == item).map(|p| p + 1)
    }
}

/// The `k_prime` highest-scoring items the user has not interacted with in
/// `train`, by descending score with ties broken by ascending item index.
pub fn top_candidates<T: Real>(
    model: &FactorModel<T>,
    train: &Dataset,
    user: UserIdx,
    k_prime: usize,
) -> CandidateList<T> {
    let seen: BTreeSet<ItemIdx> = train.user_ratings(user).iter().map(|r| r.item).collect();
    let mut scored: Vec<(ItemIdx, T)> =
        (0..model.n_items()).filter(|i| !seen.contains(i)).map(|i| (i, model.score(user, i))).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    scored.truncate(k_prime);
    let (items, scores) = scored.into_iter().unzip();
    CandidateList { user, items, scores }
}

pub fn user_embeddings<T: Real>(model: &FactorModel<T>) -> Vec<Vec<T>> {
    model.user_embeddings()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Catalog, Interaction, RatingScale};
    use proptest::prelude::*;

    fn toy(rows: &[(&str, &str, f64)]) -> Dataset {
        let data = rows.iter().enumerate().map(|(t, (u, i, r))| Interaction::new(*u, *i, *r, t as i64)).collect();
        Dataset::new(data, &Catalog::new(), RatingScale::new(5).unwrap()).unwrap()
    }

    #[test]
    fn prediction_fallbacks_and_clamp() {
        let ds = toy(&[("u", "a", 3.0), ("v", "b", 4.0)]);
        let mut m = FactorModel::<f64>::zeroed(&ds, ModelKind::Rating, 2, 0);
        m.global_mean = 3.5;
        assert_eq!(m.predict_rating("u", "a"), 3.5);
        m.item_bias[0] = 0.4;
        assert!((m.predict_rating("stranger", "a") - 3.9).abs() < 1e-12);
        m.global_mean = 6.2;
        assert_eq!(m.predict_rating("u", "a"), 5.0);
        m.global_mean = -3.0;
        assert_eq!(m.predict_rating("nobody", "nothing"), 1.0);
    }

    #[test]
    fn candidates_skip_train_items_and_flag_degenerate() {
        let ds = toy(&[("u", "a", 3.0), ("u", "b", 4.0), ("v", "c", 4.0)]);
        let m = FactorModel::<f64>::zeroed(&ds, ModelKind::Ranking, 2, 0);
        let c = top_candidates(&m, &ds, 0, 10);
        assert_eq!(c.items, vec![2]);
        let full = toy(&[("u", "a", 3.0), ("u", "b", 4.0)]);
        let m = FactorModel::<f64>::zeroed(&full, ModelKind::Ranking, 2, 0);
        assert!(top_candidates(&m, &full, 0, 10).is_degenerate());
    }

    #[test]
    fn embeddings_shape() {
        let ds = toy(&[("u", "a", 3.0), ("v", "b", 4.0)]);
        let m = FactorModel::<f32>::zeroed(&ds, ModelKind::Ranking, 8, 0);
        let e = user_embeddings(&m);
        assert_eq!(e.len(), 2);
        assert!(e.iter().all(|row| row.len() == 8 && row.iter().all(|&x| x == 0.0)));
    }

    proptest! {
        #[test]
        fn top_candidates_match_brute_force(
            scores in proptest::collection::vec(-3i32..3, 12),
            seen in proptest::collection::btree_set(0usize..12, 0..12),
            k in 1usize..14,
        ) {
            let mut rows: Vec<(String, String, f64)> = seen.iter().map(|i| ("u".to_string(), i.to_string(), 3.0)).collect();
            rows.push(("v".into(), "0".into(), 3.0));
            for i in 0..12 {
                rows.push(("w".into(), i.to_string(), 3.0));
            }
            let data = rows.iter().enumerate().map(|(t, (u, i, r))| Interaction::new(u.clone(), i.clone(), *r, t as i64)).collect();
            let ds = Dataset::new(data, &Catalog::new(), RatingScale::new(5).unwrap()).unwrap();
            let mut m = FactorModel::<f64>::zeroed(&ds, ModelKind::Ranking, 1, 0);
            for (i, &s) in scores.iter().enumerate() {
                let idx = ds.item_idx(&i.to_string()).unwrap();
                m.item_bias[idx] = f64::from(s);
            }
            let user = ds.user_idx(if seen.is_empty() { "v" } else { "u" }).unwrap();
            let got = top_candidates(&m, &ds, user, k);

            // brute force: enumerate all eligible items, sort by (−score, item)
            let train_items: BTreeSet<usize> = ds.user_ratings(user).iter().map(|r| r.item).collect();
            let mut all: Vec<(i64, usize)> = (0..ds.n_items())
                .filter(|i| !train_items.contains(i))
                .map(|i| (-(m.item_bias[i] as i64), i))
                .collect();
            all.sort();
            let expect: Vec<usize> = all.into_iter().take(k).map(|(_, i)| i).collect();
            prop_assert_eq!(got.items, expect);
            prop_assert!(got.scores.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
