use rand::seq::SliceRandom;

use super::{Result, SamplingError};
use crate::corpus::{ItemIdx, SplitDataset, UserIdx};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CandidateLabel {
    Liked,
    Disliked,
    Negative,
}

impl CandidateLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateLabel::Liked => "liked",
            CandidateLabel::Disliked => "disliked",
            CandidateLabel::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    pub item: ItemIdx,
    pub label: CandidateLabel,
    /// Observed rating and timestamp; `None` for negatives.
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

/// How many liked, disliked and negative items make up a training candidate
/// set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Composition {
    pub liked: usize,
    pub disliked: usize,
    pub negative: usize,
}

impl Composition {
    pub fn total(&self) -> usize {
        self.liked + self.disliked + self.negative
    }
}

impl Default for Composition {
    fn default() -> Self {
        Self { liked: 3, disliked: 3, negative: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCandidateSet {
    pub user: UserIdx,
    pub entries: Vec<CandidateEntry>,
}

impl TrainingCandidateSet {
    pub fn items(&self) -> Vec<ItemIdx> {
        self.entries.iter().map(|e| e.item).collect()
    }

    pub fn with_label(&self, label: CandidateLabel) -> impl Iterator<Item = &CandidateEntry> {
        self.entries.iter().filter(move |e| e.label == label)
    }
}

/// Draws liked and disliked train items without replacement, backfills any
/// shortfall with extra negatives, and draws negatives uniformly from items
/// the user never interacted with (train, validation or test).
pub fn select_training_candidates(
    split: &SplitDataset,
    user: UserIdx,
    k_prime: usize,
    composition: Composition,
    seed: u64,
) -> Result<TrainingCandidateSet> {
    if composition.total() != k_prime {
        return Err(SamplingError::InvalidConfig(format!(
            "composition sums to {}, expected {k_prime}",
            composition.total()
        )));
    }
    if user >= split.train.n_users() {
        return Err(SamplingError::UnknownUser(user));
    }
    let mut rng = seed::rng(seed);
    let scale = split.scale();
    let history = split.train.user_ratings(user);
    let (liked, disliked): (Vec<&crate::corpus::Rating>, Vec<_>) =
        history.iter().partition(|r| scale.is_liked(r.rating));

    let mut entries = Vec::with_capacity(k_prime);
    for (pool, want, label) in [
        (&liked, composition.liked, CandidateLabel::Liked),
        (&disliked, composition.disliked, CandidateLabel::Disliked),
    ] {
        for r in pool.choose_multiple(&mut rng, want) {
            entries.push(CandidateEntry { item: r.item, label, rating: Some(r.rating), timestamp: Some(r.timestamp) });
        }
    }
    let needed = k_prime - entries.len();
    let interacted = split.interacted(user);
    let eligible: Vec<ItemIdx> = (0..split.train.n_items()).filter(|i| !interacted.contains(i)).collect();
    if eligible.len() < needed {
        return Err(SamplingError::NoEligibleNegatives {
            user: split.train.user_id(user).to_string(),
            available: eligible.len(),
            needed,
        });
    }
    for &item in eligible.choose_multiple(&mut rng, needed) {
        entries.push(CandidateEntry { item, label: CandidateLabel::Negative, rating: None, timestamp: None });
    }
    Ok(TrainingCandidateSet { user, entries })
}
