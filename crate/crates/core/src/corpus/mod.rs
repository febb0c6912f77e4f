//! Rating corpora: ingestion, k-core filtering, leave-one-out splitting and
//! per-user chronological histories.

mod io;
mod kcore;
mod parse;
mod split;
pub mod synthetic;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

pub use io::{read_dataset, read_split, write_dataset, write_split};
pub use kcore::apply_k_core;
pub use parse::{
    parse_catalog, parse_interactions, read_catalog, read_interactions, CatalogFormat, Delimiter, ParseOptions,
    TimestampMode,
};
pub use split::{leave_one_out_split, SplitDataset};

/// Internal contiguous user index.
pub type UserIdx = usize;
/// Internal contiguous item index.
pub type ItemIdx = usize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: rating {rating} outside scale 1..={scale_max}")]
    RatingOutOfScale { line: usize, rating: f64, scale_max: u32 },
    #[error("corpus emptied by {k}-core filtering")]
    EmptiedByKCore { k: usize },
    #[error("k-core threshold must be at least 1")]
    InvalidK,
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("invalid rating scale {0}")]
    InvalidScale(u32),
    #[error("dataset has no interactions")]
    Empty,
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One raw rating event with external identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f64, timestamp: i64) -> Self {
        Self { user: user.into(), item: item.into(), rating, timestamp }
    }
}

/// A rating event over internal indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: UserIdx,
    pub item: ItemIdx,
    pub rating: f64,
    pub timestamp: i64,
}

/// Item metadata joined from a catalog file.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemMeta {
    pub item: String,
    pub title: String,
    pub attributes: Vec<(String, String)>,
}

/// Item catalog keyed by external item id.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    entries: HashMap<String, ItemMeta>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, meta: ItemMeta) {
        self.entries.insert(meta.item.clone(), meta);
    }

    pub fn get(&self, item: &str) -> Option<&ItemMeta> {
        self.entries.get(item)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Metadata for `item`, or a placeholder titled `Item <id>` when the
    /// catalog has no entry.
    pub fn resolve(&self, item: &str) -> ItemMeta {
        self.get(item).cloned().unwrap_or_else(|| ItemMeta {
            item: item.to_string(),
            title: format!("Item {item}"),
            attributes: Vec::new(),
        })
    }
}

/// Declared rating scale `1..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingScale {
    max: u32,
}

impl RatingScale {
    pub fn new(max: u32) -> Result<Self> {
        if max < 2 {
            return Err(CorpusError::InvalidScale(max));
        }
        Ok(Self { max })
    }

    pub fn max(self) -> u32 {
        self.max
    }

    pub fn contains(self, rating: f64) -> bool {
        (1.0..=f64::from(self.max)).contains(&rating)
    }

    /// Smallest rating counted as "liked": 4 on a 1–5 scale, 7 on a 1–10 scale.
    pub fn liked_threshold(self) -> f64 {
        f64::from((7 * self.max).div_ceil(10))
    }

    pub fn is_liked(self, rating: f64) -> bool {
        rating >= self.liked_threshold()
    }
}

/// Ordering for external ids: numeric when both parse as integers, otherwise
/// lexicographic.
pub fn cmp_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// An immutable, indexed rating dataset.
///
/// Users and items are indexed contiguously in [`cmp_ids`] order of their
/// external ids. Ratings are stored sorted by `(user, timestamp, item)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, UserIdx>,
    item_index: HashMap<String, ItemIdx>,
    ratings: Vec<Rating>,
    user_offsets: Vec<usize>,
    catalog: Vec<ItemMeta>,
    scale: RatingScale,
    seed: Option<u64>,
}

impl Dataset {
    /// Indexes the users and items that appear in `interactions`.
    pub fn new(interactions: Vec<Interaction>, catalog: &Catalog, scale: RatingScale) -> Result<Self> {
        Self::with_items(interactions, Vec::new(), catalog, scale)
    }

    /// Like [`Dataset::new`], but the item universe additionally contains
    /// `extra_items` even if they have no interactions.
    pub fn with_items(
        interactions: Vec<Interaction>,
        extra_items: Vec<String>,
        catalog: &Catalog,
        scale: RatingScale,
    ) -> Result<Self> {
        let metas = extra_items.into_iter().map(|id| catalog.resolve(&id)).collect();
        Self::assemble(interactions, metas, catalog, scale, None)
    }

    pub(crate) fn assemble(
        interactions: Vec<Interaction>,
        known_items: Vec<ItemMeta>,
        catalog: &Catalog,
        scale: RatingScale,
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut users: Vec<String> = interactions.iter().map(|i| i.user.clone()).collect();
        users.sort_by(|a, b| cmp_ids(a, b));
        users.dedup();

        let mut metas: BTreeMap<String, ItemMeta> = known_items.into_iter().map(|m| (m.item.clone(), m)).collect();
        for it in &interactions {
            if !metas.contains_key(&it.item) {
                metas.insert(it.item.clone(), catalog.resolve(&it.item));
            }
        }
        let mut catalog_rows: Vec<ItemMeta> = metas.into_values().collect();
        catalog_rows.sort_by(|a, b| cmp_ids(&a.item, &b.item));
        let items: Vec<String> = catalog_rows.iter().map(|m| m.item.clone()).collect();

        let user_index: HashMap<String, UserIdx> = users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let item_index: HashMap<String, ItemIdx> = items.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();

        let mut ratings: Vec<Rating> = interactions
            .iter()
            .map(|it| Rating {
                user: user_index[&it.user],
                item: item_index[&it.item],
                rating: it.rating,
                timestamp: it.timestamp,
            })
            .collect();
        ratings.sort_by_key(|a| (a.user, a.timestamp, a.item));

        let mut user_offsets = vec![0; users.len() + 1];
        for r in &ratings {
            user_offsets[r.user + 1] += 1;
        }
        for u in 0..users.len() {
            user_offsets[u + 1] += user_offsets[u];
        }

        Ok(Self { users, items, user_index, item_index, ratings, user_offsets, catalog: catalog_rows, scale, seed })
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.ratings.len()
    }

    /// `|interactions| / (|users| · |items|)`.
    pub fn density(&self) -> f64 {
        if self.users.is_empty() || self.items.is_empty() {
            return 0.0;
        }
        self.ratings.len() as f64 / (self.users.len() as f64 * self.items.len() as f64)
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn user_id(&self, user: UserIdx) -> &str {
        &self.users[user]
    }

    pub fn item_id(&self, item: ItemIdx) -> &str {
        &self.items[item]
    }

    pub fn user_idx(&self, user: &str) -> Result<UserIdx> {
        self.user_index.get(user).copied().ok_or_else(|| CorpusError::UnknownUser(user.to_string()))
    }

    pub fn item_idx(&self, item: &str) -> Result<ItemIdx> {
        self.item_index.get(item).copied().ok_or_else(|| CorpusError::UnknownItem(item.to_string()))
    }

    pub fn title(&self, item: ItemIdx) -> &str {
        &self.catalog[item].title
    }

    pub fn meta(&self, item: ItemIdx) -> &ItemMeta {
        &self.catalog[item]
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    /// Ratings of `user`, ascending by timestamp (ties by item index).
    pub fn user_ratings(&self, user: UserIdx) -> &[Rating] {
        &self.ratings[self.user_offsets[user]..self.user_offsets[user + 1]]
    }

    pub fn interaction(&self, r: &Rating) -> Interaction {
        Interaction::new(self.users[r.user].clone(), self.items[r.item].clone(), r.rating, r.timestamp)
    }

    pub fn interactions(&self) -> Vec<Interaction> {
        self.ratings.iter().map(|r| self.interaction(r)).collect()
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            users: self.n_users(),
            items: self.n_items(),
            interactions: self.n_interactions(),
            density: self.density(),
        }
    }
}

/// Summary counts in the layout of a dataset-description table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<12} {:>10} {:>10} {:>12} {:>10}", "", "users", "items", "ratings", "density")?;
        write!(
            f,
            "{:<12} {:>10} {:>10} {:>12} {:>10.6}",
            "dataset", self.users, self.items, self.interactions, self.density
        )
    }
}
