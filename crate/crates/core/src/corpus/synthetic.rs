//! Seeded synthetic rating corpora with genre structure, used as offline
//! fixtures when public datasets are not available.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{Catalog, Interaction, ItemMeta};
use crate::seed;

const ADJECTIVES: [&str; 20] = [
    "Silent", "Crimson", "Golden", "Hidden", "Broken", "Electric", "Frozen", "Wild", "Midnight", "Distant", "Burning",
    "Lost", "Iron", "Velvet", "Hollow", "Bright", "Savage", "Quiet", "Endless", "Paper",
];
const NOUNS: [&str; 20] = [
    "Harbor",
    "Empire",
    "Garden",
    "Horizon",
    "Mirror",
    "Canyon",
    "Orchard",
    "Frontier",
    "Lantern",
    "Kingdom",
    "Voyage",
    "Circuit",
    "Meadow",
    "Citadel",
    "Tide",
    "Station",
    "Harvest",
    "Labyrinth",
    "Signal",
    "Summit",
];

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub genres: usize,
    pub min_per_user: usize,
    pub max_per_user: usize,
    pub scale_max: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { users: 500, items: 200, genres: 8, min_per_user: 20, max_per_user: 60, scale_max: 5, seed: 7 }
    }
}

/// Title for item `i`: unique adjective/noun pairs for the first 400 items.
pub fn title(i: usize) -> String {
    let year = 1950 + (i * 7) % 70;
    if i < ADJECTIVES.len() * NOUNS.len() {
        format!("{} {} ({year})", ADJECTIVES[i % ADJECTIVES.len()], NOUNS[i / ADJECTIVES.len()])
    } else {
        format!("Feature {i} ({year})")
    }
}

/// Generates interactions and a catalog. Item ids are `1..=items`, user ids
/// `1..=users`; every user prefers one genre and rates its items higher.
pub fn generate(cfg: &SyntheticConfig) -> (Vec<Interaction>, Catalog) {
    let mut rng = seed::rng(seed::derive(cfg.seed, "synthetic"));
    let genres = cfg.genres.max(1);

    let mut popularity: Vec<f64> = (0..cfg.items).map(|r| 1.0 / (1.0 + r as f64).sqrt()).collect();
    popularity.shuffle(&mut rng);
    let quality: Vec<f64> = (0..cfg.items).map(|_| rng.gen_range(-0.6..0.6)).collect();

    let mut catalog = Catalog::new();
    for i in 0..cfg.items {
        catalog.insert(ItemMeta {
            item: (i + 1).to_string(),
            title: title(i),
            attributes: vec![("genre".into(), format!("Genre {}", i % genres))],
        });
    }

    let scale = f64::from(cfg.scale_max);
    let mut out = Vec::new();
    for u in 0..cfg.users {
        let favorite = rng.gen_range(0..genres);
        let bias: f64 = rng.gen_range(-0.5..0.5);
        let n = rng.gen_range(cfg.min_per_user..=cfg.max_per_user).min(cfg.items);
        let weights: Vec<f64> =
            (0..cfg.items).map(|i| popularity[i] * if i % genres == favorite { 4.0 } else { 1.0 }).collect();
        let mut chosen = BTreeSet::new();
        let mut dist = WeightedIndex::new(&weights).expect("positive weights");
        while chosen.len() < n {
            let i = dist.sample(&mut rng);
            if chosen.insert(i) && chosen.len() < n {
                // sample without replacement
                dist.update_weights(&[(i, &0.0)]).expect("remaining weight");
            }
        }
        let mut stamps: Vec<i64> = (0..n).map(|_| rng.gen_range(800_000_000..900_000_000)).collect();
        stamps.sort_unstable();
        let mut order: Vec<usize> = chosen.into_iter().collect();
        order.shuffle(&mut rng);
        for (i, ts) in order.into_iter().zip(stamps) {
            let affinity = if i % genres == favorite { 1.2 } else { -0.4 };
            let raw = 3.0 + bias + quality[i] + affinity + rng.gen_range(-1.0..1.0);
            let rating = raw.round().clamp(1.0, scale);
            out.push(Interaction::new((u + 1).to_string(), (i + 1).to_string(), rating, ts));
        }
    }
    (out, catalog)
}

/// Renders interactions in the tab-separated `user item rating timestamp`
/// layout.
pub fn to_tsv(interactions: &[Interaction]) -> String {
    let mut s = String::new();
    for it in interactions {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", it.user, it.item, it.rating, it.timestamp);
    }
    s
}

/// Renders a catalog for items `1..=n` as `id|title|genre` lines.
pub fn catalog_to_pipe(catalog: &Catalog, n: usize) -> String {
    let mut s = String::new();
    for i in 1..=n {
        let m = catalog.resolve(&i.to_string());
        let genre = m.attributes.iter().find(|(k, _)| k == "genre").map(|(_, v)| v.as_str()).unwrap_or("");
        let _ = writeln!(s, "{}|{}|{}", m.item, m.title, genre);
    }
    s
}
