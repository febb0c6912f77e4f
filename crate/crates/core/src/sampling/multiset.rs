use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::ops::Add;

use super::{Result, SamplingError};
use crate::corpus::{Dataset, UserIdx};

/// A multiset of users: the underlying set plus a multiplicity ≥ 1 per user.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserMultiset {
    counts: BTreeMap<UserIdx, usize>,
}

impl UserMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_draws(draws: impl IntoIterator<Item = UserIdx>) -> Self {
        let mut m = Self::new();
        for u in draws {
            m.insert(u, 1);
        }
        m
    }

    pub fn insert(&mut self, user: UserIdx, times: usize) {
        if times > 0 {
            *self.counts.entry(user).or_default() += times;
        }
    }

    pub fn multiplicity(&self, user: UserIdx) -> usize {
        self.counts.get(&user).copied().unwrap_or(0)
    }

    /// Number of distinct users.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Σ multiplicities.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn underlying(&self) -> impl Iterator<Item = UserIdx> + '_ {
        self.counts.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserIdx, usize)> + '_ {
        self.counts.iter().map(|(&u, &m)| (u, m))
    }

    /// Every occurrence, users ascending, each repeated by its multiplicity.
    pub fn occurrences(&self) -> Vec<UserIdx> {
        self.counts.iter().flat_map(|(&u, &m)| std::iter::repeat_n(u, m)).collect()
    }

    pub fn report(&self) -> SamplingReport {
        let total = self.total();
        let entropy = if total == 0 {
            0.0
        } else {
            -self
                .counts
                .values()
                .map(|&m| {
                    let p = m as f64 / total as f64;
                    p * p.ln()
                })
                .sum::<f64>()
        };
        SamplingReport {
            total,
            distinct: self.distinct(),
            max_multiplicity: self.counts.values().copied().max().unwrap_or(0),
            entropy,
        }
    }
}

impl Add for &UserMultiset {
    type Output = UserMultiset;

    /// Multiset sum: multiplicities add pointwise.
    fn add(self, rhs: &UserMultiset) -> UserMultiset {
        let mut out = self.clone();
        for (u, m) in rhs.iter() {
            out.insert(u, m);
        }
        out
    }
}

/// Summary of a sampled multiset. Entropy is in nats over the empirical
/// occurrence distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingReport {
    pub total: usize,
    pub distinct: usize,
    pub max_multiplicity: usize,
    pub entropy: f64,
}

impl fmt::Display for SamplingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total\t{}", self.total)?;
        writeln!(f, "distinct\t{}", self.distinct)?;
        writeln!(f, "max_multiplicity\t{}", self.max_multiplicity)?;
        write!(f, "entropy\t{:.6}", self.entropy)
    }
}

/// Writes `user_id multiplicity` lines.
pub fn write_multiset<W: Write>(w: &mut W, train: &Dataset, m: &UserMultiset) -> std::io::Result<()> {
    for (u, count) in m.iter() {
        writeln!(w, "{}\t{}", train.user_id(u), count)?;
    }
    Ok(())
}

pub fn read_multiset(text: &str, train: &Dataset) -> Result<UserMultiset> {
    let mut m = UserMultiset::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = |msg: &str| SamplingError::Format(format!("line {}: {msg}", n + 1));
        let (user, count) = line.split_once('\t').ok_or_else(|| bad("expected user and multiplicity"))?;
        let u = train.user_idx(user).map_err(|e| bad(&e.to_string()))?;
        let c: usize = count.parse().map_err(|_| bad("invalid multiplicity"))?;
        if c == 0 {
            return Err(bad("multiplicity must be positive"));
        }
        m.insert(u, c);
    }
    Ok(m)
}
