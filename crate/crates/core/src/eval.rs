//! Leave-one-out top-k metrics and rerank transition analysis.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::corpus::{ItemIdx, UserIdx};
use crate::num::{Real, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("metric undefined over an empty user population")]
    EmptyPopulation,
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// 1-based position of `g` in `order`, `None` when absent.
pub fn rank_of_ground_truth(order: &[ItemIdx], g: ItemIdx) -> Option<usize> {
    order.iter().position(|&i| i == g).map(|p| p + 1)
}

/// Fraction of users whose rank is at most `k`; misses count as not hit.
pub fn hit_ratio<T: Scalar>(ranks: &[Option<usize>], k: usize) -> Result<T> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyPopulation);
    }
    let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
    Ok(T::from_usize_exact(hits) / T::from_usize_exact(ranks.len()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum NdcgForm {
    /// `1 / log₂(rank + 1)` for ranks within `k`.
    #[default]
    Standard,
    /// The single-relevant-item formula with a constant denominator, which
    /// collapses to the hit indicator. Kept for comparison with reports
    /// computed that way.
    Literal,
}

pub fn ndcg<T: Real>(ranks: &[Option<usize>], k: usize) -> Result<T> {
    ndcg_with(ranks, k, NdcgForm::Standard)
}

pub fn ndcg_with<T: Real>(ranks: &[Option<usize>], k: usize, form: NdcgForm) -> Result<T> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyPopulation);
    }
    let two = T::from_usize_exact(2);
    let sum: T = ranks
        .iter()
        .map(|r| match (*r, form) {
            (Some(r), NdcgForm::Standard) if r <= k => T::one() / (T::from_usize_exact(r) + T::one()).log(two),
            (Some(r), NdcgForm::Literal) if r <= k => T::one(),
            _ => T::zero(),
        })
        .sum();
    Ok(sum / T::from_usize_exact(ranks.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtK {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub users: usize,
    /// Users whose held item is among their candidates.
    pub candidate_hits: usize,
    pub candidate_hit_rate: f64,
    /// Over all evaluated users.
    pub all: Vec<AtK>,
    /// Over candidate-hit users only; empty when there are none.
    pub hit_subset: Vec<AtK>,
}

impl MetricReport {
    pub fn at(&self, k: usize) -> Option<&AtK> {
        self.all.iter().find(|m| m.k == k)
    }
}

fn at_k(ranks: &[Option<usize>], ks: &[usize], form: NdcgForm) -> Result<Vec<AtK>> {
    ks.iter().map(|&k| Ok(AtK { k, hr: hit_ratio(ranks, k)?, ndcg: ndcg_with(ranks, k, form)? })).collect()
}

/// Metrics for `orders` against each user's held item. Users without an
/// order count as misses.
pub fn metric_report(
    orders: &BTreeMap<UserIdx, Vec<ItemIdx>>,
    held: &BTreeMap<UserIdx, ItemIdx>,
    ks: &[usize],
    form: NdcgForm,
) -> Result<MetricReport> {
    let ranks: Vec<Option<usize>> =
        held.iter().map(|(u, &g)| orders.get(u).and_then(|o| rank_of_ground_truth(o, g))).collect();
    let hit: Vec<Option<usize>> = ranks.iter().copied().filter(Option::is_some).collect();
    Ok(MetricReport {
        users: ranks.len(),
        candidate_hits: hit.len(),
        candidate_hit_rate: hit.len() as f64 / ranks.len().max(1) as f64,
        all: at_k(&ranks, ks, form)?,
        hit_subset: if hit.is_empty() { Vec::new() } else { at_k(&hit, ks, form)? },
    })
}

impl MetricReport {
    /// Fixed-width table.
    pub fn table(&self, title: &str) -> String {
        let mut s = format!("{title}\n{:<14}", "population");
        for m in &self.all {
            s.push_str(&format!("{:>10}{:>10}", format!("H@{}", m.k), format!("N@{}", m.k)));
        }
        s.push('\n');
        for (name, rows) in [("all", &self.all), ("candidate-hit", &self.hit_subset)] {
            if rows.is_empty() {
                continue;
            }
            s.push_str(&format!("{name:<14}"));
            for m in rows {
                s.push_str(&format!("{:>10.4}{:>10.4}", m.hr, m.ndcg));
            }
            s.push('\n');
        }
        s.push_str(&format!(
            "users={} candidate_hits={} candidate_hit_rate={:.4}\n",
            self.users, self.candidate_hits, self.candidate_hit_rate
        ));
        s
    }

    /// `prefix.key=value` lines.
    pub fn key_values(&self, prefix: &str) -> String {
        let mut s = format!(
            "{prefix}.users={}\n{prefix}.candidate_hits={}\n{prefix}.candidate_hit_rate={:.6}\n",
            self.users, self.candidate_hits, self.candidate_hit_rate
        );
        for (pop, rows) in [("all", &self.all), ("hit", &self.hit_subset)] {
            for m in rows {
                s.push_str(&format!(
                    "{prefix}.{pop}.hr@{}={:.6}\n{prefix}.{pop}.ndcg@{}={:.6}\n",
                    m.k, m.hr, m.k, m.ndcg
                ));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransitionReport {
    pub k: usize,
    pub w2r: usize,
    pub r2w: usize,
    pub w2w: usize,
    pub r2r: usize,
}

impl TransitionReport {
    pub fn total(&self) -> usize {
        self.w2r + self.r2w + self.w2w + self.r2r
    }

    /// `(w2r, r2w, w2w, r2r)` as fractions of the total; zeros when empty.
    pub fn fractions(&self) -> (f64, f64, f64, f64) {
        let t = self.total();
        if t == 0 {
            return (0.0, 0.0, 0.0, 0.0);
        }
        let f = |c: usize| c as f64 / t as f64;
        (f(self.w2r), f(self.r2w), f(self.w2w), f(self.r2r))
    }
}

impl fmt::Display for TransitionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b, c, d) = self.fractions();
        writeln!(f, "transitions@{} over {} candidate-hit users", self.k, self.total())?;
        writeln!(f, "W2R\t{}\t{a:.4}", self.w2r)?;
        writeln!(f, "R2W\t{}\t{b:.4}", self.r2w)?;
        writeln!(f, "W2W\t{}\t{c:.4}", self.w2w)?;
        write!(f, "R2R\t{}\t{d:.4}", self.r2r)
    }
}

impl TransitionReport {
    pub fn key_values(&self, prefix: &str) -> String {
        let (a, b, c, d) = self.fractions();
        format!(
            "{prefix}.k={}\n{prefix}.w2r={}\n{prefix}.r2w={}\n{prefix}.w2w={}\n{prefix}.r2r={}\n\
             {prefix}.w2r_frac={a:.6}\n{prefix}.r2w_frac={b:.6}\n{prefix}.w2w_frac={c:.6}\n{prefix}.r2r_frac={d:.6}\n",
            self.k, self.w2r, self.r2w, self.w2w, self.r2r
        )
    }
}

/// Classifies every user whose held item appears in the retrieval order by
/// whether it sits within the top `k` before and after reranking.
pub fn transition_analysis(
    before: &BTreeMap<UserIdx, Vec<ItemIdx>>,
    after: &BTreeMap<UserIdx, Vec<ItemIdx>>,
    held: &BTreeMap<UserIdx, ItemIdx>,
    k: usize,
) -> TransitionReport {
    let mut t = TransitionReport { k, ..Default::default() };
    for (u, &g) in held {
        let Some(rb) = before.get(u).and_then(|o| rank_of_ground_truth(o, g)) else { continue };
        let ra = after.get(u).and_then(|o| rank_of_ground_truth(o, g));
        match (rb <= k, ra.is_some_and(|r| r <= k)) {
            (false, true) => t.w2r += 1,
            (true, false) => t.r2w += 1,
            (false, false) => t.w2w += 1,
            (true, true) => t.r2r += 1,
        }
    }
    t
}
