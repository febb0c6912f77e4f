use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;

use super::{RerankError, RerankResult, Result};
use crate::corpus::{Dataset, ItemIdx, UserIdx};

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "NA".to_string(), T::to_string)
}

/// `user item m u_retrieval u_pointwise u_pairwise u_listwise u_hybrid`, one
/// line per candidate in retrieval order. Absent components print `NA`.
pub fn write_utilities<T: Display, W: Write>(
    w: &mut W,
    train: &Dataset,
    results: &[RerankResult<T>],
) -> std::io::Result<()> {
    writeln!(w, "user\titem\tm\tu_retrieval\tu_pointwise\tu_pairwise\tu_listwise\tu_hybrid")?;
    for r in results {
        for v in &r.utilities {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                train.user_id(r.user),
                train.item_id(v.item),
                v.position,
                v.u_retrieval,
                opt(&v.u_pointwise),
                v.u_pairwise,
                opt(&v.u_listwise),
                v.u_hybrid
            )?;
        }
    }
    Ok(())
}

/// `user rank item`, ranks from 1, covering each user's full final order.
pub fn write_rerank_results<T, W: Write>(
    w: &mut W,
    train: &Dataset,
    results: &[RerankResult<T>],
) -> std::io::Result<()> {
    for r in results {
        for (rank, &item) in r.final_order.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", train.user_id(r.user), rank + 1, train.item_id(item))?;
        }
    }
    Ok(())
}

/// Final orders per user, as written by [`write_rerank_results`].
pub fn read_rerank_results(text: &str, train: &Dataset) -> Result<BTreeMap<UserIdx, Vec<ItemIdx>>> {
    let mut out: BTreeMap<UserIdx, Vec<ItemIdx>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = |m: String| RerankError::Format(format!("line {}: {m}", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        let [user, rank, item] = f[..] else { return Err(bad("expected user, rank and item".into())) };
        let u = train.user_idx(user).map_err(|e| bad(e.to_string()))?;
        let i = train.item_idx(item).map_err(|e| bad(e.to_string()))?;
        let rank: usize = rank.parse().map_err(|_| bad(format!("invalid rank {rank:?}")))?;
        let list = out.entry(u).or_default();
        if rank != list.len() + 1 {
            return Err(bad(format!("rank {rank} out of sequence")));
        }
        list.push(i);
    }
    Ok(out)
}
