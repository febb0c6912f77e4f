//! Factor-model and candidate-list files.
//!
//! Model files are tab-separated text:
//!
//! ```text
//! #recrank-factors v1
//! #kind rating|ranking
//! #dim 64
//! #users 943
//! #items 1682
//! #seed 42
//! #scale_max 5
//! #global_mean 3.529
//! U <user> <bias> <f_1> … <f_dim>
//! I <item> <bias> <f_1> … <f_dim>
//! ```
//!
//! Numbers use the shortest representation that round-trips, so writing a
//! loaded model reproduces the file byte for byte. Candidate lists are
//! `user rank item score` lines with 1-based ranks.

use std::collections::BTreeMap;
use std::io::Write;

use super::{CandidateList, FactorModel, ModelKind, Result, RetrievalError};
use crate::corpus::Dataset;
use crate::num::Real;

const MAGIC: &str = "#recrank-factors\tv1";

pub fn write_model<T: Real, W: Write>(w: &mut W, m: &FactorModel<T>) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "#kind\t{}", m.kind.as_str())?;
    writeln!(w, "#dim\t{}", m.dim)?;
    writeln!(w, "#users\t{}", m.users.len())?;
    writeln!(w, "#items\t{}", m.items.len())?;
    writeln!(w, "#seed\t{}", m.seed)?;
    writeln!(w, "#scale_max\t{}", m.scale_max)?;
    writeln!(w, "#global_mean\t{}", m.global_mean)?;
    for (u, id) in m.users.iter().enumerate() {
        write!(w, "U\t{id}\t{}", m.user_bias[u])?;
        for x in m.user_row(u) {
            write!(w, "\t{x}")?;
        }
        writeln!(w)?;
    }
    for (i, id) in m.items.iter().enumerate() {
        write!(w, "I\t{id}\t{}", m.item_bias[i])?;
        for x in m.item_row(i) {
            write!(w, "\t{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> RetrievalError {
    RetrievalError::Format(msg.into())
}

fn num<T: Real>(s: &str) -> Result<T> {
    s.parse::<T>().map_err(|_| bad(format!("invalid number `{s}`")))
}

pub fn read_model<T: Real>(text: &str) -> Result<FactorModel<T>> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing factor-file header"));
    }
    let mut header = BTreeMap::new();
    let mut users = Vec::new();
    let mut items = Vec::new();
    let mut user_factors = Vec::new();
    let mut item_factors = Vec::new();
    let mut user_bias = Vec::new();
    let mut item_bias = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if let Some(key) = f[0].strip_prefix('#') {
            header.insert(key.to_string(), f.get(1).copied().unwrap_or("").to_string());
            continue;
        }
        let dim: usize = header.get("dim").and_then(|s| s.parse().ok()).ok_or_else(|| bad("missing dim"))?;
        if f.len() != dim + 3 {
            return Err(bad(format!("row with {} fields, expected {}", f.len(), dim + 3)));
        }
        let (ids, biases, factors) = match f[0] {
            "U" => (&mut users, &mut user_bias, &mut user_factors),
            "I" => (&mut items, &mut item_bias, &mut item_factors),
            other => return Err(bad(format!("unknown row tag `{other}`"))),
        };
        ids.push(f[1].to_string());
        biases.push(num::<T>(f[2])?);
        for x in &f[3..] {
            factors.push(num::<T>(x)?);
        }
    }
    let get = |k: &str| header.get(k).cloned().ok_or_else(|| bad(format!("missing {k}")));
    let kind = match get("kind")?.as_str() {
        "rating" => ModelKind::Rating,
        "ranking" => ModelKind::Ranking,
        other => return Err(bad(format!("unknown model kind `{other}`"))),
    };
    let dim: usize = get("dim")?.parse().map_err(|_| bad("invalid dim"))?;
    let n_users: usize = get("users")?.parse().map_err(|_| bad("invalid users"))?;
    let n_items: usize = get("items")?.parse().map_err(|_| bad("invalid items"))?;
    if users.len() != n_users || items.len() != n_items {
        return Err(bad("row counts disagree with header"));
    }
    Ok(FactorModel {
        kind,
        dim,
        user_lookup: users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect(),
        item_lookup: items.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect(),
        users,
        items,
        user_factors,
        item_factors,
        user_bias,
        item_bias,
        global_mean: num(&get("global_mean")?)?,
        scale_max: get("scale_max")?.parse().map_err(|_| bad("invalid scale_max"))?,
        seed: get("seed")?.parse().map_err(|_| bad("invalid seed"))?,
        loss_history: Vec::new(),
    })
}

pub fn write_candidates<T: Real, W: Write>(
    w: &mut W,
    train: &Dataset,
    lists: &[CandidateList<T>],
) -> std::io::Result<()> {
    for list in lists {
        for (rank, (&item, score)) in list.items.iter().zip(&list.scores).enumerate() {
            writeln!(w, "{}\t{}\t{}\t{}", train.user_id(list.user), rank + 1, train.item_id(item), score)?;
        }
    }
    Ok(())
}

/// Reads candidate lines back, grouping consecutive rows by user.
pub fn read_candidates<T: Real>(text: &str, train: &Dataset) -> Result<Vec<CandidateList<T>>> {
    let mut out: Vec<CandidateList<T>> = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("candidate line needs 4 fields"));
        }
        let user = train.user_idx(f[0]).map_err(|e| bad(e.to_string()))?;
        let item = train.item_idx(f[2]).map_err(|e| bad(e.to_string()))?;
        let score = num::<T>(f[3])?;
        match out.last_mut() {
            Some(l) if l.user == user => {
                l.items.push(item);
                l.scores.push(score);
            }
            _ => out.push(CandidateList { user, items: vec![item], scores: vec![score] }),
        }
    }
    Ok(out)
}
