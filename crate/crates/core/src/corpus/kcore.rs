use std::collections::HashMap;

use super::{CorpusError, Interaction, Result};

/// Iteratively drops users and items with fewer than `k` interactions until
/// every survivor meets the threshold.
pub fn apply_k_core(mut interactions: Vec<Interaction>, k: usize) -> Result<Vec<Interaction>> {
    if k == 0 {
        return Err(CorpusError::InvalidK);
    }
    loop {
        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for it in &interactions {
            *user_counts.entry(&it.user).or_default() += 1;
            *item_counts.entry(&it.item).or_default() += 1;
        }
        let keep: Vec<bool> = interactions
            .iter()
            .map(|it| user_counts[it.user.as_str()] >= k && item_counts[it.item.as_str()] >= k)
            .collect();
        if keep.iter().all(|&b| b) {
            break;
        }
        let mut flags = keep.into_iter();
        interactions.retain(|_| flags.next().unwrap_or(false));
    }
    if interactions.is_empty() {
        return Err(CorpusError::EmptiedByKCore { k });
    }
    Ok(interactions)
}
