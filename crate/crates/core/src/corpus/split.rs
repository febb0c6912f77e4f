use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use super::{Catalog, CorpusError, Dataset, ItemIdx, Rating, Result, UserIdx};

/// Leave-one-out split. All indices refer to `train`, whose item universe is
/// the full item set of the source dataset.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: BTreeMap<UserIdx, Rating>,
    pub test: BTreeMap<UserIdx, Rating>,
    /// Users dropped for having fewer than three interactions.
    pub skipped_users: usize,
}

/// Assigns each user's most recent interaction to test, the next one to
/// validation and the rest to train. Equal timestamps rank the smaller item
/// id as more recent. Users with fewer than three interactions are skipped.
pub fn leave_one_out_split(dataset: &Dataset) -> Result<SplitDataset> {
    let mut train = Vec::new();
    let mut held: Vec<(String, crate::corpus::Interaction, crate::corpus::Interaction)> = Vec::new();
    let mut skipped = 0;
    for user in 0..dataset.n_users() {
        let mut rs: Vec<Rating> = dataset.user_ratings(user).to_vec();
        if rs.len() < 3 {
            skipped += 1;
            continue;
        }
        // most recent first; item index order equals id order
        rs.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then(a.item.cmp(&b.item)));
        let test = dataset.interaction(&rs[0]);
        let validation = dataset.interaction(&rs[1]);
        train.extend(rs[2..].iter().map(|r| dataset.interaction(r)));
        held.push((dataset.user_id(user).to_string(), validation, test));
    }
    if skipped > 0 {
        warn!("leave-one-out: skipped {skipped} users with fewer than 3 interactions");
    }
    if train.is_empty() {
        return Err(CorpusError::Empty);
    }
    let metas = (0..dataset.n_items()).map(|i| dataset.meta(i).clone()).collect();
    let train = Dataset::assemble(train, metas, &Catalog::new(), dataset.scale(), dataset.seed())?;

    let to_rating = |it: &crate::corpus::Interaction| -> Result<Rating> {
        Ok(Rating {
            user: train.user_idx(&it.user)?,
            item: train.item_idx(&it.item)?,
            rating: it.rating,
            timestamp: it.timestamp,
        })
    };
    let mut validation = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (user, v, t) in &held {
        let u = train.user_idx(user)?;
        validation.insert(u, to_rating(v)?);
        test.insert(u, to_rating(t)?);
    }
    Ok(SplitDataset { train, validation, test, skipped_users: skipped })
}

impl SplitDataset {
    pub fn scale(&self) -> super::RatingScale {
        self.train.scale()
    }

    /// Train interactions of `user` in chronological order.
    pub fn user_history(&self, user: &str) -> Result<&[Rating]> {
        let u = self.train.user_idx(user)?;
        Ok(self.train.user_ratings(u))
    }

    /// Every item the user interacted with, including held-out ones.
    pub fn interacted(&self, user: UserIdx) -> BTreeSet<ItemIdx> {
        let mut set: BTreeSet<ItemIdx> = self.train.user_ratings(user).iter().map(|r| r.item).collect();
        if let Some(v) = self.validation.get(&user) {
            set.insert(v.item);
        }
        if let Some(t) = self.test.get(&user) {
            set.insert(t.item);
        }
        set
    }

    pub fn train_rating(&self, user: UserIdx, item: ItemIdx) -> Option<f64> {
        self.train.user_ratings(user).iter().find(|r| r.item == item).map(|r| r.rating)
    }

    pub fn test_item(&self, user: UserIdx) -> Option<ItemIdx> {
        self.test.get(&user).map(|r| r.item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Interaction, RatingScale};

    fn ds(rows: &[(&str, &str, i64)]) -> Dataset {
        let data = rows.iter().map(|(u, i, t)| Interaction::new(*u, *i, 4.0, *t)).collect();
        Dataset::new(data, &Catalog::new(), RatingScale::new(5).unwrap()).unwrap()
    }

    #[test]
    fn three_interactions_split_by_time() {
        let s = leave_one_out_split(&ds(&[("u", "a", 1), ("u", "c", 3), ("u", "b", 2)])).unwrap();
        let u = s.train.user_idx("u").unwrap();
        let hist: Vec<&str> = s.train.user_ratings(u).iter().map(|r| s.train.item_id(r.item)).collect();
        assert_eq!(hist, vec!["a"]);
        assert_eq!(s.train.item_id(s.validation[&u].item), "b");
        assert_eq!(s.train.item_id(s.test[&u].item), "c");
    }

    #[test]
    fn short_user_is_skipped() {
        let s = leave_one_out_split(&ds(&[("u", "a", 1), ("u", "b", 2), ("u", "c", 3), ("v", "a", 1), ("v", "b", 2)]))
            .unwrap();
        assert_eq!(s.skipped_users, 1);
        assert!(s.train.user_idx("v").is_err());
        // the item universe is preserved
        assert_eq!(s.train.n_items(), 3);
    }

    #[test]
    fn tie_prefers_smaller_item_as_test() {
        let s = leave_one_out_split(&ds(&[("u", "a", 1), ("u", "y", 5), ("u", "x", 5), ("u", "b", 2)])).unwrap();
        let u = s.train.user_idx("u").unwrap();
        assert_eq!(s.train.item_id(s.test[&u].item), "x");
        assert_eq!(s.train.item_id(s.validation[&u].item), "y");
    }

    #[test]
    fn history_lookup() {
        let s = leave_one_out_split(&ds(&[("u", "a", 1), ("u", "b", 2), ("u", "c", 3), ("u", "d", 4)])).unwrap();
        let h = s.user_history("u").unwrap();
        assert_eq!(h.len(), 2);
        assert!(h[0].timestamp <= h[1].timestamp);
        assert!(matches!(s.user_history("nobody"), Err(CorpusError::UnknownUser(_))));
    }
}
