use rand::Rng;

use super::RankingTask;
use crate::corpus::SplitDataset;
use crate::sampling::{CandidateEntry, CandidateLabel};
use crate::seed;

/// Rating as shown in answers: integers without a fractional part.
pub fn format_rating(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r}")
    }
}

/// Sort key for training preferences, larger is preferred. Liked items rank
/// by rating above never-interacted items, which in turn rank above disliked
/// items.
pub fn preference_key(e: &CandidateEntry) -> (u8, f64) {
    let tier = match e.label {
        CandidateLabel::Liked => 2,
        CandidateLabel::Negative => 1,
        CandidateLabel::Disliked => 0,
    };
    (tier, e.rating.unwrap_or(0.0))
}

fn cmp_pref(a: &CandidateEntry, b: &CandidateEntry) -> std::cmp::Ordering {
    let (ka, kb) = (preference_key(a), preference_key(b));
    ka.0.cmp(&kb.0).then(ka.1.partial_cmp(&kb.1).unwrap_or(std::cmp::Ordering::Equal))
}

/// Target answer for a training prompt over `entries` in presented order, or
/// `None` when the comparison is indeterminate.
///
/// Pointwise answers the observed rating (`"5."`). Pairwise answers `"Yes."`
/// iff the first entry is strictly preferred. Listwise lists the titles by
/// preference, ties broken by recency and then by `tie_seed`.
pub fn make_training_target(
    task: RankingTask,
    entries: &[CandidateEntry],
    split: &SplitDataset,
    tie_seed: u64,
) -> Option<String> {
    match task {
        RankingTask::Pointwise => {
            let [e] = entries else { return None };
            e.rating.map(|r| format!("{}.", format_rating(r)))
        }
        RankingTask::Pairwise => {
            let [a, b] = entries else { return None };
            match cmp_pref(a, b) {
                std::cmp::Ordering::Greater => Some("Yes.".into()),
                std::cmp::Ordering::Less => Some("No.".into()),
                std::cmp::Ordering::Equal => None,
            }
        }
        RankingTask::Listwise => {
            if entries.len() < 2 {
                return None;
            }
            let mut rng = seed::rng(tie_seed);
            let mut keyed: Vec<(&CandidateEntry, u64)> = entries.iter().map(|e| (e, rng.gen())).collect();
            keyed.sort_by(|(a, ra), (b, rb)| cmp_pref(b, a).then(b.timestamp.cmp(&a.timestamp)).then(ra.cmp(rb)));
            let titles: Vec<&str> = keyed.iter().map(|(e, _)| split.train.title(e.item)).collect();
            Some(titles.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::tests::fixture;

    fn entry(item: usize, label: CandidateLabel, rating: Option<f64>, ts: Option<i64>) -> CandidateEntry {
        CandidateEntry { item, label, rating, timestamp: ts }
    }

    fn idx(s: &SplitDataset, title: &str) -> usize {
        (0..s.train.n_items()).find(|&i| s.train.title(i) == title).unwrap()
    }

    #[test]
    fn pointwise_observed_rating() {
        let s = fixture(&[("A", 5.0)], &[]);
        let e = [entry(idx(&s, "A"), CandidateLabel::Liked, Some(5.0), Some(0))];
        assert_eq!(make_training_target(RankingTask::Pointwise, &e, &s, 0).as_deref(), Some("5."));
        let e = [entry(0, CandidateLabel::Liked, Some(4.5), Some(0))];
        assert_eq!(make_training_target(RankingTask::Pointwise, &e, &s, 0).as_deref(), Some("4.5."));
        let e = [entry(0, CandidateLabel::Negative, None, None)];
        assert_eq!(make_training_target(RankingTask::Pointwise, &e, &s, 0), None);
    }

    #[test]
    fn pairwise_liked_over_disliked() {
        let s = fixture(&[("A", 5.0), ("B", 2.0)], &[]);
        let l = entry(idx(&s, "A"), CandidateLabel::Liked, Some(5.0), Some(0));
        let d = entry(idx(&s, "B"), CandidateLabel::Disliked, Some(2.0), Some(1));
        let n = entry(0, CandidateLabel::Negative, None, None);
        let pw = |a: &CandidateEntry, b: &CandidateEntry| {
            make_training_target(RankingTask::Pairwise, &[a.clone(), b.clone()], &s, 0)
        };
        assert_eq!(pw(&l, &d).as_deref(), Some("Yes."));
        assert_eq!(pw(&d, &l).as_deref(), Some("No."));
        assert_eq!(pw(&l, &n).as_deref(), Some("Yes."));
        assert_eq!(pw(&n, &d).as_deref(), Some("Yes."));
        assert_eq!(pw(&n, &n.clone()), None);
    }

    #[test]
    fn listwise_orders_by_preference() {
        let s = fixture(&[("A", 5.0), ("B", 3.0), ("D", 4.0)], &["C"]);
        let a = entry(idx(&s, "A"), CandidateLabel::Liked, Some(5.0), Some(0));
        let b = entry(idx(&s, "B"), CandidateLabel::Disliked, Some(3.0), Some(1));
        let c = entry(idx(&s, "C"), CandidateLabel::Negative, None, None);
        let d = entry(idx(&s, "D"), CandidateLabel::Liked, Some(4.0), Some(2));
        let out = make_training_target(RankingTask::Listwise, &[b, c, a, d], &s, 0).unwrap();
        assert_eq!(out, "A, D, C, B");
    }

    #[test]
    fn listwise_ties_by_recency() {
        let s = fixture(&[("Old", 5.0), ("New", 5.0)], &[]);
        let old = entry(idx(&s, "Old"), CandidateLabel::Liked, Some(5.0), Some(0));
        let new = entry(idx(&s, "New"), CandidateLabel::Liked, Some(5.0), Some(1));
        for seed in 0..10 {
            let out = make_training_target(RankingTask::Listwise, &[old.clone(), new.clone()], &s, seed).unwrap();
            assert_eq!(out, "New, Old");
        }
    }
}
