use rand::seq::SliceRandom;
use rand::Rng;

use super::{Backend, CompletionParams, CompletionRequest, GatewayError, Result};
use crate::corpus::{ItemIdx, SplitDataset, UserIdx};
use crate::num::Real;
use crate::prompting::{format_rating, RankingTask};
use crate::retrieval::FactorModel;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Probability that an answer is replaced by a uniformly random one.
    pub noise: f64,
    pub seed: u64,
}

/// Deterministic stand-in for a tuned model. It knows each user's train
/// ratings and held test item and answers every prompt from them; the test
/// item is rated strictly above everything else.
pub struct OracleBackend<'a, T> {
    split: &'a SplitDataset,
    rating_model: Option<&'a FactorModel<T>>,
    cfg: OracleConfig,
}

impl<'a, T: Real> OracleBackend<'a, T> {
    pub fn new(split: &'a SplitDataset, rating_model: Option<&'a FactorModel<T>>, cfg: OracleConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.noise) {
            return Err(GatewayError::Config(format!("oracle noise {} outside [0, 1]", cfg.noise)));
        }
        Ok(Self { split, rating_model, cfg })
    }

    /// Held test item → scale maximum; train item → observed rating; other
    /// items → rounded model prediction. Everything but the test item is
    /// capped one below the maximum.
    pub fn rating(&self, user: UserIdx, item: ItemIdx) -> f64 {
        let max = f64::from(self.split.scale().max());
        if self.split.test_item(user) == Some(item) {
            return max;
        }
        let r = match self.split.train_rating(user, item) {
            Some(r) => r,
            None => match self.rating_model {
                Some(m) => m
                    .predict_rating_idx(
                        m.user_index(self.split.train.user_id(user)),
                        m.item_index(self.split.train.item_id(item)),
                    )
                    .to_f64_lossy()
                    .round(),
                None => ((1.0 + max) / 2.0).round(),
            },
        };
        r.clamp(1.0, (max - 1.0).max(1.0))
    }

    /// Items by descending oracle rating, ties by ascending index.
    fn ranked(&self, user: UserIdx, items: &[ItemIdx]) -> Vec<ItemIdx> {
        let mut keyed: Vec<(ItemIdx, f64)> = items.iter().map(|&i| (i, self.rating(user, i))).collect();
        keyed.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        keyed.into_iter().map(|(i, _)| i).collect()
    }

    fn titles(&self, items: &[ItemIdx]) -> String {
        items.iter().map(|&i| self.split.train.title(i)).collect::<Vec<_>>().join(", ")
    }

    /// The answer for a prompt with the given metadata.
    pub fn answer(&self, task: RankingTask, user: UserIdx, presented: &[ItemIdx], shuffle_seed: u64) -> String {
        let key = format!(
            "{}:{}:{}:{}",
            task.as_str(),
            user,
            presented.iter().map(ItemIdx::to_string).collect::<Vec<_>>().join(","),
            shuffle_seed
        );
        let mut rng = seed::rng(seed::derive(self.cfg.seed, &key));
        let noisy = rng.gen::<f64>() < self.cfg.noise;
        match task {
            RankingTask::Pointwise => {
                let r = if noisy {
                    f64::from(rng.gen_range(1..=self.split.scale().max()))
                } else {
                    presented.first().map_or(1.0, |&i| self.rating(user, i))
                };
                format!("{}.", format_rating(r))
            }
            RankingTask::Pairwise => {
                let first = if noisy {
                    rng.gen_bool(0.5)
                } else {
                    match presented {
                        [a, b] => self.ranked(user, &[*a, *b])[0] == *a,
                        _ => true,
                    }
                };
                if first {
                    "Yes.".into()
                } else {
                    "No.".into()
                }
            }
            RankingTask::Listwise => {
                let order = if noisy {
                    let mut v = presented.to_vec();
                    v.shuffle(&mut rng);
                    v
                } else {
                    self.ranked(user, presented)
                };
                self.titles(&order)
            }
        }
    }
}

impl<T: Real> Backend for OracleBackend<'_, T> {
    fn complete(&self, request: &CompletionRequest<'_>, _: &CompletionParams) -> Result<String> {
        let p = request.prompt;
        Ok(self.answer(p.task, p.user, &p.presented_items, p.shuffle_seed))
    }
}
