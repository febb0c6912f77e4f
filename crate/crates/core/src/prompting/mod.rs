//! Ranking prompts and the instruction-tuning dataset.

mod dataset;
mod target;
mod template;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::corpus::{ItemIdx, SplitDataset, UserIdx};
use crate::num::Real;
use crate::retrieval::FactorModel;
use crate::seed;

pub use dataset::{
    build_instruction_dataset, read_instruction_dataset, write_instruction_dataset, DatasetStats, InstructionConfig,
    InstructionRecord, RecordMeta, TaskCounts,
};
pub use target::{format_rating, make_training_target, preference_key};
pub use template::{Templates, REQUIRED_SECTIONS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("template error: {0}")]
    Template(String),
    #[error("user {0} has no train history")]
    EmptyHistory(String),
    #[error("{task} prompt needs {expected} candidates, got {got}")]
    Arity { task: RankingTask, expected: &'static str, got: usize },
    #[error("hint references item {0} that is not a candidate")]
    HintMismatch(ItemIdx),
    #[error("unknown user index {0}")]
    UnknownUser(UserIdx),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = PromptError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RankingTask {
    Pointwise,
    Pairwise,
    Listwise,
}

impl RankingTask {
    pub const ALL: [RankingTask; 3] = [RankingTask::Pointwise, RankingTask::Pairwise, RankingTask::Listwise];

    pub fn as_str(self) -> &'static str {
        match self {
            RankingTask::Pointwise => "pointwise",
            RankingTask::Pairwise => "pairwise",
            RankingTask::Listwise => "listwise",
        }
    }
}

impl fmt::Display for RankingTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankingTask {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointwise" => Ok(RankingTask::Pointwise),
            "pairwise" => Ok(RankingTask::Pairwise),
            "listwise" => Ok(RankingTask::Listwise),
            other => Err(PromptError::Format(format!("unknown task {other:?}"))),
        }
    }
}

/// Conventional-model prediction injected into a prompt.
#[derive(Debug, Clone, PartialEq)]
pub enum EnhancementHint {
    /// Predicted rating of the single candidate.
    Rating(f64),
    /// The item the model scores higher.
    Prefers(ItemIdx),
    /// Candidates in model order, best first.
    Ranking(Vec<ItemIdx>),
}

impl EnhancementHint {
    fn items(&self) -> &[ItemIdx] {
        match self {
            EnhancementHint::Rating(_) => &[],
            EnhancementHint::Prefers(i) => std::slice::from_ref(i),
            EnhancementHint::Ranking(v) => v,
        }
    }
}

/// A rendered prompt and the presentation it was rendered with.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRecord {
    pub task: RankingTask,
    pub user: UserIdx,
    /// Candidates in the order they appear in the text.
    pub presented_items: Vec<ItemIdx>,
    /// The task directive.
    pub instruction: String,
    /// History, question and optional hint.
    pub input: String,
    pub enhancement: Option<EnhancementHint>,
    pub shuffle_seed: u64,
}

impl PromptRecord {
    /// The full text sent to a model.
    pub fn message(&self) -> String {
        format!("{}\n\n{}", self.instruction, self.input)
    }
}

/// Uniform random permutation under `seed`.
pub fn position_shift<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(&mut seed::rng(seed));
    out
}

/// How a builder orders the candidates it is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateOrder {
    /// Position-shift under the prompt's shuffle seed.
    Shift,
    /// Present exactly as given. Used when the caller controls the order,
    /// as in the two-order pairwise protocol.
    AsGiven,
}

/// Two sentences naming up to `max_items` most recent liked and disliked
/// train items, each group in a seeded random order.
pub fn render_history(
    split: &SplitDataset,
    templates: &Templates,
    user: UserIdx,
    max_items: usize,
    seed: u64,
) -> Result<String> {
    if user >= split.train.n_users() {
        return Err(PromptError::UnknownUser(user));
    }
    let history = split.train.user_ratings(user);
    if history.is_empty() {
        return Err(PromptError::EmptyHistory(split.train.user_id(user).to_string()));
    }
    let scale = split.scale();
    let mut rng = seed::rng(seed);
    let mut group = |liked: bool| {
        // history is chronological; keep the newest `max_items`
        let mut titles: Vec<&str> = history
            .iter()
            .rev()
            .filter(|r| scale.is_liked(r.rating) == liked)
            .take(max_items)
            .map(|r| split.train.title(r.item))
            .collect();
        titles.shuffle(&mut rng);
        titles
    };
    let liked = group(true);
    let disliked = group(false);
    let empty = templates.raw("history.empty")?;
    let join = |t: &[&str]| if t.is_empty() { empty.to_string() } else { t.join(", ") };
    let a = templates.render("history.liked", &[("titles", &join(&liked))])?;
    let b = templates.render("history.disliked", &[("titles", &join(&disliked))])?;
    Ok(format!("{a} {b}"))
}

/// Predictions from conventional models turned into prompt hints. The rating
/// model serves pointwise hints; the ranking model orders pairwise and
/// listwise hints, falling back to the rating model when absent.
#[derive(Debug, Clone, Copy)]
pub struct Enhancer<'a, T> {
    pub rating: Option<&'a FactorModel<T>>,
    pub ranking: Option<&'a FactorModel<T>>,
}

impl<'a, T: Real> Enhancer<'a, T> {
    pub fn new(rating: Option<&'a FactorModel<T>>, ranking: Option<&'a FactorModel<T>>) -> Self {
        Self { rating, ranking }
    }

    fn order_model(&self) -> Option<&'a FactorModel<T>> {
        self.ranking.or(self.rating)
    }

    fn score(model: &FactorModel<T>, split: &SplitDataset, user: UserIdx, item: ItemIdx) -> Option<T> {
        let u = model.user_index(split.train.user_id(user))?;
        let i = model.item_index(split.train.item_id(item))?;
        Some(model.score(u, i))
    }

    /// The hint for `task` over `candidates`, or `None` when no model applies.
    pub fn hint(
        &self,
        split: &SplitDataset,
        task: RankingTask,
        user: UserIdx,
        candidates: &[ItemIdx],
    ) -> Option<EnhancementHint> {
        match task {
            RankingTask::Pointwise => {
                let m = self.rating?;
                let &item = candidates.first()?;
                let p = m.predict_rating_idx(
                    m.user_index(split.train.user_id(user)),
                    m.item_index(split.train.item_id(item)),
                );
                Some(EnhancementHint::Rating(p.to_f64_lossy()))
            }
            RankingTask::Pairwise => {
                let m = self.order_model()?;
                let (&a, &b) = (candidates.first()?, candidates.get(1)?);
                let (sa, sb) = (Self::score(m, split, user, a)?, Self::score(m, split, user, b)?);
                Some(EnhancementHint::Prefers(if sb > sa { b } else { a }))
            }
            RankingTask::Listwise => {
                let m = self.order_model()?;
                let mut scored: Vec<(ItemIdx, T)> =
                    candidates.iter().map(|&i| Some((i, Self::score(m, split, user, i)?))).collect::<Option<_>>()?;
                scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));
                Some(EnhancementHint::Ranking(scored.into_iter().map(|(i, _)| i).collect()))
            }
        }
    }
}

/// Renders prompts for one split and template set.
#[derive(Debug, Clone, Copy)]
pub struct PromptBuilder<'a> {
    pub split: &'a SplitDataset,
    pub templates: &'a Templates,
    pub max_history: usize,
}

pub const DEFAULT_MAX_HISTORY: usize = 15;

impl<'a> PromptBuilder<'a> {
    pub fn new(split: &'a SplitDataset, templates: &'a Templates) -> Self {
        Self { split, templates, max_history: DEFAULT_MAX_HISTORY }
    }

    fn title(&self, item: ItemIdx) -> &str {
        self.split.train.title(item)
    }

    fn titles(&self, items: &[ItemIdx]) -> String {
        items.iter().map(|&i| self.title(i)).collect::<Vec<_>>().join(", ")
    }

    pub fn build(
        &self,
        task: RankingTask,
        user: UserIdx,
        candidates: &[ItemIdx],
        hint: Option<EnhancementHint>,
        shuffle_seed: u64,
        order: CandidateOrder,
    ) -> Result<PromptRecord> {
        let ok = match task {
            RankingTask::Pointwise => candidates.len() == 1,
            RankingTask::Pairwise => candidates.len() == 2,
            RankingTask::Listwise => candidates.len() >= 2,
        };
        if !ok {
            let expected = match task {
                RankingTask::Pointwise => "exactly 1",
                RankingTask::Pairwise => "exactly 2",
                RankingTask::Listwise => "at least 2",
            };
            return Err(PromptError::Arity { task, expected, got: candidates.len() });
        }
        if let Some(h) = &hint {
            let valid = match (task, h) {
                (RankingTask::Pointwise, EnhancementHint::Rating(_)) => true,
                (RankingTask::Pairwise, EnhancementHint::Prefers(_)) => true,
                (RankingTask::Listwise, EnhancementHint::Ranking(v)) => v.len() == candidates.len(),
                _ => false,
            };
            if !valid {
                return Err(PromptError::InvalidConfig(format!("hint does not fit a {task} prompt")));
            }
            if let Some(&bad) = h.items().iter().find(|i| !candidates.contains(i)) {
                return Err(PromptError::HintMismatch(bad));
            }
        }
        let presented = match order {
            CandidateOrder::Shift => position_shift(candidates, seed::derive(shuffle_seed, "candidates")),
            CandidateOrder::AsGiven => candidates.to_vec(),
        };
        let t = self.templates;
        let history = render_history(self.split, t, user, self.max_history, seed::derive(shuffle_seed, "history"))?;
        let scale_max = self.split.scale().max().to_string();
        let (instruction, question) = match task {
            RankingTask::Pointwise => (
                t.render("pointwise.instruction", &[("scale_max", &scale_max)])?,
                t.render("pointwise.question", &[("candidate", self.title(presented[0])), ("scale_max", &scale_max)])?,
            ),
            RankingTask::Pairwise => (
                t.render("pairwise.instruction", &[])?,
                t.render(
                    "pairwise.question",
                    &[("first", self.title(presented[0])), ("second", self.title(presented[1]))],
                )?,
            ),
            RankingTask::Listwise => (
                t.render("listwise.instruction", &[])?,
                t.render("listwise.question", &[("candidates", &self.titles(&presented))])?,
            ),
        };
        let mut input = format!("{history}\n{question}");
        if let Some(h) = &hint {
            let sentence = match h {
                EnhancementHint::Rating(r) => t.render(
                    "hint.pointwise",
                    &[("candidate", self.title(presented[0])), ("rating", &format!("{r:.1}"))],
                )?,
                EnhancementHint::Prefers(i) => t.render("hint.pairwise", &[("preferred", self.title(*i))])?,
                EnhancementHint::Ranking(v) => t.render("hint.listwise", &[("ranking", &self.titles(v))])?,
            };
            input.push('\n');
            input.push_str(&sentence);
        }
        Ok(PromptRecord { task, user, presented_items: presented, instruction, input, enhancement: hint, shuffle_seed })
    }
}
