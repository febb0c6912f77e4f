use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    make_training_target, CandidateOrder, Enhancer, PromptBuilder, PromptError, RankingTask, Result, Templates,
};
use crate::corpus::{SplitDataset, UserIdx};
use crate::num::Real;
use crate::sampling::{select_training_candidates, CandidateEntry, CandidateLabel, Composition, UserMultiset};
use crate::seed;

/// One count per ranking task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub pointwise: usize,
    pub pairwise: usize,
    pub listwise: usize,
}

impl TaskCounts {
    pub fn uniform(n: usize) -> Self {
        Self { pointwise: n, pairwise: n, listwise: n }
    }

    pub fn get(&self, task: RankingTask) -> usize {
        match task {
            RankingTask::Pointwise => self.pointwise,
            RankingTask::Pairwise => self.pairwise,
            RankingTask::Listwise => self.listwise,
        }
    }

    pub fn get_mut(&mut self, task: RankingTask) -> &mut usize {
        match task {
            RankingTask::Pointwise => &mut self.pointwise,
            RankingTask::Pairwise => &mut self.pairwise,
            RankingTask::Listwise => &mut self.listwise,
        }
    }

    pub fn total(&self) -> usize {
        self.pointwise + self.pairwise + self.listwise
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstructionConfig {
    pub counts: TaskCounts,
    pub k_prime: usize,
    pub composition: Composition,
    pub max_history: usize,
    /// Users with fewer train interactions contribute nothing.
    pub min_history: usize,
    /// Inject conventional-model hints into training prompts.
    pub hints: bool,
    pub seed: u64,
}

impl Default for InstructionConfig {
    fn default() -> Self {
        Self {
            counts: TaskCounts::uniform(5000),
            k_prime: 10,
            composition: Composition::default(),
            max_history: super::DEFAULT_MAX_HISTORY,
            min_history: 3,
            hints: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub task: String,
    pub user: String,
    /// Candidate item ids in presented order.
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub meta: RecordMeta,
}

impl InstructionRecord {
    pub fn task(&self) -> Result<RankingTask> {
        self.meta.task.parse()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub requested: TaskCounts,
    pub achieved: TaskCounts,
    pub duplicates_dropped: usize,
    /// Distinct sampled users dropped for short histories.
    pub short_history_users: usize,
    /// Occurrences of those users in the sampled multiset.
    pub short_history_occurrences: usize,
    /// Instances with no determinate target.
    pub indeterminate: usize,
    /// Occurrences whose candidate set could not be drawn.
    pub candidate_failures: usize,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for task in RankingTask::ALL {
            writeln!(f, "{task}\trequested={}\tachieved={}", self.requested.get(task), self.achieved.get(task))?;
        }
        writeln!(f, "duplicates_dropped\t{}", self.duplicates_dropped)?;
        writeln!(f, "short_history_users\t{}", self.short_history_users)?;
        writeln!(f, "short_history_occurrences\t{}", self.short_history_occurrences)?;
        writeln!(f, "indeterminate\t{}", self.indeterminate)?;
        write!(f, "candidate_failures\t{}", self.candidate_failures)
    }
}

/// Chooses the entries a single training prompt is about.
fn pick_entries<R: Rng>(task: RankingTask, entries: &[CandidateEntry], rng: &mut R) -> Option<Vec<CandidateEntry>> {
    let of = |label| entries.iter().filter(|e| e.label == label).collect::<Vec<_>>();
    match task {
        RankingTask::Pointwise => {
            let rated: Vec<&CandidateEntry> = entries.iter().filter(|e| e.rating.is_some()).collect();
            rated.choose(rng).map(|e| vec![(*e).clone()])
        }
        RankingTask::Pairwise => {
            let (l, d, n) = (of(CandidateLabel::Liked), of(CandidateLabel::Disliked), of(CandidateLabel::Negative));
            let kinds: Vec<(&Vec<&CandidateEntry>, &Vec<&CandidateEntry>)> =
                [(&l, &d), (&l, &n), (&d, &n)].into_iter().filter(|(a, b)| !a.is_empty() && !b.is_empty()).collect();
            let (a, b) = kinds.choose(rng)?;
            Some(vec![(*a.choose(rng)?).clone(), (*b.choose(rng)?).clone()])
        }
        RankingTask::Listwise => Some(entries.to_vec()),
    }
}

/// Builds the instruction dataset from the sampled multiset: for each task,
/// one prompt per multiset occurrence (visited in a seeded order) until the
/// requested count is reached. Exact duplicate prompt texts are dropped.
pub fn build_instruction_dataset<T: Real>(
    split: &SplitDataset,
    u_ins: &UserMultiset,
    templates: &Templates,
    enhancer: Option<&Enhancer<'_, T>>,
    cfg: &InstructionConfig,
) -> Result<(Vec<InstructionRecord>, DatasetStats)> {
    if cfg.composition.total() != cfg.k_prime {
        return Err(PromptError::InvalidConfig(format!(
            "candidate composition sums to {}, expected {}",
            cfg.composition.total(),
            cfg.k_prime
        )));
    }
    let mut stats = DatasetStats { requested: cfg.counts, ..Default::default() };
    let mut short = BTreeSet::new();
    let mut eligible: Vec<UserIdx> = Vec::new();
    for (u, m) in u_ins.iter() {
        if u < split.train.n_users() && split.train.user_ratings(u).len() >= cfg.min_history {
            eligible.extend(std::iter::repeat_n(u, m));
        } else {
            short.insert(u);
            stats.short_history_occurrences += m;
        }
    }
    stats.short_history_users = short.len();
    let builder = PromptBuilder { max_history: cfg.max_history, ..PromptBuilder::new(split, templates) };
    let mut seen = HashSet::new();
    let mut records = Vec::new();

    for task in RankingTask::ALL {
        let want = cfg.counts.get(task);
        let task_seed = seed::derive(cfg.seed, task.as_str());
        let mut order = eligible.clone();
        order.shuffle(&mut seed::rng(seed::derive(task_seed, "order")));
        let mut got = 0;
        for (j, &user) in order.iter().enumerate() {
            if got == want {
                break;
            }
            let rec_seed = seed::derive(task_seed, &j.to_string());
            let set = match select_training_candidates(
                split,
                user,
                cfg.k_prime,
                cfg.composition,
                seed::derive(rec_seed, "candidates"),
            ) {
                Ok(s) => s,
                Err(e) => {
                    warn!("user {}: {e}", split.train.user_id(user));
                    stats.candidate_failures += 1;
                    continue;
                }
            };
            let mut rng = seed::rng(seed::derive(rec_seed, "pick"));
            let Some(chosen) = pick_entries(task, &set.entries, &mut rng) else {
                stats.indeterminate += 1;
                continue;
            };
            let items: Vec<_> = chosen.iter().map(|e| e.item).collect();
            let hint = if cfg.hints { enhancer.and_then(|h| h.hint(split, task, user, &items)) } else { None };
            let prompt =
                builder.build(task, user, &items, hint, seed::derive(rec_seed, "shuffle"), CandidateOrder::Shift)?;
            let presented: Vec<CandidateEntry> = prompt
                .presented_items
                .iter()
                .map(|&i| chosen.iter().find(|e| e.item == i).cloned().expect("presented items come from chosen"))
                .collect();
            let Some(output) = make_training_target(task, &presented, split, seed::derive(rec_seed, "ties")) else {
                stats.indeterminate += 1;
                continue;
            };
            if !seen.insert(prompt.message()) {
                stats.duplicates_dropped += 1;
                continue;
            }
            records.push(InstructionRecord {
                instruction: prompt.instruction,
                input: prompt.input,
                output,
                meta: RecordMeta {
                    task: task.as_str().to_string(),
                    user: split.train.user_id(user).to_string(),
                    items: prompt.presented_items.iter().map(|&i| split.train.item_id(i).to_string()).collect(),
                },
            });
            got += 1;
        }
        *stats.achieved.get_mut(task) = got;
        if got < want {
            warn!("{task}: requested {want} instructions, achieved {got}");
        }
    }
    info!(
        "instruction dataset: {} records, {} duplicates dropped, {} short-history users dropped",
        records.len(),
        stats.duplicates_dropped,
        stats.short_history_users
    );
    Ok((records, stats))
}

#[derive(Serialize, Deserialize)]
struct Line {
    instruction: String,
    input: String,
    output: String,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    line: usize,
    #[serde(flatten)]
    meta: RecordMeta,
}

/// Writes one `{"instruction", "input", "output"}` object per line to
/// `data`, and a sidecar line `{"line", "task", "user", "items"}` per record
/// to `meta`, numbering lines from 1.
pub fn write_instruction_dataset<W: Write, M: Write>(
    data: &mut W,
    meta: &mut M,
    records: &[InstructionRecord],
) -> std::io::Result<()> {
    for (n, r) in records.iter().enumerate() {
        let line = Line { instruction: r.instruction.clone(), input: r.input.clone(), output: r.output.clone() };
        serde_json::to_writer(&mut *data, &line)?;
        data.write_all(b"\n")?;
        serde_json::to_writer(&mut *meta, &MetaLine { line: n + 1, meta: r.meta.clone() })?;
        meta.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_instruction_dataset(data: &str, meta: &str) -> Result<Vec<InstructionRecord>> {
    let bad = |n: usize, e: &dyn std::fmt::Display| PromptError::Format(format!("line {n}: {e}"));
    let lines: Vec<&str> = data.lines().filter(|l| !l.is_empty()).collect();
    let metas: Vec<&str> = meta.lines().filter(|l| !l.is_empty()).collect();
    if lines.len() != metas.len() {
        return Err(PromptError::Format(format!("{} records but {} metadata lines", lines.len(), metas.len())));
    }
    let mut out = Vec::with_capacity(lines.len());
    for (n, (l, m)) in lines.iter().zip(&metas).enumerate() {
        let line: Line = serde_json::from_str(l).map_err(|e| bad(n + 1, &e))?;
        let meta: MetaLine = serde_json::from_str(m).map_err(|e| bad(n + 1, &e))?;
        if meta.line != n + 1 {
            return Err(bad(n + 1, &format!("metadata numbered {}", meta.line)));
        }
        meta.meta.task.parse::<RankingTask>()?;
        out.push(InstructionRecord {
            instruction: line.instruction,
            input: line.input,
            output: line.output,
            meta: meta.meta,
        });
    }
    Ok(out)
}
