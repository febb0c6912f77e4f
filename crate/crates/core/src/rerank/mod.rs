//! Utility scoring and hybrid fusion of model judgments over retrieval
//! candidates.

mod io;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::corpus::{ItemIdx, UserIdx};
use crate::gateway::{parse_response, Backend, CompletionRequest, Gateway, Payload, Preference};
use crate::num::{Real, Scalar};
use crate::prompting::{CandidateOrder, Enhancer, PromptBuilder, PromptError, PromptRecord, RankingTask};
use crate::seed;

pub use io::{read_rerank_results, write_rerank_results, write_utilities};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RerankError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = RerankError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RerankMode {
    Pointwise,
    Pairwise,
    Listwise,
    Hybrid,
}

impl RerankMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RerankMode::Pointwise => "pointwise",
            RerankMode::Pairwise => "pairwise",
            RerankMode::Listwise => "listwise",
            RerankMode::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for RerankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RerankMode {
    type Err = RerankError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointwise" => Ok(RerankMode::Pointwise),
            "pairwise" => Ok(RerankMode::Pairwise),
            "listwise" => Ok(RerankMode::Listwise),
            "hybrid" => Ok(RerankMode::Hybrid),
            other => Err(RerankError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankConfig<T> {
    pub k: usize,
    pub k_prime: usize,
    pub c1: T,
    pub c2: T,
    pub c3: T,
    /// Weights of the pointwise, pairwise and listwise utilities.
    pub alpha: [T; 3],
    pub mode: RerankMode,
    pub listwise_shuffles: usize,
    pub seed: u64,
    /// Inject conventional-model hints into prompts.
    pub hints: bool,
}

impl<T: Scalar> Default for RerankConfig<T> {
    fn default() -> Self {
        let third = T::one() / T::from_usize_exact(3);
        Self {
            k: 5,
            k_prime: 10,
            c1: T::lit(0.05),
            c2: T::lit(0.5),
            c3: T::lit(0.025),
            alpha: [third, third, third],
            mode: RerankMode::Hybrid,
            listwise_shuffles: 2,
            seed: 0,
            hints: true,
        }
    }
}

impl<T: Scalar> RerankConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RerankError::InvalidConfig(m.into()));
        if self.k == 0 || self.k >= self.k_prime {
            return bad("need 1 <= k < k'");
        }
        if !(self.c1 > T::zero() && self.c2 > T::zero() && self.c3 > T::zero()) {
            return bad("C1, C2 and C3 must be positive");
        }
        if self.alpha.iter().any(|&a| a < T::zero()) {
            return bad("weights must be non-negative");
        }
        let sum = self.alpha[0] + self.alpha[1] + self.alpha[2];
        let tol = T::lit(1e-9);
        if sum > T::one() + tol || sum < T::one() - tol {
            return bad("weights must sum to 1");
        }
        if self.listwise_shuffles == 0 {
            return bad("listwise_shuffles must be at least 1");
        }
        Ok(())
    }

    /// Gateway calls one user costs in this configuration.
    pub fn call_budget(&self) -> usize {
        let (point, pair, list) = (self.k_prime, 2 * self.k, self.listwise_shuffles);
        match self.mode {
            RerankMode::Pointwise => point,
            RerankMode::Pairwise => pair,
            RerankMode::Listwise => list,
            RerankMode::Hybrid => point + pair + list,
        }
    }
}

/// Per-candidate utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityVector<T> {
    pub item: ItemIdx,
    /// 1-based retrieval position.
    pub position: usize,
    pub u_retrieval: T,
    pub u_pointwise: Option<T>,
    pub u_pairwise: T,
    pub u_listwise: Option<T>,
    pub u_hybrid: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankResult<T> {
    pub user: UserIdx,
    /// Every candidate, best first.
    pub final_order: Vec<ItemIdx>,
    pub top_k: Vec<ItemIdx>,
    pub call_count: usize,
    pub parse_failures: usize,
    pub gateway_errors: usize,
    /// Every call failed; the order is the retrieval order.
    pub degraded: bool,
    pub utilities: Vec<UtilityVector<T>>,
}

/// `-m · C₁`.
pub fn retrieval_utility<T: Scalar>(m: usize, c1: T) -> T {
    T::zero() - T::from_usize_exact(m) * c1
}

/// `U_retrieval + P` per candidate, absent where the rating is absent.
/// `ratings[j]` belongs to the candidate at retrieval position `j + 1`.
pub fn pointwise_utilities<T: Scalar>(ratings: &[Option<T>], c1: T) -> Vec<Option<T>> {
    ratings.iter().enumerate().map(|(j, r)| r.map(|p| retrieval_utility(j + 1, c1) + p)).collect()
}

/// `k` pairs of candidate indices `(top, rest)`, matching the first `k`
/// candidates with a uniformly random choice of the others. With fewer than
/// `k` others they are reused cyclically in a random order.
pub fn pairwise_pairs(n: usize, k: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n <= k || k == 0 {
        return Err(RerankError::InvalidConfig(format!("pairwise needs 1 <= k < k' (k={k}, k'={n})")));
    }
    let mut rest: Vec<usize> = (k..n).collect();
    rest.shuffle(&mut seed::rng(seed));
    Ok((0..k).map(|i| (i, rest[i % rest.len()])).collect())
}

/// Each pair asked in both orders: `answers[p] = (answer with pair.0 first,
/// answer with pair.1 first)`. A pair whose two answers name the same item
/// gives that item `C₂`.
pub fn pairwise_utilities<T: Scalar>(
    n: usize,
    pairs: &[(usize, usize)],
    answers: &[(Option<Preference>, Option<Preference>)],
    c2: T,
) -> Vec<T> {
    let mut u = vec![T::zero(); n];
    for (&(a, b), &(ab, ba)) in pairs.iter().zip(answers) {
        let w1 = match ab {
            Some(Preference::First) => a,
            Some(Preference::Second) => b,
            None => continue,
        };
        let w2 = match ba {
            Some(Preference::First) => b,
            Some(Preference::Second) => a,
            None => continue,
        };
        if w1 == w2 {
            u[w1] = u[w1] + c2;
        }
    }
    u
}

/// Mean over valid permutations of `-m′ · C₃`, where `m′` is the 1-based
/// predicted position. Each permutation lists candidate indices best first.
pub fn listwise_utilities<T: Scalar>(n: usize, perms: &[Option<Vec<usize>>], c3: T) -> Vec<Option<T>> {
    let valid: Vec<&Vec<usize>> = perms.iter().flatten().collect();
    if valid.is_empty() {
        return vec![None; n];
    }
    let mut sum = vec![T::zero(); n];
    for perm in &valid {
        for (pos, &c) in perm.iter().enumerate() {
            sum[c] = sum[c] - T::from_usize_exact(pos + 1) * c3;
        }
    }
    let count = T::from_usize_exact(valid.len());
    sum.into_iter().map(|s| Some(s / count)).collect()
}

/// The score each mode sorts by. Hybrid interpolates with `α`, using
/// `u_retrieval` for a missing pointwise term and 0 for a missing listwise
/// term; single-task modes use their own utility with the same fallbacks.
pub fn mode_score<T: Scalar>(v: &UtilityVector<T>, cfg: &RerankConfig<T>) -> T {
    let point = v.u_pointwise.unwrap_or(v.u_retrieval);
    let list = v.u_listwise.unwrap_or_else(T::zero);
    match cfg.mode {
        RerankMode::Pointwise => point,
        RerankMode::Pairwise => v.u_pairwise,
        RerankMode::Listwise => list,
        RerankMode::Hybrid => cfg.alpha[0] * point + cfg.alpha[1] * v.u_pairwise + cfg.alpha[2] * list,
    }
}

/// Fills in `u_hybrid` for every vector.
pub fn hybrid_combine<T: Scalar>(vectors: &mut [UtilityVector<T>], cfg: &RerankConfig<T>) {
    for v in vectors.iter_mut() {
        v.u_hybrid = mode_score(v, cfg);
    }
}

/// Candidates sorted by `u_hybrid` descending, ties by retrieval position.
pub fn order_by_utility<T: Scalar>(vectors: &[UtilityVector<T>]) -> Vec<ItemIdx> {
    let mut idx: Vec<usize> = (0..vectors.len()).collect();
    idx.sort_by(|&a, &b| {
        let (va, vb) = (&vectors[a], &vectors[b]);
        vb.u_hybrid.partial_cmp(&va.u_hybrid).unwrap_or(Ordering::Equal).then(va.position.cmp(&vb.position))
    });
    idx.into_iter().map(|i| vectors[i].item).collect()
}

/// Issues the judgment calls for one user and fuses them.
pub struct Reranker<'a, M> {
    pub builder: PromptBuilder<'a>,
    pub enhancer: Option<Enhancer<'a, M>>,
}

struct Planned {
    task: RankingTask,
    prompt: PromptRecord,
    id: String,
}

impl<'a, M: Real> Reranker<'a, M> {
    pub fn new(builder: PromptBuilder<'a>, enhancer: Option<Enhancer<'a, M>>) -> Self {
        Self { builder, enhancer }
    }

    fn prompt(
        &self,
        cfg_hints: bool,
        task: RankingTask,
        user: UserIdx,
        items: &[ItemIdx],
        seed: u64,
        order: CandidateOrder,
    ) -> Result<PromptRecord> {
        let hint = if cfg_hints {
            self.enhancer.as_ref().and_then(|e| e.hint(self.builder.split, task, user, items))
        } else {
            None
        };
        Ok(self.builder.build(task, user, items, hint, seed, order)?)
    }

    /// Reranks `candidates` (retrieval order) for `user`.
    pub fn rerank_user<T: Scalar, B: Backend>(
        &self,
        gateway: &Gateway<B>,
        user: UserIdx,
        candidates: &[ItemIdx],
        cfg: &RerankConfig<T>,
    ) -> Result<RerankResult<T>> {
        cfg.validate()?;
        let n = candidates.len();
        let split = self.builder.split;
        let uid = split.train.user_id(user).to_string();
        let user_seed = seed::derive(cfg.seed, &format!("user:{uid}"));
        let wants = |t: RankingTask| {
            matches!(
                (cfg.mode, t),
                (RerankMode::Hybrid, _)
                    | (RerankMode::Pointwise, RankingTask::Pointwise)
                    | (RerankMode::Pairwise, RankingTask::Pairwise)
                    | (RerankMode::Listwise, RankingTask::Listwise)
            )
        };

        let mut plan: Vec<Planned> = Vec::new();
        if wants(RankingTask::Pointwise) {
            for (j, &item) in candidates.iter().enumerate() {
                let s = seed::derive(user_seed, &format!("pointwise:{j}"));
                let prompt =
                    self.prompt(cfg.hints, RankingTask::Pointwise, user, &[item], s, CandidateOrder::AsGiven)?;
                plan.push(Planned { task: RankingTask::Pointwise, prompt, id: format!("{uid}/pointwise/{j:03}") });
            }
        }
        let pairs = if wants(RankingTask::Pairwise) && n > cfg.k {
            pairwise_pairs(n, cfg.k, seed::derive(user_seed, "pairs"))?
        } else {
            Vec::new()
        };
        for (p, &(a, b)) in pairs.iter().enumerate() {
            for (tag, items) in [("ab", [candidates[a], candidates[b]]), ("ba", [candidates[b], candidates[a]])] {
                let s = seed::derive(user_seed, &format!("pairwise:{p}:{tag}"));
                let prompt = self.prompt(cfg.hints, RankingTask::Pairwise, user, &items, s, CandidateOrder::AsGiven)?;
                plan.push(Planned { task: RankingTask::Pairwise, prompt, id: format!("{uid}/pairwise/{p:03}/{tag}") });
            }
        }
        if wants(RankingTask::Listwise) && n >= 2 {
            for s in 0..cfg.listwise_shuffles {
                let sd = seed::derive(user_seed, &format!("listwise:{s}"));
                let prompt =
                    self.prompt(cfg.hints, RankingTask::Listwise, user, candidates, sd, CandidateOrder::Shift)?;
                plan.push(Planned { task: RankingTask::Listwise, prompt, id: format!("{uid}/listwise/{s:03}") });
            }
        }

        let requests: Vec<CompletionRequest> =
            plan.iter().map(|p| CompletionRequest { id: p.id.clone(), prompt: &p.prompt }).collect();
        let responses = gateway.complete_all(&requests);
        let gateway_errors = responses.iter().filter(|r| r.is_err()).count();
        let scale_max = split.scale().max();
        let position_of =
            |item: ItemIdx| candidates.iter().position(|&c| c == item).expect("prompt items are candidates");

        let mut parse_failures = 0;
        let mut ratings: Vec<Option<T>> = vec![None; n];
        let mut answers = vec![(None, None); pairs.len()];
        let mut perms: Vec<Option<Vec<usize>>> = Vec::new();
        let mut pair_slot = 0;
        for (planned, response) in plan.iter().zip(&responses) {
            let presented = &planned.prompt.presented_items;
            let parsed = response.as_ref().ok().and_then(|text| {
                let titles: Vec<&str> = presented.iter().map(|&i| split.train.title(i)).collect();
                let mut backfill: Vec<usize> = (0..presented.len()).collect();
                backfill.sort_by_key(|&j| position_of(presented[j]));
                parse_response(planned.task, text, &titles, &backfill, scale_max)
            });
            if response.is_ok() && parsed.is_none() {
                parse_failures += 1;
            }
            let payload = parsed.map(|p| p.payload);
            match planned.task {
                RankingTask::Pointwise => {
                    if let Some(Payload::Rating(r)) = payload {
                        ratings[position_of(presented[0])] = Some(T::lit(r));
                    }
                }
                RankingTask::Pairwise => {
                    let pref = match payload {
                        Some(Payload::Preference(p)) => Some(p),
                        _ => None,
                    };
                    let slot = &mut answers[pair_slot / 2];
                    if pair_slot % 2 == 0 {
                        slot.0 = pref;
                    } else {
                        slot.1 = pref;
                    }
                    pair_slot += 1;
                }
                RankingTask::Listwise => perms.push(match payload {
                    Some(Payload::Permutation(p)) => Some(p.iter().map(|&j| position_of(presented[j])).collect()),
                    _ => None,
                }),
            }
        }

        let point = pointwise_utilities(&ratings, cfg.c1);
        let pair = pairwise_utilities(n, &pairs, &answers, cfg.c2);
        let list = if perms.is_empty() { vec![None; n] } else { listwise_utilities(n, &perms, cfg.c3) };
        let mut utilities: Vec<UtilityVector<T>> = (0..n)
            .map(|j| UtilityVector {
                item: candidates[j],
                position: j + 1,
                u_retrieval: retrieval_utility(j + 1, cfg.c1),
                u_pointwise: point[j],
                u_pairwise: pair[j],
                u_listwise: list[j],
                u_hybrid: T::zero(),
            })
            .collect();
        hybrid_combine(&mut utilities, cfg);
        let degraded = !plan.is_empty() && gateway_errors == plan.len();
        let final_order = if degraded { candidates.to_vec() } else { order_by_utility(&utilities) };
        Ok(RerankResult {
            user,
            top_k: final_order.iter().take(cfg.k).copied().collect(),
            final_order,
            call_count: plan.len(),
            parse_failures,
            gateway_errors,
            degraded,
            utilities,
        })
    }
}
