//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Set `RECRANK_ML100K` to the path of a MovieLens-100K `u.data` file to add
//! the real-data ingestion check to criterion 1.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use recrank_core::corpus::synthetic::{self, generate, SyntheticConfig};
use recrank_core::corpus::{
    leave_one_out_split, parse_catalog, parse_interactions, CatalogFormat, Dataset, Delimiter, Interaction, ItemIdx,
    ParseOptions, RatingScale, SplitDataset, UserIdx,
};
use recrank_core::eval::{hit_ratio, metric_report, ndcg, transition_analysis, NdcgForm};
use recrank_core::gateway::{
    parse_listwise, parse_pairwise, parse_pointwise, Backend, CompletionParams, CompletionRequest, Gateway,
    GatewayError, OracleBackend, OracleConfig, Preference,
};
use recrank_core::prompting::{
    build_instruction_dataset, write_instruction_dataset, Enhancer, InstructionConfig, PromptBuilder, RankingTask,
    TaskCounts, Templates,
};
use recrank_core::rerank::{hybrid_combine, order_by_utility, RerankConfig, RerankMode, Reranker, UtilityVector};
use recrank_core::retrieval::{top_candidates, train_ranking_mf, train_rating_mf, MfConfig};
use recrank_core::sampling::{
    cluster_users, clustering_sampling, importance_sampling, importance_weights, penalty_resampling, UserMultiset,
};
use recrank_core::{seed, FactorModelF64};

type Q = Ratio<i64>;
type Check = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Check + 'a>);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

fn scale5() -> RatingScale {
    RatingScale::new(5).unwrap()
}

// 1. ingestion

/// Counts of the bundled fixture, taken with awk over the raw file.
const FIXTURE_USERS: usize = 120;
const FIXTURE_ITEMS: usize = 90;
const FIXTURE_RATINGS: usize = 2023;
const FIXTURE_HISTOGRAM: [usize; 5] = [98, 580, 721, 428, 196];

fn ingest_file(ratings: &str, items: Option<&str>) -> Result<Dataset, String> {
    let interactions =
        parse_interactions(ratings, &ParseOptions::new(Delimiter::Tab, scale5())).map_err(|e| e.to_string())?;
    let catalog = match items {
        Some(text) => parse_catalog(text, &CatalogFormat::new(Delimiter::Pipe)).map_err(|e| e.to_string())?,
        None => Default::default(),
    };
    Dataset::new(interactions, &catalog, scale5()).map_err(|e| e.to_string())
}

fn criterion_ingestion() -> Check {
    let start = Instant::now();
    let ratings = fs::read_to_string(fixtures().join("ratings.tsv")).map_err(|e| e.to_string())?;
    let items = fs::read_to_string(fixtures().join("items.txt")).map_err(|e| e.to_string())?;
    let ds = ingest_file(&ratings, Some(&items))?;
    let got = (ds.n_users(), ds.n_items(), ds.n_interactions());
    ensure(got == (FIXTURE_USERS, FIXTURE_ITEMS, FIXTURE_RATINGS), || format!("fixture counts {got:?}"))?;
    let density = FIXTURE_RATINGS as f64 / (FIXTURE_USERS * FIXTURE_ITEMS) as f64;
    ensure((ds.density() - density).abs() < 1e-12, || format!("fixture density {}", ds.density()))?;
    let mut histogram = [0usize; 5];
    for r in ds.ratings() {
        histogram[r.rating as usize - 1] += 1;
    }
    ensure(histogram == FIXTURE_HISTOGRAM, || format!("rating histogram {histogram:?}"))?;
    ensure(ds.title(0).ends_with(')'), || format!("catalog not joined: {:?}", ds.title(0)))?;
    within(start, Duration::from_secs(10))?;
    let mut detail = format!("fixture {FIXTURE_USERS} users, {FIXTURE_ITEMS} items, {FIXTURE_RATINGS} ratings");

    match std::env::var_os("RECRANK_ML100K") {
        Some(path) => {
            let start = Instant::now();
            let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", Path::new(&path).display()))?;
            let ds = ingest_file(&text, None)?;
            let got = (ds.n_users(), ds.n_items(), ds.n_interactions());
            ensure(got == (943, 1682, 100_000), || format!("ML-100K counts {got:?}"))?;
            ensure((ds.density() - 0.063046).abs() < 1e-6, || format!("ML-100K density {}", ds.density()))?;
            within(start, Duration::from_secs(10))?;
            detail.push_str(&format!("; ML-100K 943/1682/100000 density {:.6}", ds.density()));
        }
        None => detail.push_str("; ML-100K not checked (RECRANK_ML100K unset)"),
    }
    Ok(detail)
}

// 2. sampling distributions

fn counts_dataset(counts: &[usize]) -> Dataset {
    let mut data = Vec::new();
    for (u, &q) in counts.iter().enumerate() {
        for i in 0..q {
            data.push(Interaction::new(format!("u{u}"), format!("i{i}"), 3.0, i as i64));
        }
    }
    Dataset::new(data, &Default::default(), scale5()).unwrap()
}

fn frequencies(m: &UserMultiset, users: usize) -> Vec<f64> {
    (0..users).map(|u| m.multiplicity(u) as f64 / m.total() as f64).collect()
}

fn criterion_sampling() -> Check {
    let start = Instant::now();
    let draws = 100_000;

    let ds = counts_dataset(&[2, 4, 8]);
    let users: Vec<UserIdx> = ["u0", "u1", "u2"].iter().map(|u| ds.user_idx(u).unwrap()).collect();
    let m = importance_sampling(&importance_weights::<f64>(&ds), draws, 17).map_err(|e| e.to_string())?;
    let want = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
    let l1: f64 = users.iter().zip(want).map(|(&u, p)| (m.multiplicity(u) as f64 / draws as f64 - p).abs()).sum();
    ensure(l1 <= 0.01, || format!("importance L1 {l1:.4}"))?;

    // three clouds of unequal size
    let mut points = Vec::new();
    for (cloud, size) in [(0.0, 6), (20.0, 12), (40.0, 22)] {
        for i in 0..size {
            let j = (i as f64 * 0.7).sin();
            points.push(vec![cloud + j, cloud - j]);
        }
    }
    let assignments = cluster_users(&points, 3, 5).map_err(|e| e.to_string())?;
    let mut sizes = HashMap::new();
    for &c in &assignments {
        *sizes.entry(c).or_insert(0usize) += 1;
    }
    let mut size_list: Vec<usize> = sizes.values().copied().collect();
    size_list.sort_unstable();
    ensure(size_list == [6, 12, 22], || format!("cluster sizes {size_list:?}"))?;
    let norm: usize = assignments.iter().map(|c| sizes[c]).sum();
    let m = clustering_sampling::<f64>(&assignments, draws, 23).map_err(|e| e.to_string())?;
    let chi2: f64 = (0..points.len())
        .map(|u| {
            let expected = draws as f64 * sizes[&assignments[u]] as f64 / norm as f64;
            let observed = m.multiplicity(u) as f64;
            (observed - expected).powi(2) / expected
        })
        .sum();
    let df = (points.len() - 1) as f64;
    let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
    ensure(chi2 < critical, || format!("clustering chi2 {chi2:.2} >= {critical:.2}"))?;

    let mut combined = UserMultiset::new();
    combined.insert(0, 1);
    combined.insert(1, 2);
    let m = penalty_resampling(&combined, draws, 0.92f64, 31).map_err(|e| e.to_string())?;
    let f = frequencies(&m, 2);
    ensure((f[0] - 0.5208).abs() <= 0.005 && (f[1] - 0.4792).abs() <= 0.005, || format!("penalty {f:?}"))?;

    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "importance L1 {l1:.4}; clustering chi2 {chi2:.2} < {critical:.2} (df {df}); penalty [{:.4}, {:.4}]",
        f[0], f[1]
    ))
}

// 3. hybrid arithmetic against a brute-force scorer

#[derive(Debug, Clone)]
enum Intent {
    Rating(Option<i64>),
    /// `Some(true)` when the first presented item wins.
    Pref(Option<bool>),
    /// Items named in the answer, best first; `None` when invalid.
    Order(Option<Vec<ItemIdx>>),
}

struct Call {
    id: String,
    task: RankingTask,
    presented: Vec<ItemIdx>,
    intent: Intent,
}

/// Answers each request with a randomly scripted response and remembers what
/// it meant.
struct Scripted<'a> {
    split: &'a SplitDataset,
    seed: u64,
    calls: Mutex<Vec<Call>>,
}

impl Backend for Scripted<'_> {
    fn complete(&self, r: &CompletionRequest<'_>, _: &CompletionParams) -> Result<String, GatewayError> {
        let mut rng = seed::rng(seed::derive(self.seed, &r.id));
        let presented = r.prompt.presented_items.clone();
        let fail = rng.gen_bool(0.1);
        let (text, intent) = match r.prompt.task {
            RankingTask::Pointwise => match rng.gen_range(0..6) {
                0 => ("no idea".to_string(), Intent::Rating(None)),
                1 => ("9".to_string(), Intent::Rating(None)),
                v => (format!("{}.", v - 1), Intent::Rating(Some(v as i64 - 1))),
            },
            RankingTask::Pairwise => match rng.gen_range(0..3) {
                0 => ("Yes.".to_string(), Intent::Pref(Some(true))),
                1 => ("No.".to_string(), Intent::Pref(Some(false))),
                _ => ("maybe".to_string(), Intent::Pref(None)),
            },
            RankingTask::Listwise => {
                let n = presented.len();
                let shown = rng.gen_range(0..=n);
                let mut named = presented.clone();
                named.shuffle(&mut rng);
                named.truncate(shown);
                let titles: Vec<&str> = named.iter().map(|&i| self.split.train.title(i)).collect();
                let valid = 2 * shown >= n && shown > 0;
                (titles.join(", "), Intent::Order(valid.then_some(named)))
            }
        };
        let intent = match (fail, intent) {
            (false, i) => i,
            (true, Intent::Rating(_)) => Intent::Rating(None),
            (true, Intent::Pref(_)) => Intent::Pref(None),
            (true, Intent::Order(_)) => Intent::Order(None),
        };
        self.calls.lock().unwrap().push(Call { id: r.id.clone(), task: r.prompt.task, presented, intent });
        if fail {
            Err(GatewayError::Transport("scripted failure".into()))
        } else {
            Ok(text)
        }
    }
}

struct Brute {
    point: Vec<Option<Q>>,
    pair: Vec<Q>,
    list: Vec<Option<Q>>,
    hybrid: Vec<Q>,
    order: Vec<ItemIdx>,
}

/// Scores from first principles over the recorded calls.
fn brute_force(cands: &[ItemIdx], calls: &[Call], cfg: &RerankConfig<Q>) -> Brute {
    let n = cands.len();
    let pos = |item: ItemIdx| cands.iter().position(|&c| c == item).unwrap();
    let m = |j: usize| Q::from_integer(j as i64 + 1);

    let mut point = vec![None; n];
    for c in calls.iter().filter(|c| c.task == RankingTask::Pointwise) {
        if let Intent::Rating(Some(r)) = c.intent {
            let j = pos(c.presented[0]);
            point[j] = Some(Q::from_integer(r) - m(j) * cfg.c1);
        }
    }

    let mut pair = vec![Q::from_integer(0); n];
    let mut by_pair: BTreeMap<String, Vec<&Call>> = BTreeMap::new();
    for c in calls.iter().filter(|c| c.task == RankingTask::Pairwise) {
        by_pair.entry(c.id.rsplit_once('/').unwrap().0.to_string()).or_default().push(c);
    }
    for group in by_pair.values() {
        let winners: Vec<Option<ItemIdx>> = group
            .iter()
            .map(|c| match c.intent {
                Intent::Pref(Some(true)) => Some(c.presented[0]),
                Intent::Pref(Some(false)) => Some(c.presented[1]),
                _ => None,
            })
            .collect();
        if let [Some(a), Some(b)] = winners[..] {
            if a == b {
                pair[pos(a)] += cfg.c2;
            }
        }
    }

    let mut sums = vec![Q::from_integer(0); n];
    let mut valid = 0;
    for c in calls.iter().filter(|c| c.task == RankingTask::Listwise) {
        if let Intent::Order(Some(named)) = &c.intent {
            valid += 1;
            let mut full = named.clone();
            full.extend(cands.iter().filter(|i| !named.contains(i)));
            for (p, &item) in full.iter().enumerate() {
                sums[pos(item)] -= m(p) * cfg.c3;
            }
        }
    }
    let list: Vec<Option<Q>> = sums.iter().map(|&s| (valid > 0).then(|| s / Q::from_integer(valid))).collect();

    let hybrid: Vec<Q> = (0..n)
        .map(|j| {
            let p = point[j].unwrap_or(-(m(j) * cfg.c1));
            let l = list[j].unwrap_or(Q::from_integer(0));
            match cfg.mode {
                RerankMode::Pointwise => p,
                RerankMode::Pairwise => pair[j],
                RerankMode::Listwise => l,
                RerankMode::Hybrid => cfg.alpha[0] * p + cfg.alpha[1] * pair[j] + cfg.alpha[2] * l,
            }
        })
        .collect();

    // selection sort: highest score, earliest position on ties
    let mut left: Vec<usize> = (0..n).collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            if hybrid[left[i]] > hybrid[left[best]] {
                best = i;
            }
        }
        order.push(cands[left.remove(best)]);
    }
    Brute { point, pair, list, hybrid, order }
}

fn random_config<R: Rng>(rng: &mut R, n: usize) -> RerankConfig<Q> {
    let modes = [RerankMode::Pointwise, RerankMode::Pairwise, RerankMode::Listwise, RerankMode::Hybrid];
    let w: [i64; 3] = loop {
        let w = [rng.gen_range(0..7), rng.gen_range(0..7), rng.gen_range(0..7)];
        if w.iter().sum::<i64>() > 0 {
            break w;
        }
    };
    let total: i64 = w.iter().sum();
    RerankConfig {
        k: rng.gen_range(1..n),
        k_prime: n,
        c1: Q::new(rng.gen_range(1..=10), 100),
        c2: Q::new(rng.gen_range(1..=10), 10),
        c3: Q::new(rng.gen_range(1..=10), 200),
        alpha: w.map(|x| Q::new(x, total)),
        mode: *modes.choose(rng).unwrap(),
        listwise_shuffles: rng.gen_range(1..=3),
        seed: rng.gen(),
        hints: false,
    }
}

fn small_world() -> SplitDataset {
    let cfg =
        SyntheticConfig { users: 30, items: 60, min_per_user: 8, max_per_user: 20, seed: 13, ..Default::default() };
    let (data, catalog) = generate(&cfg);
    leave_one_out_split(&Dataset::new(data, &catalog, scale5()).unwrap()).unwrap()
}

fn criterion_hybrid_oracle() -> Check {
    let start = Instant::now();
    let split = small_world();
    let templates = Templates::default();
    let reranker: Reranker<f64> = Reranker::new(PromptBuilder::new(&split, &templates), None);
    let mut rng = seed::rng(2024);
    let instances = 1000;
    let mut mismatches = Vec::new();

    for inst in 0..instances {
        let n = rng.gen_range(2..=5);
        let cfg = random_config(&mut rng, n);
        let user = rng.gen_range(0..split.train.n_users());
        let mut items: Vec<ItemIdx> = (0..split.train.n_items()).collect();
        items.shuffle(&mut rng);
        items.truncate(n);

        // direct check of the fusion step on random utility vectors
        let mut vectors: Vec<UtilityVector<Q>> = (0..n)
            .map(|j| UtilityVector {
                item: items[j],
                position: j + 1,
                u_retrieval: -(Q::from_integer(j as i64 + 1) * cfg.c1),
                u_pointwise: rng.gen_bool(0.7).then(|| Q::new(rng.gen_range(-20..100), 20)),
                u_pairwise: cfg.c2 * Q::from_integer(rng.gen_range(0..3)),
                u_listwise: rng.gen_bool(0.7).then(|| -(Q::new(rng.gen_range(1..=10), 2) * cfg.c3)),
                u_hybrid: Q::from_integer(0),
            })
            .collect();
        hybrid_combine(&mut vectors, &cfg);
        for v in &vectors {
            let p = v.u_pointwise.unwrap_or(v.u_retrieval);
            let l = v.u_listwise.unwrap_or(Q::from_integer(0));
            let want = match cfg.mode {
                RerankMode::Pointwise => p,
                RerankMode::Pairwise => v.u_pairwise,
                RerankMode::Listwise => l,
                RerankMode::Hybrid => cfg.alpha[0] * p + cfg.alpha[1] * v.u_pairwise + cfg.alpha[2] * l,
            };
            if v.u_hybrid != want {
                mismatches.push(format!("instance {inst}: hybrid_combine {} != {want}", v.u_hybrid));
            }
        }
        let sorted = order_by_utility(&vectors);
        let mut want_order: Vec<&UtilityVector<Q>> = vectors.iter().collect();
        want_order.sort_by(|a, b| b.u_hybrid.cmp(&a.u_hybrid).then(a.position.cmp(&b.position)));
        if sorted != want_order.iter().map(|v| v.item).collect::<Vec<_>>() {
            mismatches.push(format!("instance {inst}: order_by_utility"));
        }

        // end to end through the gateway with scripted answers
        let backend = Scripted { split: &split, seed: rng.gen(), calls: Mutex::new(Vec::new()) };
        let gateway = Gateway::new(&backend, CompletionParams::default(), 3).unwrap();
        let got = reranker.rerank_user(&gateway, user, &items, &cfg).map_err(|e| e.to_string())?;
        let calls = backend.calls.into_inner().unwrap();
        if calls.len() != cfg.call_budget() || got.call_count != cfg.call_budget() {
            mismatches.push(format!("instance {inst}: {} calls, budget {}", calls.len(), cfg.call_budget()));
        }
        let pair_calls: Vec<&Call> = calls.iter().filter(|c| c.task == RankingTask::Pairwise).collect();
        if !pair_calls.is_empty() {
            let tops: BTreeSet<ItemIdx> =
                pair_calls.iter().filter(|c| c.id.ends_with("/ab")).map(|c| c.presented[0]).collect();
            let rest_ok =
                pair_calls.iter().filter(|c| c.id.ends_with("/ab")).all(|c| items[cfg.k..].contains(&c.presented[1]));
            if tops != items[..cfg.k].iter().copied().collect() || !rest_ok || pair_calls.len() != 2 * cfg.k {
                mismatches.push(format!("instance {inst}: pair structure"));
            }
        }
        let brute = brute_force(&items, &calls, &cfg);
        let point: Vec<Option<Q>> = got.utilities.iter().map(|v| v.u_pointwise).collect();
        let pair: Vec<Q> = got.utilities.iter().map(|v| v.u_pairwise).collect();
        let list: Vec<Option<Q>> = got.utilities.iter().map(|v| v.u_listwise).collect();
        let hybrid: Vec<Q> = got.utilities.iter().map(|v| v.u_hybrid).collect();
        let all_failed = !calls.is_empty() && got.gateway_errors == calls.len();
        let want_order = if all_failed { items.clone() } else { brute.order.clone() };
        if point != brute.point
            || pair != brute.pair
            || list != brute.list
            || hybrid != brute.hybrid
            || got.final_order != want_order
            || got.top_k != want_order[..cfg.k]
        {
            mismatches.push(format!(
                "instance {inst} ({:?}, n={n}, k={}): got {:?} want {:?}",
                cfg.mode, cfg.k, got.final_order, want_order
            ));
        }
    }
    within(start, Duration::from_secs(30))?;
    ensure(mismatches.is_empty(), || format!("{} mismatches, first: {}", mismatches.len(), mismatches[0]))?;
    Ok(format!("{instances} random instances, 0 mismatches"))
}

// 4. oracle upper bound

struct Corpus {
    split: SplitDataset,
    rating: FactorModelF64,
    ranking: FactorModelF64,
    held: BTreeMap<UserIdx, ItemIdx>,
    before: BTreeMap<UserIdx, Vec<ItemIdx>>,
}

fn corpus500() -> Corpus {
    let (data, catalog) = generate(&SyntheticConfig::default());
    let split = leave_one_out_split(&Dataset::new(data, &catalog, scale5()).unwrap()).unwrap();
    let mf = MfConfig { dim: 32, epochs: 30, seed: 1, ..Default::default() };
    let ranking = train_ranking_mf(&split.train, &mf).unwrap();
    let rating = train_rating_mf(&split.train, &mf).unwrap();
    let held: BTreeMap<UserIdx, ItemIdx> = split.test.iter().map(|(&u, r)| (u, r.item)).collect();
    let before = held.keys().map(|&u| (u, top_candidates(&ranking, &split.train, u, 10).items)).collect();
    Corpus { split, rating, ranking, held, before }
}

fn rerank_all<B: Backend>(c: &Corpus, backend: B, cfg: &RerankConfig<f64>) -> BTreeMap<UserIdx, Vec<ItemIdx>> {
    let templates = Templates::default();
    let reranker =
        Reranker::new(PromptBuilder::new(&c.split, &templates), Some(Enhancer::new(Some(&c.rating), Some(&c.ranking))));
    let gateway = Gateway::new(backend, CompletionParams::default(), 4).unwrap();
    c.before.iter().map(|(&u, items)| (u, reranker.rerank_user(&gateway, u, items, cfg).unwrap().final_order)).collect()
}

/// Oracle seeds averaged per noise level; the candidate-hit subset is only
/// about a hundred users, so a single run has a standard error near 0.05.
const REPLICATES: u64 = 10;

fn criterion_oracle_bound(c: &Corpus) -> Check {
    let start = Instant::now();
    let h5 = |after: &BTreeMap<UserIdx, Vec<ItemIdx>>| {
        let r = metric_report(after, &c.held, &[5], NdcgForm::Standard).unwrap();
        (r.all[0].hr, r.hit_subset[0].hr, r.candidate_hit_rate)
    };
    let run = |noise: f64, rep: u64| {
        let oracle = OracleBackend::new(&c.split, Some(&c.rating), OracleConfig { noise, seed: 100 + rep }).unwrap();
        let cfg = RerankConfig::<f64> { seed: 7 + rep, ..Default::default() };
        rerank_all(c, oracle, &cfg)
    };

    let exact = run(0.0, 0);
    let (all0, _, hit_rate) = h5(&exact);
    let r2w = transition_analysis(&c.before, &exact, &c.held, 5).r2w;
    ensure(all0 == hit_rate, || format!("eps=0 H@5 {all0} != candidate-hit rate {hit_rate}"))?;
    ensure(r2w == 0, || format!("eps=0 R2W = {r2w}"))?;

    let mut curve = vec![(0.0, all0, 1.0)];
    for noise in [0.25, 0.5, 1.0] {
        let runs: Vec<(f64, f64, f64)> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..REPLICATES).map(|rep| s.spawn(move || h5(&run(noise, rep)))).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mean = |f: fn(&(f64, f64, f64)) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
        curve.push((noise, mean(|r| r.0), mean(|r| r.1)));
    }
    let subset1 = curve[3].2;
    ensure((subset1 - 0.5).abs() <= 0.05, || format!("eps=1 subset H@5 {subset1:.4}"))?;
    for w in curve.windows(2) {
        ensure(w[1].1 <= w[0].1 + 0.02, || format!("H@5 rises from eps {} to {}: {curve:?}", w[0].0, w[1].0))?;
    }
    within(start, Duration::from_secs(300))?;
    let shown: Vec<String> = curve.iter().map(|(e, a, _)| format!("{e}:{a:.4}")).collect();
    Ok(format!(
        "candidate-hit rate {hit_rate:.4} = eps0 H@5, R2W 0; eps1 subset H@5 {subset1:.4} (mean of {REPLICATES}); H@5 by eps {}",
        shown.join(" ")
    ))
}

// 5. consistency filter

struct AlwaysYes;

impl Backend for AlwaysYes {
    fn complete(&self, _: &CompletionRequest<'_>, _: &CompletionParams) -> Result<String, GatewayError> {
        Ok("Yes.".into())
    }
}

fn criterion_consistency(c: &Corpus) -> Check {
    let templates = Templates::default();
    let reranker: Reranker<f64> = Reranker::new(PromptBuilder::new(&c.split, &templates), None);
    let gateway = Gateway::new(AlwaysYes, CompletionParams::default(), 4).unwrap();
    let cfg = RerankConfig::<f64> { seed: 3, ..Default::default() };
    let mut mass = 0.0;
    for (&u, items) in &c.before {
        let r = reranker.rerank_user(&gateway, u, items, &cfg).map_err(|e| e.to_string())?;
        mass += r.utilities.iter().map(|v| v.u_pairwise).sum::<f64>();
    }
    ensure(mass == 0.0, || format!("pairwise mass {mass}"))?;
    Ok(format!("pairwise utility mass 0 over {} users, {} calls", c.before.len(), gateway.calls()))
}

// 6. call budget

fn criterion_call_budget(c: &Corpus) -> Check {
    let cfg = RerankConfig::<f64> { k: 5, k_prime: 10, listwise_shuffles: 2, ..Default::default() };
    let templates = Templates::default();
    let reranker: Reranker<f64> = Reranker::new(PromptBuilder::new(&c.split, &templates), None);
    let oracle = OracleBackend::new(&c.split, Some(&c.rating), OracleConfig { noise: 0.0, seed: 0 }).unwrap();
    let gateway = Gateway::new(oracle, CompletionParams::default(), 4).unwrap();
    let users: Vec<(&UserIdx, &Vec<ItemIdx>)> = c.before.iter().take(25).collect();
    for (i, (&u, items)) in users.iter().enumerate() {
        let before = gateway.calls();
        reranker.rerank_user(&gateway, u, items, &cfg).map_err(|e| e.to_string())?;
        let used = gateway.calls() - before;
        ensure(used == 22, || format!("user {i} used {used} calls"))?;
    }
    ensure(gateway.calls() == 22 * users.len(), || format!("counter {}", gateway.calls()))?;
    Ok(format!("22 calls per user over {} users (counter {})", users.len(), gateway.calls()))
}

// 7. metrics

fn criterion_metrics() -> Check {
    let q = |n, d| Q::new(n, d);
    let examples: [(&[Option<usize>], usize, Q, f64); 4] = [
        (&[Some(1), Some(7), None], 5, q(1, 3), 1.0 / 3.0),
        (&[Some(1), Some(1), Some(1)], 5, q(1, 1), 1.0),
        (&[Some(3)], 5, q(1, 1), 0.5),
        (&[Some(6)], 5, q(0, 1), 0.0),
    ];
    for (ranks, k, hr, nd) in examples {
        let got_hr: Q = hit_ratio(ranks, k).map_err(|e| e.to_string())?;
        let got_nd: f64 = ndcg(ranks, k).map_err(|e| e.to_string())?;
        ensure(got_hr == hr, || format!("HR@{k} of {ranks:?} = {got_hr}, want {hr}"))?;
        ensure((got_nd - nd).abs() < 1e-12, || format!("NDCG@{k} of {ranks:?} = {got_nd}, want {nd}"))?;
    }
    ensure(hit_ratio::<f64>(&[], 5).is_err(), || "empty population accepted".into())?;

    let mut rng = seed::rng(77);
    for _ in 0..1000 {
        let users = rng.gen_range(1..50);
        let ranks: Vec<Option<usize>> = (0..users).map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(1..=20))).collect();
        let (mut last_hr, mut last_nd) = (0.0, 0.0);
        for k in 1..=20 {
            let hr: f64 = hit_ratio(&ranks, k).unwrap();
            let nd: f64 = ndcg(&ranks, k).unwrap();
            ensure(nd <= hr + 1e-12, || format!("NDCG {nd} > HR {hr} at k={k}"))?;
            ensure(hr >= last_hr && nd >= last_nd - 1e-12, || format!("not monotone at k={k}"))?;
            (last_hr, last_nd) = (hr, nd);
        }
    }
    Ok("4 tabulated rank sets exact; NDCG <= HR and monotone in k over 1000 random populations".into())
}

// 8. instruction dataset contract

fn criterion_instructions() -> Check {
    let ratings = fs::read_to_string(fixtures().join("ratings.tsv")).map_err(|e| e.to_string())?;
    let items = fs::read_to_string(fixtures().join("items.txt")).map_err(|e| e.to_string())?;
    let mut data = parse_interactions(&ratings, &ParseOptions::new(Delimiter::Tab, scale5())).unwrap();
    let catalog = parse_catalog(&items, &CatalogFormat::new(Delimiter::Pipe)).unwrap();
    // four interactions leave two in train
    for s in 0..4 {
        for t in 0..4 {
            data.push(Interaction::new(format!("short{s}"), (t * 3 + s + 1).to_string(), 5.0, t));
        }
    }
    let split = leave_one_out_split(&Dataset::new(data, &catalog, scale5()).unwrap()).unwrap();
    let model: FactorModelF64 =
        train_rating_mf(&split.train, &MfConfig { dim: 8, epochs: 10, seed: 4, ..Default::default() }).unwrap();
    let short: BTreeSet<UserIdx> =
        (0..split.train.n_users()).filter(|&u| split.train.user_ratings(u).len() < 3).collect();
    ensure(short.len() == 4, || format!("{} short users in fixture", short.len()))?;
    let mut u_ins = UserMultiset::new();
    for u in 0..split.train.n_users() {
        u_ins.insert(u, if short.contains(&u) { 5 } else { 1 + u % 3 });
    }
    let cfg = InstructionConfig { counts: TaskCounts::uniform(100), seed: 12, ..Default::default() };
    let enhancer = Enhancer::new(Some(&model), Some(&model));
    let (records, stats) = build_instruction_dataset(&split, &u_ins, &Templates::default(), Some(&enhancer), &cfg)
        .map_err(|e| e.to_string())?;
    ensure(stats.achieved == TaskCounts::uniform(100), || format!("achieved {:?}", stats.achieved))?;

    let (mut data_out, mut meta_out) = (Vec::new(), Vec::new());
    write_instruction_dataset(&mut data_out, &mut meta_out, &records).map_err(|e| e.to_string())?;
    let text = String::from_utf8(data_out).unwrap();
    let mut texts = HashSet::new();
    for (line, rec) in text.lines().zip(&records) {
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(line).map_err(|e| format!("invalid JSON line: {e}"))?;
        let keys: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
        ensure(keys == BTreeSet::from(["input", "instruction", "output"]), || format!("keys {keys:?}"))?;
        ensure(obj.values().all(|v| v.as_str().is_some_and(|s| !s.is_empty())), || format!("empty field in {line}"))?;
        ensure(texts.insert(format!("{}\n\n{}", rec.instruction, rec.input)), || "duplicate prompt text".into())?;

        let user = split.train.user_idx(&rec.meta.user).unwrap();
        ensure(!short.contains(&user), || format!("short-history user {} has a record", rec.meta.user))?;
        let cands: Vec<ItemIdx> = rec.meta.items.iter().map(|i| split.train.item_idx(i).unwrap()).collect();
        let titles: Vec<&str> = cands.iter().map(|&i| split.train.title(i)).collect();
        // liked, then never interacted, then disliked; ratings within a tier
        let tier = |i: ItemIdx| match split.train_rating(user, i) {
            Some(r) if split.scale().is_liked(r) => (2, r),
            Some(r) => (0, r),
            None => (1, 0.0),
        };
        let ok = match rec.task().map_err(|e| e.to_string())? {
            RankingTask::Pointwise => parse_pointwise(&rec.output, 5) == split.train_rating(user, cands[0]),
            RankingTask::Pairwise => {
                let want = if tier(cands[0]) > tier(cands[1]) { Preference::First } else { Preference::Second };
                tier(cands[0]) != tier(cands[1]) && parse_pairwise(&rec.output, titles[0], titles[1]) == Some(want)
            }
            RankingTask::Listwise => {
                let identity: Vec<usize> = (0..cands.len()).collect();
                parse_listwise(&rec.output, &titles, &identity).is_some_and(|p| {
                    let mut sorted = p.clone();
                    sorted.sort_unstable();
                    let keys: Vec<(u8, f64)> = p.iter().map(|&j| tier(cands[j])).collect();
                    sorted == identity && keys.windows(2).all(|w| w[0] >= w[1])
                })
            }
        };
        ensure(ok, || format!("record does not round-trip: {} -> {:?}", rec.meta.task, rec.output))?;
    }
    ensure(texts.len() == 300, || format!("{} lines", texts.len()))?;
    Ok(format!(
        "300 schema-valid, round-trippable records; {} short-history users contributed none; no duplicates",
        short.len()
    ))
}

// 9. determinism

const PIPELINE: &str = r#"
seed = 42
output_dir = "out"
[data]
ratings = "ratings.tsv"
items = "items.txt"
k_core = 5
[retrieval]
dim = 16
epochs = 15
[sampling]
n_target = 200
[instructions]
pointwise = 60
pairwise = 60
listwise = 60
[rerank]
jobs = 4
[gateway]
backend = "oracle"
noise = 0.2
concurrency = 4
"#;

const COMPARED: [&str; 9] = [
    "instructions.jsonl",
    "instructions.meta.jsonl",
    "users_ins.tsv",
    "rerank.tsv",
    "utilities.tsv",
    "transcript.jsonl",
    "rerank_summary.txt",
    "report.txt",
    "report.kv",
];

fn pipeline_run() -> Result<tempfile::TempDir, String> {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    for f in ["ratings.tsv", "items.txt"] {
        fs::copy(fixtures().join(f), dir.path().join(f)).map_err(|e| e.to_string())?;
    }
    fs::write(dir.path().join("recrank.toml"), PIPELINE).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_recrank"))
        .current_dir(dir.path())
        .arg("run")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("pipeline failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    Ok(dir)
}

fn criterion_determinism() -> Check {
    let (a, b) = (pipeline_run()?, pipeline_run()?);
    let mut bytes = 0;
    for name in COMPARED {
        let x = fs::read(a.path().join("out").join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = fs::read(b.path().join("out").join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(!x.is_empty(), || format!("{name} is empty"))?;
        ensure(x == y, || format!("{name} differs between runs"))?;
        bytes += x.len();
    }
    Ok(format!("{} output files byte-identical across two runs ({bytes} bytes)", COMPARED.len()))
}

fn main() -> ExitCode {
    // synthetic titles must be unique for the listwise matcher
    let titles: HashSet<String> = (0..400).map(synthetic::title).collect();
    assert_eq!(titles.len(), 400);

    let corpus = std::sync::OnceLock::new();
    let corpus = || corpus.get_or_init(corpus500);
    let criteria: Vec<Criterion> = vec![
        ("ingestion fidelity", Box::new(criterion_ingestion)),
        ("sampling distributions", Box::new(criterion_sampling)),
        ("hybrid arithmetic oracle", Box::new(criterion_hybrid_oracle)),
        ("oracle end-to-end upper bound", Box::new(|| criterion_oracle_bound(corpus()))),
        ("consistency filter", Box::new(|| criterion_consistency(corpus()))),
        ("call budget", Box::new(|| criterion_call_budget(corpus()))),
        ("metric correctness", Box::new(criterion_metrics)),
        ("instruction dataset contract", Box::new(criterion_instructions)),
        ("determinism", Box::new(criterion_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {} {name} [{t:.1?}]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} [{t:.1?}]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
