use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;
use log::info;
use rayon::prelude::*;

use recrank_core::corpus::synthetic::{self, SyntheticConfig};
use recrank_core::corpus::{
    apply_k_core, leave_one_out_split, read_catalog, read_interactions, read_split, write_dataset, write_split,
    Catalog, CatalogFormat, Dataset, Delimiter, ItemIdx, ParseOptions, RatingScale, SplitDataset, TimestampMode,
    UserIdx,
};
use recrank_core::eval::{metric_report, transition_analysis, MetricReport, NdcgForm};
use recrank_core::gateway::{
    read_transcript, write_transcript, Backend, CompletionParams, Gateway, OracleBackend, OracleConfig, RemoteBackend,
    RemoteConfig, ReplayBackend,
};
use recrank_core::prompting::{
    build_instruction_dataset, write_instruction_dataset, Enhancer, InstructionConfig, PromptBuilder, TaskCounts,
    Templates,
};
use recrank_core::rerank::{
    read_rerank_results, write_rerank_results, write_utilities, RerankConfig, RerankMode, Reranker,
};
use recrank_core::retrieval::{
    read_candidates, read_model, top_candidates, train_ranking_mf, train_rating_mf, write_candidates, write_model,
    MfConfig,
};
use recrank_core::sampling::{sample_users, write_multiset, Composition, SamplingConfig};
use recrank_core::{seed, CandidateListF64, FactorModelF64};

use crate::config::PipelineConfig;

/// Bad input: missing files, invalid configuration, refused overwrites.
/// Maps to exit code 2.
#[derive(Debug)]
pub struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

impl InputError {
    pub fn wrap(e: anyhow::Error) -> anyhow::Error {
        anyhow::Error::new(InputError(format!("{e:#}")))
    }
}

fn input(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(InputError(msg.into()))
}

pub const DATASET: &str = "dataset.tsv";
pub const SPLIT: &str = "split.tsv";
pub const RATING_MODEL: &str = "rating_model.tsv";
pub const RANKING_MODEL: &str = "ranking_model.tsv";
pub const CANDIDATES: &str = "candidates.tsv";
pub const USERS_INS: &str = "users_ins.tsv";
pub const SAMPLING_REPORT: &str = "sampling_report.txt";
pub const INSTRUCTIONS: &str = "instructions.jsonl";
pub const INSTRUCTIONS_META: &str = "instructions.meta.jsonl";
pub const INSTRUCTION_STATS: &str = "instruction_stats.txt";
pub const RERANK: &str = "rerank.tsv";
pub const UTILITIES: &str = "utilities.tsv";
pub const TRANSCRIPT: &str = "transcript.jsonl";
pub const RERANK_SUMMARY: &str = "rerank_summary.txt";
pub const REPORT: &str = "report.txt";
pub const REPORT_KV: &str = "report.kv";

fn read_input(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| input(format!("cannot read {what} {}: {e}", path.display())))
}

/// Refuses to clobber existing outputs unless forced.
fn guard(paths: &[PathBuf], force: bool) -> Result<()> {
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(input(format!("{} already exists; pass --force to overwrite", p.display())));
        }
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let file = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn load_split(cfg: &PipelineConfig) -> Result<SplitDataset> {
    let text = read_input(&cfg.path(SPLIT), "split")?;
    read_split(&text).map_err(|e| input(format!("invalid split file: {e}")))
}

fn load_model(cfg: &PipelineConfig, name: &str) -> Result<FactorModelF64> {
    let text = read_input(&cfg.path(name), "model")?;
    read_model(&text).map_err(|e| input(format!("invalid model file {name}: {e}")))
}

fn load_candidates(cfg: &PipelineConfig, split: &SplitDataset) -> Result<Vec<CandidateListF64>> {
    let text = read_input(&cfg.path(CANDIDATES), "candidates")?;
    read_candidates(&text, &split.train).map_err(|e| input(format!("invalid candidates file: {e}")))
}

fn model_file(which: &str) -> Result<&'static str> {
    match which {
        "ranking" => Ok(RANKING_MODEL),
        "rating" => Ok(RATING_MODEL),
        other => Err(input(format!("unknown model {other:?}; expected ranking or rating"))),
    }
}

fn templates(cfg: &PipelineConfig) -> Result<Templates> {
    match &cfg.instructions.templates {
        Some(p) => Templates::load(p).map_err(|e| input(e.to_string())),
        None => Ok(Templates::default()),
    }
}

pub fn ingest(cfg: &PipelineConfig, force: bool) -> Result<()> {
    let d = &cfg.data;
    let ratings = d.ratings.as_ref().ok_or_else(|| input("data.ratings is not set"))?;
    if !ratings.is_file() {
        bail!(input(format!("ratings file {} does not exist", ratings.display())));
    }
    guard(&[cfg.path(DATASET), cfg.path(SPLIT)], force)?;
    let scale = RatingScale::new(d.scale_max).map_err(|e| input(e.to_string()))?;
    let timestamp_seed = seed::derive(cfg.seed, "timestamps");
    let opts = ParseOptions {
        delimiter: Delimiter::from_name(&d.delimiter),
        scale,
        timestamps: if d.has_timestamps {
            TimestampMode::Present
        } else {
            TimestampMode::Synthetic { seed: timestamp_seed }
        },
        skip_header: d.skip_header,
        drop_out_of_scale: d.drop_out_of_scale,
    };
    let interactions = read_interactions(ratings, &opts).map_err(|e| input(format!("{}: {e}", ratings.display())))?;
    let catalog = match &d.items {
        Some(p) => {
            if !p.is_file() {
                bail!(input(format!("item file {} does not exist", p.display())));
            }
            let format = CatalogFormat {
                delimiter: Delimiter::from_name(&d.item_delimiter),
                attribute_names: d.item_attributes.clone(),
                skip_header: d.item_skip_header,
            };
            read_catalog(p, &format).map_err(|e| input(format!("{}: {e}", p.display())))?
        }
        None => Catalog::new(),
    };
    let raw = interactions.len();
    let filtered = apply_k_core(interactions, d.k_core).map_err(|e| input(e.to_string()))?;
    let ds = Dataset::new(filtered, &catalog, scale)?.with_seed((!d.has_timestamps).then_some(timestamp_seed));
    let split = leave_one_out_split(&ds)?;
    write_file(&cfg.path(DATASET), |w| write_dataset(w, &ds))?;
    write_file(&cfg.path(SPLIT), |w| write_split(w, &split))?;
    println!("parsed {raw} ratings; {}-core kept {}", d.k_core, ds.n_interactions());
    println!("{}", ds.stats());
    println!(
        "split: train={} validation={} test={} skipped_users={}",
        split.train.n_interactions(),
        split.validation.len(),
        split.test.len(),
        split.skipped_users
    );
    Ok(())
}

pub fn train_retrieval(cfg: &PipelineConfig, force: bool) -> Result<()> {
    let split = load_split(cfg)?;
    let r = &cfg.retrieval;
    let source = model_file(&r.candidates_from)?;
    guard(&[cfg.path(RATING_MODEL), cfg.path(RANKING_MODEL), cfg.path(CANDIDATES)], force)?;
    let base = MfConfig {
        dim: r.dim,
        learning_rate: r.learning_rate,
        regularization: r.regularization,
        epochs: r.epochs,
        negatives: r.negatives,
        seed: 0,
    };
    let rating: FactorModelF64 =
        train_rating_mf(&split.train, &MfConfig { seed: seed::derive(cfg.seed, "retrieval-rating"), ..base.clone() })
            .map_err(|e| input(e.to_string()))?;
    let ranking: FactorModelF64 =
        train_ranking_mf(&split.train, &MfConfig { seed: seed::derive(cfg.seed, "retrieval-ranking"), ..base })
            .map_err(|e| input(e.to_string()))?;
    write_file(&cfg.path(RATING_MODEL), |w| write_model(w, &rating))?;
    write_file(&cfg.path(RANKING_MODEL), |w| write_model(w, &ranking))?;
    let model = if source == RANKING_MODEL { &ranking } else { &rating };
    let lists: Vec<CandidateListF64> =
        split.test.keys().map(|&u| top_candidates(model, &split.train, u, r.k_prime)).collect();
    write_file(&cfg.path(CANDIDATES), |w| write_candidates(w, &split.train, &lists))?;
    let last = |m: &FactorModelF64| m.loss_history().last().copied().unwrap_or(f64::NAN);
    println!("rating model: dim={} epochs={} final_loss={:.6}", r.dim, r.epochs, last(&rating));
    println!("ranking model: dim={} epochs={} final_loss={:.6}", r.dim, r.epochs, last(&ranking));
    let hits = lists.iter().filter(|c| split.test_item(c.user).is_some_and(|g| c.position(g).is_some())).count();
    println!(
        "candidates: {} users x k'={} from the {} model; held item retrieved for {hits}",
        lists.len(),
        r.k_prime,
        r.candidates_from
    );
    Ok(())
}

pub fn build_instructions(cfg: &PipelineConfig, force: bool) -> Result<()> {
    let split = load_split(cfg)?;
    let rating = load_model(cfg, RATING_MODEL)?;
    let ranking = load_model(cfg, RANKING_MODEL)?;
    let templates = templates(cfg)?;
    let outputs = [USERS_INS, SAMPLING_REPORT, INSTRUCTIONS, INSTRUCTIONS_META, INSTRUCTION_STATS].map(|n| cfg.path(n));
    guard(&outputs, force)?;

    let s = &cfg.sampling;
    let embed_model = if model_file(&s.embeddings_from)? == RANKING_MODEL { &ranking } else { &rating };
    let sampling = SamplingConfig {
        n_target: s.n_target,
        clusters: s.clusters,
        penalty_base: s.penalty_base,
        seed: seed::derive(cfg.seed, "sampling"),
    };
    sampling.validate().map_err(|e| input(e.to_string()))?;
    let outcome = sample_users(&split, &embed_model.user_embeddings(), &sampling).map_err(|e| input(e.to_string()))?;
    write_file(&cfg.path(USERS_INS), |w| write_multiset(w, &split.train, &outcome.selected))?;
    let report = format!(
        "[importance]\n{}\n\n[clustering]\n{}\n\n[combined]\n{}\n\n[selected]\n{}\n\nexcluded_users\t{}\n",
        outcome.importance.report(),
        outcome.clustering.report(),
        outcome.combined.report(),
        outcome.selected.report(),
        outcome.excluded_users
    );
    write_file(&cfg.path(SAMPLING_REPORT), |w| w.write_all(report.as_bytes()))?;

    let i = &cfg.instructions;
    let ic = InstructionConfig {
        counts: TaskCounts { pointwise: i.pointwise, pairwise: i.pairwise, listwise: i.listwise },
        k_prime: i.k_prime,
        composition: Composition { liked: i.liked, disliked: i.disliked, negative: i.negative },
        max_history: i.max_history,
        min_history: i.min_history,
        hints: i.hints,
        seed: seed::derive(cfg.seed, "instructions"),
    };
    let enhancer = Enhancer::new(Some(&rating), Some(&ranking));
    let (records, stats) = build_instruction_dataset(&split, &outcome.selected, &templates, Some(&enhancer), &ic)
        .map_err(|e| input(e.to_string()))?;
    let (data_path, meta_path) = (cfg.path(INSTRUCTIONS), cfg.path(INSTRUCTIONS_META));
    let mut meta = Vec::new();
    write_file(&data_path, |w| write_instruction_dataset(w, &mut meta, &records))?;
    write_file(&meta_path, |w| w.write_all(&meta))?;
    write_file(&cfg.path(INSTRUCTION_STATS), |w| writeln!(w, "{stats}"))?;
    let sel = outcome.selected.report();
    println!("sampled users: {} occurrences over {} distinct users", sel.total, sel.distinct);
    println!("{stats}");
    println!("instructions: {} records -> {}", records.len(), data_path.display());
    Ok(())
}

fn rerank_config(cfg: &PipelineConfig) -> Result<RerankConfig<f64>> {
    let r = &cfg.rerank;
    let rc = RerankConfig {
        k: r.k,
        k_prime: cfg.retrieval.k_prime,
        c1: r.c1,
        c2: r.c2,
        c3: r.c3,
        alpha: r.alpha,
        mode: r.mode.parse::<RerankMode>().map_err(|e| input(e.to_string()))?,
        listwise_shuffles: r.listwise_shuffles,
        seed: seed::derive(cfg.seed, "rerank"),
        hints: r.hints,
    };
    rc.validate().map_err(|e| input(e.to_string()))?;
    Ok(rc)
}

fn backend<'a>(
    cfg: &PipelineConfig,
    split: &'a SplitDataset,
    rating: &'a FactorModelF64,
) -> Result<(Box<dyn Backend + 'a>, bool)> {
    let g = &cfg.gateway;
    Ok(match g.backend.as_str() {
        "oracle" => {
            let oc = OracleConfig { noise: g.noise, seed: seed::derive(cfg.seed, "oracle") };
            (Box::new(OracleBackend::new(split, Some(rating), oc).map_err(|e| input(e.to_string()))?), true)
        }
        "remote" => {
            let rc = RemoteConfig {
                endpoint: g.endpoint.clone(),
                model: g.model.clone(),
                api_key_var: g.api_key_env.clone(),
                timeout: Duration::from_secs(g.timeout_secs),
                attempts: g.attempts,
                backoff: Duration::from_millis(g.backoff_ms),
            };
            (Box::new(RemoteBackend::new(rc).map_err(|e| input(e.to_string()))?), true)
        }
        "replay" => {
            let path = g.transcript.clone().unwrap_or_else(|| cfg.path(TRANSCRIPT));
            let entries = read_transcript(&read_input(&path, "transcript")?).map_err(|e| input(e.to_string()))?;
            (Box::new(ReplayBackend::new(entries)), false)
        }
        other => bail!(input(format!("unknown backend {other:?}; expected oracle, remote or replay"))),
    })
}

pub fn rerank(cfg: &PipelineConfig, force: bool) -> Result<()> {
    let split = load_split(cfg)?;
    let rating = load_model(cfg, RATING_MODEL)?;
    let ranking = load_model(cfg, RANKING_MODEL)?;
    let lists = load_candidates(cfg, &split)?;
    let templates = templates(cfg)?;
    let rc = rerank_config(cfg)?;
    let (backend, record) = backend(cfg, &split, &rating)?;
    let mut outputs = vec![cfg.path(RERANK), cfg.path(UTILITIES), cfg.path(RERANK_SUMMARY)];
    if record {
        outputs.push(cfg.path(TRANSCRIPT));
    }
    guard(&outputs, force)?;

    let g = &cfg.gateway;
    let params =
        CompletionParams { temperature: g.temperature, top_p: g.top_p, top_k: g.top_k, max_tokens: g.max_tokens };
    let mut gateway = Gateway::new(backend, params, g.concurrency.max(1)).map_err(|e| input(e.to_string()))?;
    if record {
        gateway = gateway.recording();
    }
    let builder = PromptBuilder { max_history: cfg.rerank.max_history, ..PromptBuilder::new(&split, &templates) };
    let reranker = Reranker::new(builder, Some(Enhancer::new(Some(&rating), Some(&ranking))));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.rerank.jobs.max(1)).build()?;
    let results = pool.install(|| {
        lists
            .par_iter()
            .filter(|c| !c.is_degenerate())
            .map(|c| reranker.rerank_user(&gateway, c.user, &c.items, &rc))
            .collect::<Result<Vec<_>, _>>()
    })?;

    write_file(&cfg.path(RERANK), |w| write_rerank_results(w, &split.train, &results))?;
    write_file(&cfg.path(UTILITIES), |w| write_utilities(w, &split.train, &results))?;
    if record {
        write_file(&cfg.path(TRANSCRIPT), |w| write_transcript(w, &gateway.transcript()))?;
    }
    let calls: usize = results.iter().map(|r| r.call_count).sum();
    let failures: usize = results.iter().map(|r| r.parse_failures).sum();
    let errors: usize = results.iter().map(|r| r.gateway_errors).sum();
    let degraded = results.iter().filter(|r| r.degraded).count();
    let summary = format!(
        "mode\t{}\nusers\t{}\ncalls\t{calls}\ncalls_per_user\t{}\nparse_failures\t{failures}\ngateway_errors\t{errors}\ndegraded_users\t{degraded}\n",
        rc.mode,
        results.len(),
        rc.call_budget()
    );
    write_file(&cfg.path(RERANK_SUMMARY), |w| w.write_all(summary.as_bytes()))?;
    println!(
        "reranked {} users in {} mode: {calls} gateway calls (budget {} per user, counter {})",
        results.len(),
        rc.mode,
        rc.call_budget(),
        gateway.calls()
    );
    println!("parse failures: {failures}; gateway errors: {errors}; degraded users: {degraded}");
    Ok(())
}

fn improvement(base: f64, new: f64) -> String {
    if base == 0.0 {
        "n/a".into()
    } else {
        format!("{:+.2}%", (new - base) / base * 100.0)
    }
}

pub fn evaluate(cfg: &PipelineConfig, force: bool) -> Result<()> {
    let split = load_split(cfg)?;
    let lists = load_candidates(cfg, &split)?;
    let text = read_input(&cfg.path(RERANK), "rerank output")?;
    let after = read_rerank_results(&text, &split.train).map_err(|e| input(e.to_string()))?;
    guard(&[cfg.path(REPORT), cfg.path(REPORT_KV)], force)?;
    let ks = &cfg.eval.ks;
    if ks.is_empty() {
        bail!(input("eval.ks is empty"));
    }
    let form = if cfg.eval.literal_ndcg { NdcgForm::Literal } else { NdcgForm::Standard };
    let held: BTreeMap<UserIdx, ItemIdx> = split.test.iter().map(|(&u, r)| (u, r.item)).collect();
    let before: BTreeMap<UserIdx, Vec<ItemIdx>> = lists.iter().map(|c| (c.user, c.items.clone())).collect();
    let base: MetricReport = metric_report(&before, &held, ks, form).map_err(|e| input(e.to_string()))?;
    let new: MetricReport = metric_report(&after, &held, ks, form).map_err(|e| input(e.to_string()))?;

    let mut table = String::new();
    table.push_str(&base.table("retrieval"));
    table.push('\n');
    table.push_str(&new.table("reranked"));
    table.push_str("\nimprovement over retrieval (all users)\n");
    let mut kv = base.key_values("retrieval");
    kv.push_str(&new.key_values("reranked"));
    for (b, n) in base.all.iter().zip(&new.all) {
        table.push_str(&format!(
            "H@{k}: {}  N@{k}: {}\n",
            improvement(b.hr, n.hr),
            improvement(b.ndcg, n.ndcg),
            k = b.k
        ));
        kv.push_str(&format!("improvement.hr@{}={}\n", b.k, improvement(b.hr, n.hr)));
        kv.push_str(&format!("improvement.ndcg@{}={}\n", b.k, improvement(b.ndcg, n.ndcg)));
    }
    for &k in ks {
        let t = transition_analysis(&before, &after, &held, k);
        table.push('\n');
        table.push_str(&t.to_string());
        table.push('\n');
        kv.push_str(&t.key_values(&format!("transitions@{k}")));
    }
    write_file(&cfg.path(REPORT), |w| w.write_all(table.as_bytes()))?;
    write_file(&cfg.path(REPORT_KV), |w| w.write_all(kv.as_bytes()))?;
    print!("{table}");
    info!("reports written to {}", cfg.output_dir.display());
    Ok(())
}

pub fn run_all(cfg: &PipelineConfig, force: bool) -> Result<()> {
    ingest(cfg, force)?;
    train_retrieval(cfg, force)?;
    build_instructions(cfg, force)?;
    rerank(cfg, force)?;
    evaluate(cfg, force)
}

#[derive(Args, Clone)]
pub struct SynthArgs {
    /// Directory receiving `ratings.tsv` and `items.txt`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub users: usize,
    #[arg(long, default_value_t = 200)]
    pub items: usize,
    #[arg(long, default_value_t = 8)]
    pub genres: usize,
    #[arg(long, default_value_t = 20)]
    pub min_per_user: usize,
    #[arg(long, default_value_t = 60)]
    pub max_per_user: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if a.min_per_user == 0 || a.min_per_user > a.max_per_user || a.items == 0 || a.users == 0 {
        bail!(input("need users > 0, items > 0 and 0 < min-per-user <= max-per-user"));
    }
    let (ratings, items) = (a.out.join("ratings.tsv"), a.out.join("items.txt"));
    guard(&[ratings.clone(), items.clone()], a.force)?;
    let sc = SyntheticConfig {
        users: a.users,
        items: a.items,
        genres: a.genres,
        min_per_user: a.min_per_user,
        max_per_user: a.max_per_user,
        scale_max: 5,
        seed: a.seed,
    };
    let (data, catalog) = synthetic::generate(&sc);
    write_file(&ratings, |w| w.write_all(synthetic::to_tsv(&data).as_bytes()))?;
    write_file(&items, |w| w.write_all(synthetic::catalog_to_pipe(&catalog, a.items).as_bytes()))?;
    println!("wrote {} ratings to {} and {} items to {}", data.len(), ratings.display(), a.items, items.display());
    Ok(())
}
