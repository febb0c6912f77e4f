//! Pipeline configuration: one TOML file with a section per stage. Every key
//! can be overridden with `--set section.key=value`. Relative paths are
//! resolved against the directory of the configuration file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mandatory; every stage derives its own seed from it.
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub instructions: InstructionSection,
    #[serde(default)]
    pub rerank: RerankSection,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub ratings: Option<PathBuf>,
    /// `tab`, `::`, `pipe` or a literal separator.
    pub delimiter: String,
    pub scale_max: u32,
    pub skip_header: bool,
    /// Rating files without a timestamp column get seeded synthetic ones.
    pub has_timestamps: bool,
    pub drop_out_of_scale: bool,
    pub items: Option<PathBuf>,
    pub item_delimiter: String,
    pub item_attributes: Vec<String>,
    pub item_skip_header: bool,
    pub k_core: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            ratings: None,
            delimiter: "tab".into(),
            scale_max: 5,
            skip_header: false,
            has_timestamps: true,
            drop_out_of_scale: false,
            items: None,
            item_delimiter: "pipe".into(),
            item_attributes: Vec::new(),
            item_skip_header: false,
            k_core: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub negatives: usize,
    /// `ranking` or `rating`: the model that produces candidates.
    pub candidates_from: String,
    pub k_prime: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            learning_rate: 0.01,
            regularization: 0.02,
            epochs: 30,
            negatives: 4,
            candidates_from: "ranking".into(),
            k_prime: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub n_target: usize,
    pub clusters: usize,
    pub penalty_base: f64,
    /// `ranking` or `rating`: whose user factors are clustered.
    pub embeddings_from: String,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { n_target: 5000, clusters: 10, penalty_base: 0.92, embeddings_from: "ranking".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstructionSection {
    pub pointwise: usize,
    pub pairwise: usize,
    pub listwise: usize,
    pub k_prime: usize,
    pub liked: usize,
    pub disliked: usize,
    pub negative: usize,
    pub max_history: usize,
    pub min_history: usize,
    pub hints: bool,
    pub templates: Option<PathBuf>,
}

impl Default for InstructionSection {
    fn default() -> Self {
        Self {
            pointwise: 5000,
            pairwise: 5000,
            listwise: 5000,
            k_prime: 10,
            liked: 3,
            disliked: 3,
            negative: 4,
            max_history: 15,
            min_history: 3,
            hints: true,
            templates: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankSection {
    pub k: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub alpha: [f64; 3],
    pub mode: String,
    pub listwise_shuffles: usize,
    pub hints: bool,
    pub max_history: usize,
    /// Worker threads across users.
    pub jobs: usize,
}

impl Default for RerankSection {
    fn default() -> Self {
        Self {
            k: 5,
            c1: 0.05,
            c2: 0.5,
            c3: 0.025,
            alpha: [1.0 / 3.0; 3],
            mode: "hybrid".into(),
            listwise_shuffles: 2,
            hints: true,
            max_history: 15,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    /// `oracle`, `remote` or `replay`.
    pub backend: String,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub concurrency: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub attempts: u32,
    pub backoff_ms: u64,
    /// Oracle answer noise.
    pub noise: f64,
    /// Transcript served by the replay backend.
    pub transcript: Option<PathBuf>,
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            backend: "oracle".into(),
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "recranker".into(),
            api_key_env: recrank_core::gateway::DEFAULT_API_KEY_VAR.into(),
            concurrency: 4,
            temperature: 0.1,
            top_p: 0.1,
            top_k: 10,
            max_tokens: 256,
            timeout_secs: 60,
            attempts: 3,
            backoff_ms: 1000,
            noise: 0.0,
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    /// Use the constant-denominator NDCG formula.
    pub literal_ndcg: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { ks: vec![3, 5], literal_ndcg: false }
    }
}

/// Parses an override value as TOML, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| anyhow!("override {assignment:?} is not key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().ok_or_else(|| anyhow!("empty override key"))?;
    let mut table = root;
    for s in sections {
        let entry = table.entry(s.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| anyhow!("{s} is not a section"))?;
    }
    table.insert(last.to_string(), override_value(value.trim()));
    Ok(())
}

impl PipelineConfig {
    pub fn parse(text: &str, overrides: &[String], base: &Path) -> Result<Self> {
        let mut root: toml::Table = text.parse().context("configuration is not valid TOML")?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        if !root.contains_key("seed") {
            bail!("configuration must set a seed");
        }
        let mut cfg: PipelineConfig = toml::Value::Table(root).try_into().context("invalid configuration")?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, overrides, &base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [
            &mut self.data.ratings,
            &mut self.data.items,
            &mut self.instructions.templates,
            &mut self.gateway.transcript,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
