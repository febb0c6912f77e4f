mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::InputError;
use config::PipelineConfig;

#[derive(Parser)]
#[command(name = "recrank", version, about = "Offline reranking pipeline over matrix-factorization candidates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration file.
    #[arg(short, long, default_value = "recrank.toml")]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set rerank.k=3`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for reranking.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn load(&self) -> anyhow::Result<PipelineConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(d) = &self.output_dir {
            let abs = std::env::current_dir()?.join(d);
            overrides.push(format!("output_dir={:?}", abs.display().to_string()));
        }
        if let Some(j) = self.jobs {
            overrides.push(format!("rerank.jobs={j}"));
        }
        PipelineConfig::load(&self.config, &overrides).map_err(InputError::wrap)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse ratings, apply k-core filtering and write the leave-one-out split.
    Ingest(Common),
    /// Train the rating and ranking factor models and write candidate lists.
    TrainRetrieval(Common),
    /// Sample users and emit the instruction-tuning dataset.
    BuildInstructions(Common),
    /// Rerank every user's candidates through the configured backend.
    Rerank(Common),
    /// Report HR/NDCG for retrieval and reranked orders.
    Evaluate(Common),
    /// Run every stage in order.
    Run(Common),
    /// Write a seeded synthetic ratings file and item catalog.
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(c)
        | Command::TrainRetrieval(c)
        | Command::BuildInstructions(c)
        | Command::Rerank(c)
        | Command::Evaluate(c)
        | Command::Run(c) => c.load().and_then(|cfg| match &cli.command {
            Command::Ingest(_) => commands::ingest(&cfg, c.force),
            Command::TrainRetrieval(_) => commands::train_retrieval(&cfg, c.force),
            Command::BuildInstructions(_) => commands::build_instructions(&cfg, c.force),
            Command::Rerank(_) => commands::rerank(&cfg, c.force),
            Command::Evaluate(_) => commands::evaluate(&cfg, c.force),
            _ => commands::run_all(&cfg, c.force),
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<InputError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
