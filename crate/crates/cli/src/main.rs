//! `tirank`: build, rank, evaluate, re-rank and augment person
//! re-identification corpora from the command line.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Backend, Threshold};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tirank", version, about = "Interactive re-ranking for text-to-image person re-identification")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step. Required by randomized commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Defaults to runs/<timestamp>-seed<seed>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Args)]
pub struct DataArgs {
    /// Directory with annotations.json, images.icle and texts.icle.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub image_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub text_embeddings: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct ThiArgs {
    /// Interaction rounds K.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Top-1 similarity threshold: a number or "median".
    #[arg(long)]
    pub xi: Option<Threshold>,
    /// Weight of the baseline similarity in the fused score.
    #[arg(long)]
    pub lambda: Option<f32>,
    #[arg(long)]
    pub candidate_size: Option<usize>,
    /// Maximum concurrent oracle sessions.
    #[arg(long)]
    pub max_inflight: Option<usize>,
    /// located | top-candidate
    #[arg(long)]
    pub anchor_pin: Option<String>,
    /// gated | unconditional
    #[arg(long)]
    pub localization: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Chat-completions URL for the wire backend.
    #[arg(long)]
    pub oracle_endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    /// JSON array of canned replies for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Simulated backend: probability of a correct localization verdict.
    #[arg(long)]
    pub accuracy: Option<f64>,
    /// Simulated backend: interpolation weight toward the anchor.
    #[arg(long)]
    pub refinement_strength: Option<f64>,
    /// Embedding service for refined query texts.
    #[arg(long)]
    pub embedder_endpoint: Option<String>,
    #[arg(long)]
    pub embedder_model: Option<String>,
    /// JSON Lines of precomputed refined-query embeddings.
    #[arg(long)]
    pub refined_embeddings: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic benchmark.
    Simgen {
        #[arg(long)]
        identities: Option<usize>,
        #[arg(long)]
        images_per_identity: Option<usize>,
        #[arg(long)]
        texts_per_identity: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Per-component noise standard deviation.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Validate a corpus and its embeddings and write them as a store.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Convert a CUHK-PEDES style annotation file instead of reading
        /// annotations.json.
        #[arg(long)]
        from_cuhk: Option<PathBuf>,
        /// Split to keep when converting.
        #[arg(long)]
        split: Option<String>,
    },
    /// Rank the full gallery for every query.
    Retrieve {
        #[command(flatten)]
        data: DataArgs,
        /// Keep only the top N entries per query.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Compute Rank-1/5/10, mAP and mINP.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Rankings to score; computed from the embeddings if omitted.
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Re-rank with oracle interaction.
    Interact {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        thi: ThiArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Histogram of top-1 similarity split by retrieval correctness.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        rankings: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        hi: f64,
    },
    /// Write an augmented caption corpus.
    Augment {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Styles per sub-sentence, the original included.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        per_text_count: Option<usize>,
        #[arg(long)]
        max_inflight: Option<usize>,
    },
    /// Export Yes/No localization pairs for instruction tuning.
    SftExport {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        rankings: Option<PathBuf>,
        /// Captions to sample.
        #[arg(long)]
        n_l: Option<usize>,
        /// top-ten-filtered | first-ten-different
        #[arg(long)]
        negative_rule: Option<String>,
        #[arg(long)]
        template_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let message = rendered.trim().trim_start_matches("error: ");
            eprintln!("{}", CliError::validation(message));
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => config::RunConfig::load(path)?,
        None => config::RunConfig::default(),
    };
    let ctx = commands::Context::new(config, cli.seed, cli.out);
    match cli.command {
        Command::Simgen { identities, images_per_identity, texts_per_identity, dim, sigma } => {
            commands::simgen(&ctx, identities, images_per_identity, texts_per_identity, dim, sigma)
        }
        Command::Ingest { data, from_cuhk, split } => commands::ingest(&ctx, &data, from_cuhk, split),
        Command::Retrieve { data, top } => commands::retrieve(&ctx, &data, top),
        Command::Evaluate { data, rankings } => commands::evaluate(&ctx, &data, rankings),
        Command::Interact { data, thi, oracle, top } => commands::interact(&ctx, &data, &thi, &oracle, top),
        Command::Stats { data, rankings, bins, lo, hi } => commands::stats(&ctx, &data, rankings, bins, lo, hi),
        Command::Augment { data, oracle, m, per_text_count, max_inflight } => {
            commands::augment(&ctx, &data, &oracle, m, per_text_count, max_inflight)
        }
        Command::SftExport { data, rankings, n_l, negative_rule, template_dir } => {
            commands::sft_export(&ctx, &data, rankings, n_l, negative_rule, template_dir)
        }
    }
}
