//! `fairadapt`: synthesize data, encode it, train adapters, and produce
//! zero-shot accuracy, bias and TF-IDF reports.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or input
//! validation errors.

mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use args::{Correctness, DebiasArgs, EmbeddingArgs, Format, TrainArgs};

#[derive(Debug, Parser, Serialize)]
#[command(name = "fairadapt", version, about)]
pub struct Cli {
    /// Seed for data generation, weight init, shuffling and pair sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for matrix rows and grid points.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Standard-output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Output file (synth, encode, train) or run directory (other commands).
    #[arg(short = 'o', long = "output", global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Write a planted-bias synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 5)]
        queries_per_cat: usize,
        #[arg(long, default_value_t = 280)]
        vocab: usize,
        /// Extra relevance cues on male relevant variants.
        #[arg(long, default_value_t = 0.0)]
        bias: f64,
    },
    /// Hash-encode a dataset into a binary embedding file.
    Encode {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = args::DEFAULT_HASH_DIM)]
        hash_dim: usize,
        /// [default: --seed]
        #[arg(long)]
        hash_seed: Option<u64>,
        #[arg(long)]
        no_normalize: bool,
    },
    /// Train one adapter and write its weights.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Train on this category only.
        #[arg(long)]
        category: Option<String>,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        debias: DebiasArgs,
    },
    /// Train on each category, evaluate on all; accuracy and bias tables.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        debias: DebiasArgs,
        #[arg(long, value_enum, default_value_t = Correctness::Argmax)]
        bias_correctness: Correctness,
    },
    /// Compare bias before and after debiasing.
    ///
    /// Either pass two cell-record files, or a dataset plus alphas to run
    /// both evaluations here.
    BiasReport {
        #[arg(long, requires = "after", conflicts_with = "dataset")]
        before: Option<PathBuf>,
        #[arg(long, requires = "before")]
        after: Option<PathBuf>,
        #[arg(long, required_unless_present = "before")]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        debias: DebiasArgs,
        #[arg(long, value_enum, default_value_t = Correctness::Argmax)]
        bias_correctness: Correctness,
    },
    /// Top TF-IDF words per category.
    Tfidf {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Stopword file, one word per line [default: bundled English list].
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Count query text as well as document text.
        #[arg(long)]
        include_queries: bool,
    },
    /// Grid-search the pair weights for one training category.
    Tune {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        train_category: String,
        /// Largest allowed Average* loss versus the unregularized run.
        #[arg(long, default_value_t = 0.05)]
        max_drop: f64,
        /// Use {0, 1, 2} per alpha instead of the 0.25-step grid.
        #[arg(long, conflicts_with = "grid")]
        coarse: bool,
        /// Comma-separated alpha values used for every pair type.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Pair-sampling seed [default: --seed].
        #[arg(long)]
        pair_seed: Option<u64>,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_enum, default_value_t = Correctness::Argmax)]
        bias_correctness: Correctness,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<commands::UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<fairadapt_core::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
