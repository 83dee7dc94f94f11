//! Batch command-line frontend: tokenize, fit, attribute, crossval,
//! simulate, synth.
//!
//! Every run writes a `run.json` with the resolved configuration and seed
//! next to its outputs, so any result can be reproduced from the recorded
//! file alone. Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical-domain error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "cp2d", version, about = "Authorship attribution with Poisson-Dirichlet sequence models")]
struct Cli {
    /// Worker threads (default: available parallelism). Results never
    /// depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct CorpusArgs {
    /// Corpus root: a directory of <author>/<doc>.txt or a .jsonl manifest
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Corpus layout: dir_tree | jsonl
    #[arg(long)]
    layout: Option<String>,
    /// Text encoding: latin1 | latin2
    #[arg(long)]
    encoding: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
struct HyperArgs {
    /// Token definition: osf:N | lz77:W | lz77:inf | words
    #[arg(long)]
    tokens: Option<String>,
    /// Base-distribution strategy: global | author
    #[arg(long)]
    p0: Option<String>,
    /// Fragment length in tokens, or "full"
    #[arg(long)]
    fragment: Option<String>,
    /// Attribution criterion: ml | majority
    #[arg(long)]
    criterion: Option<String>,
    /// Novelty multiplier; a number, or "sweep" to optimize it on training
    /// data (crossval only)
    #[arg(long)]
    delta: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a corpus and dump per-document (type id, count) tables
    Tokenize {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Token definition: osf:N | lz77:W | lz77:inf | words
        #[arg(long)]
        tokens: Option<String>,
        /// Optional config file (flags override it)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-author parameters and write a profile store
    Fit {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attribute anonymous documents against a profile store
    Attribute {
        /// Profile store written by `fit`
        #[arg(long)]
        profiles: PathBuf,
        /// Documents: a .jsonl manifest, a directory of .txt files, or an
        /// <author>/<doc>.txt tree
        #[arg(long)]
        docs: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified k-fold cross-validation with hyperparameter selection
    Crossval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        /// Number of folds
        #[arg(long)]
        folds: Option<usize>,
        /// RNG seed for fold assignment
        #[arg(long)]
        seed: Option<u64>,
        /// Use an explicit train/validation/test split manifest instead of
        /// generated folds
        #[arg(long)]
        split: Option<PathBuf>,
        /// Config file declaring search grids (flags override it)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the urn model or the Poisson-Dirichlet process
    Simulate {
        /// Model: pd | umt
        #[arg(long, default_value = "pd")]
        model: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        rho_tilde: Option<f64>,
        #[arg(long)]
        nu: Option<u64>,
        #[arg(long)]
        n0: Option<f64>,
        #[arg(long)]
        tmax: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (t, D_t)
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic labelled corpus in the jsonl layout
    Synth {
        #[arg(long, default_value_t = 10)]
        authors: usize,
        #[arg(long, default_value_t = 20)]
        docs: usize,
        #[arg(long, default_value_t = 2000)]
        tokens_per_doc: usize,
        /// Fraction of each author's label pool drawn from the shared core
        #[arg(long, default_value_t = 0.5)]
        shared: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output .jsonl path
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // ignore failure: the global pool may already exist under tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let result = run(cli.command);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Tokenize {
            corpus,
            tokens,
            config,
            out,
        } => commands::tokenize(corpus, tokens, config, out),
        Command::Fit {
            corpus,
            hyper,
            config,
            out,
        } => commands::fit(corpus, hyper, config, out),
        Command::Attribute {
            profiles,
            docs,
            hyper,
            out,
        } => commands::attribute(profiles, docs, hyper, out),
        Command::Crossval {
            corpus,
            hyper,
            folds,
            seed,
            split,
            config,
            out,
        } => commands::crossval(corpus, hyper, folds, seed, split, config, out),
        Command::Simulate {
            model,
            alpha,
            theta,
            rho,
            rho_tilde,
            nu,
            n0,
            tmax,
            seed,
            out,
        } => commands::simulate(model, alpha, theta, rho, rho_tilde, nu, n0, tmax, seed, out),
        Command::Synth {
            authors,
            docs,
            tokens_per_doc,
            shared,
            seed,
            out,
        } => commands::synth(authors, docs, tokens_per_doc, shared, seed, out),
    }
}
