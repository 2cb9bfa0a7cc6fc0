//! `srtag`: batch pipeline over annotated corpora. Each stage reads and
//! writes files; all randomness derives from `--seed`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use srtag::corpus::OffsetPolicy;
use srtag::eval::Denominator;
use thiserror::Error;

use crate::commands::{ScoreOptions, TranslatorKind};
use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or arguments: exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure while running: exit code 1.
    #[error("{0}")]
    Run(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "srtag", version, about = "Entity tagger for toxicology study reports")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    OneChar,
    TwoChar,
    Auto,
}

impl From<Policy> for OffsetPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::OneChar => OffsetPolicy::OneChar,
            Policy::TwoChar => OffsetPolicy::TwoChar,
            Policy::Auto => OffsetPolicy::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Denom {
    Gold,
    Pred,
    Union,
    Min,
}

impl From<Denom> for Denominator {
    fn from(d: Denom) -> Self {
        match d {
            Denom::Gold => Denominator::Gold,
            Denom::Pred => Denominator::Pred,
            Denom::Union => Denominator::Union,
            Denom::Min => Denominator::Min,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TranslatorArg {
    Identity,
    Fixture,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a corpus directory as tagged sentence copies.
    Preprocess {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        offset_policy: Option<Policy>,
    },
    /// Add round-trip translated copies of every document.
    Augment {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "fr,ru")]
        pivots: Vec<String>,
        #[arg(long, value_enum, default_value = "identity")]
        translator: TranslatorArg,
        /// Recorded translations, for `--translator fixture`.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Train one model on a corpus directory or encoded sentences.
    Train {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Held-out corpus or sentences for early stopping.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Document-level cross-validation with pooled out-of-fold scoring.
    Cv {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Annotate a corpus with one model.
    Predict {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotate a corpus by majority vote over several models.
    Ensemble {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted annotations against gold annotations.
    Score {
        gold: PathBuf,
        pred: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "gold")]
        denominator: Denom,
        /// Exact span matching instead of overlap matching.
        #[arg(long)]
        exact: bool,
        /// Directory for report.json and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    let paths = config.paths.clone();
    let corpus = |flag| commands::require(flag, &paths.corpus, "corpus directory");
    let out = |flag| commands::require(flag, &paths.output, "output directory");
    match cli.command {
        Command::Preprocess {
            corpus: c,
            out: o,
            offset_policy,
        } => {
            let policy = offset_policy.map_or(config.offset_policy, OffsetPolicy::from);
            commands::preprocess(&config, corpus(c)?, out(o)?, policy)
        }
        Command::Augment {
            corpus: c,
            out: o,
            pivots,
            translator,
            fixture,
        } => {
            let kind = match translator {
                TranslatorArg::Identity => TranslatorKind::Identity,
                TranslatorArg::Http => TranslatorKind::Http,
                TranslatorArg::Fixture => TranslatorKind::Fixture(
                    fixture.ok_or_else(|| CliError::Config("--translator fixture needs --fixture".into()))?,
                ),
            };
            commands::augment(&config, corpus(c)?, out(o)?, &pivots, kind)
        }
        Command::Train { input, validation, out: o } => commands::train(&config, corpus(input)?, validation, out(o)?),
        Command::Cv {
            corpus: c,
            out: o,
            folds,
            jobs,
        } => commands::cv(&config, corpus(c)?, out(o)?, folds, jobs),
        Command::Predict { corpus: c, model, out: o } => commands::predict(&config, corpus(c)?, &[model], out(o)?),
        Command::Ensemble { corpus: c, models, out: o } => commands::predict(&config, corpus(c)?, &models, out(o)?),
        Command::Score {
            gold,
            pred,
            threshold,
            denominator,
            exact,
            out: o,
        } => commands::score(
            &config,
            gold,
            pred,
            o,
            ScoreOptions {
                threshold,
                denominator: denominator.into(),
                exact,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Config(_) => 2,
                CliError::Run(_) => 1,
            })
        }
    }
}
