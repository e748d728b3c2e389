//! Command-line driver for the feature-extraction pipeline.
//!
//! `extract → train → select → classify → report`, each stage reading the
//! artifacts the previous one left in the output directory.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ClassifierEntry, ExtractorSpec, PipelineConfig};

/// Exit status for usage and configuration problems.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for failures while running a stage.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] miafex::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "miafex",
    version,
    about = "Image feature extraction, selection and classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the configured value (1).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes train/test feature tables for one extractor.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ExtractorSpec::NAMES)]
        extractor: Option<String>,
        /// Trains the model (checkpoint + loss curve) before extracting.
        #[arg(long)]
        train_first: bool,
        /// Also writes the tables as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Trains the transformer and writes its checkpoint and loss curve.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Runs wrapper feature selection on a training table.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ExtractorSpec::NAMES)]
        extractor: Option<String>,
        #[arg(long, value_parser = ["pso", "de", "ga"])]
        algorithm: Option<String>,
    },
    /// Fits classifiers on the training table and predicts the test table.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ExtractorSpec::NAMES)]
        extractor: Option<String>,
        /// Runs only this classifier kind.
        #[arg(long, value_parser = ["knn", "logreg", "svm"])]
        classifier: Option<String>,
        /// Column mask from `select`.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Suffix for the extractor part of the method name, e.g. `wfs`.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Aggregates every prediction file into metrics tables.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Extract { common, .. }
            | Command::Train { common, .. }
            | Command::Select { common, .. }
            | Command::Classify { common, .. }
            | Command::Report { common } => common,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command) -> CliResult<()> {
    let common = cmd.common();
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if cfg.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cfg.threads)))?;
    pool.install(|| match cmd {
        Command::Extract {
            extractor,
            train_first,
            csv,
            ..
        } => commands::extract(&cfg, extractor.as_deref(), *train_first, *csv),
        Command::Train {
            epochs, batch_size, lr, ..
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = *b;
            }
            if let Some(l) = lr {
                cfg.nadam.learning_rate = *l;
            }
            commands::train(&cfg).map(|_| ())
        }
        Command::Select {
            extractor, algorithm, ..
        } => {
            if let Some(a) = algorithm {
                cfg.selection.algorithm = a.parse().map_err(|e: miafex::Error| CliError::Usage(e.to_string()))?;
            }
            commands::select(&cfg, extractor.as_deref())
        }
        Command::Classify {
            extractor,
            classifier,
            mask,
            tag,
            ..
        } => commands::classify(
            &cfg,
            extractor.as_deref(),
            classifier.as_deref(),
            mask.as_deref(),
            tag.as_deref(),
        ),
        Command::Report { .. } => commands::report(&cfg),
    })
}
