//! `speller`: build language models, generate cohorts, run typing
//! simulations and summarize scheme comparisons.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on invalid input.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use speller_core::harness::{table_rows, SchemeSpec};

use config::{Overrides, RunConfig, PREDICTOR_URL_ENV};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] speller_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        use speller_core::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(
                E::InvalidArgument(_) | E::UnknownScheme(_) | E::Parse { .. } | E::EmptyCorpus,
            ) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "speller", version, about = "P300 speller simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count n-grams in a corpus and save the model tables.
    BuildLm {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic calibration cohort as labeled features.
    GenCohort {
        #[command(flatten)]
        common: Common,
    },
    /// Type the target with every subject under each scheme.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate two or more schemes and test their differences.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Summaries, violin data and tests from an existing results directory.
    Report {
        /// Directory holding results.csv.
        #[arg(long)]
        results: PathBuf,
        /// Where to write; defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed for every stochastic stage.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Corpus file or directory (repeatable).
    #[arg(long)]
    corpus: Vec<PathBuf>,
    /// Prebuilt model directory.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Labeled-feature CSV instead of a synthetic cohort.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Text each subject types.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Characters of the target to type.
    #[arg(long)]
    budget: Option<usize>,
    /// Number of synthetic subjects.
    #[arg(long)]
    subjects: Option<usize>,
    /// Comma-separated schemes, e.g. `random,diagonal+layered`.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<SchemeSpec>,
    /// Word-prediction service base URL.
    #[arg(long)]
    predictor_url: Option<String>,
    /// Skip across-subject classifier training.
    #[arg(long)]
    no_ascv: bool,
}

impl Common {
    fn resolve(self) -> Result<(RunConfig, PathBuf), CliError> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let overrides = Overrides {
            seed: self.seed,
            workers: self.workers,
            corpus: self.corpus,
            models: self.models,
            features: self.features,
            target: self.target,
            budget: self.budget,
            subjects: self.subjects,
            schemes: self.schemes,
            predictor_url: self.predictor_url,
            no_ascv: self.no_ascv,
        };
        Ok((
            base.resolve(overrides, std::env::var(PREDICTOR_URL_ENV).ok()),
            self.out,
        ))
    }
}

fn print_table(report: &speller_core::harness::ComparisonReport) {
    println!("{:<22} {:>18} {:>18}", "scheme", "WSCV ITR", "ASCV ITR");
    for row in table_rows(report) {
        println!(
            "{:<22} {:>18} {:>18}",
            row.scheme.to_string(),
            row.wscv_itr,
            row.ascv_itr
        );
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let manifest = match cli.command {
        Command::BuildLm { common } => {
            let (cfg, out) = common.resolve()?;
            commands::build_lm(cfg, &out)?
        }
        Command::GenCohort { common } => {
            let (cfg, out) = common.resolve()?;
            commands::gen_cohort(cfg, &out)?
        }
        Command::Simulate { common } => {
            let (cfg, out) = common.resolve()?;
            commands::simulate(cfg, &out)?
        }
        Command::Compare { common } => {
            let (cfg, out) = common.resolve()?;
            let (manifest, report) = commands::compare(cfg, &out)?;
            print_table(&report);
            manifest
        }
        Command::Report { results, out } => {
            let out = out.unwrap_or_else(|| results.clone());
            let (manifest, report) = commands::report(&results, &out)?;
            print_table(&report);
            manifest
        }
    };
    eprintln!(
        "run {} wrote {} files",
        manifest.run_id,
        manifest.outputs.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
