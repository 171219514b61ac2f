//! `hids`: train, evaluate and run the hybrid intrusion detector.

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hybrid_ids::evalcli::RunConfig;
use hybrid_ids::{Error, Result};

use data::DataArgs;

#[derive(Debug, Parser)]
#[command(name = "hids", version, about = "Multi-tier hybrid intrusion detection")]
struct Cli {
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, validate and sanitize input files; optionally export them.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Canonical CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster-sample a dataset (k chosen by silhouette).
    Sample {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the detector and save it.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// Hold out a stratified test share and report metrics on it.
        #[arg(long)]
        holdout: bool,
        /// Metrics CSV for the hold-out evaluation.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train with every hyper-parameter search enabled and report the trials.
    Tune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV of every optimization trial.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Classify every row of a CSV; writes index,kind,class,confidence,tiers.
    Detect {
        #[arg(long)]
        model: PathBuf,
        /// CSV with a header naming the model's feature columns.
        #[arg(long)]
        input: PathBuf,
        /// Verdict CSV (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep cluster labels for uncertain rows.
        #[arg(long)]
        no_biased: bool,
    },
    /// Leave-one-attack-out evaluation.
    #[command(name = "zeroDay", alias = "zero-day")]
    ZeroDay {
        #[command(flatten)]
        data: DataArgs,
        /// Attack class to hold out (repeatable; default: every attack).
        #[arg(long)]
        attack: Vec<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation of the full training recipe.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Per-stage detection latency and model size.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Summarize a saved model.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
    /// Write synthetic CAN logs (a directory) or a flow CSV.
    Synth {
        /// `can` or `flows`.
        kind: String,
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        /// Flow rows per class at least.
        #[arg(long, default_value_t = 30)]
        min_per_class: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.pipeline.seed = s;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Ingest { data, out } => commands::ingest(data, out.as_deref()),
        Command::Sample { data, out } => commands::sample(data, &cfg, out),
        Command::Train { data, model, holdout, report } => {
            commands::train(data, &cfg, model, *holdout, report.as_deref())
        }
        Command::Tune { data, model, ledger } => commands::tune(data, &cfg, model.as_deref(), ledger.as_deref()),
        Command::Detect { model, input, out, no_biased } => commands::detect(model, input, out.as_deref(), !no_biased),
        Command::ZeroDay { data, attack, report } => commands::zero_day(data, &cfg, attack, report.as_deref()),
        Command::Cv { data, folds, report } => commands::cv(data, &cfg, *folds, report.as_deref()),
        Command::Bench { model, data, report } => commands::bench(model, data, &cfg, report.as_deref()),
        Command::Inspect { model } => commands::inspect(model),
        Command::Synth { kind, rows, min_per_class, out } => {
            commands::synth(kind, *rows, *min_per_class, cfg.pipeline.seed, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
