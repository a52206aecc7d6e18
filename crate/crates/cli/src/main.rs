//! `agfusion`: behavior classification from accelerometry and GNSS.
//!
//! Exit status is 0 on success, 1 on data or validation failures and 2 on
//! usage errors. Diagnostics go to stderr; results go to files.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ModelFlags;

#[derive(Debug, Parser)]
#[command(name = "agfusion", version, about = "Multimodal animal behavior classification")]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: number of processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct DatasetArgs {
    /// Canonical JSONL file, or a directory in the csv-pair layout.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// canonical-jsonl or csv-pair; inferred from the path when omitted.
    #[arg(long)]
    pub format: Option<agfusion_core::DatasetFormat>,
    /// Continue with the valid records when some fail validation.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a dataset to canonical JSONL.
    Convert {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-datapoint feature rows as CSV.
    Features {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one pipeline on every labeled datapoint and save the model.
    Train {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated leave-one-animal-out cross-validation.
    Cv {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        repeats: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate once per GNSS feature subset.
    Ablate {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        repeats: Option<usize>,
        /// Comma-separated subsets; defaults to every combination plus `none`.
        #[arg(long, value_delimiter = ',')]
        subsets: Vec<agfusion_core::GnssFeatureSet>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify datapoints with a saved model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count parameters and arithmetic operations of a model.
    CountOps {
        /// Count one pipeline; all of them when omitted.
        #[arg(long)]
        pipeline: Option<agfusion_core::Pipeline>,
        /// arm20c or arm20e feature layout with deployed hidden sizes.
        #[arg(long)]
        dataset_profile: Option<agfusion_core::DatasetProfile>,
        /// Count a saved model instead of a profile.
        #[arg(long, conflicts_with_all = ["pipeline", "dataset_profile"])]
        model: Option<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Synth {
        /// coupling0 (8 animals, ~12,000 datapoints) or small.
        #[arg(long, default_value = "coupling0")]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render saved cv or ablate runs as an MCC table without recomputing.
    Report {
        /// Run directories; each becomes one or more columns.
        #[arg(long, required = true)]
        run: Vec<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        anyhow::ensure!(n >= 1, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = config::RunConfig::load(cli.config.as_deref())?;
    if cli.jobs.is_some() {
        cfg.cv.jobs = cli.jobs;
    }
    match cli.command {
        Command::Convert { data, out } => commands::convert(&cfg, &data, &out),
        Command::Features { data, model, out } => {
            model.apply(&mut cfg);
            commands::features(&cfg, &data, &out)
        }
        Command::Train { data, model, out } => {
            model.apply(&mut cfg);
            commands::train(&cfg, &data, &out)
        }
        Command::Cv {
            data,
            model,
            repeats,
            out,
        } => {
            model.apply(&mut cfg);
            cfg.cv.repeats = repeats.unwrap_or(cfg.cv.repeats);
            cfg.out = out.or(cfg.out);
            commands::cv(&cfg, &data)
        }
        Command::Ablate {
            data,
            model,
            repeats,
            subsets,
            out,
        } => {
            model.apply(&mut cfg);
            cfg.cv.repeats = repeats.unwrap_or(cfg.cv.repeats);
            cfg.out = out.or(cfg.out);
            commands::ablate(&cfg, &data, &subsets)
        }
        Command::Infer { model, data, out } => commands::infer(&cfg, &model, &data, &out),
        Command::CountOps {
            pipeline,
            dataset_profile,
            model,
            out,
        } => commands::count_ops(pipeline, dataset_profile, model.as_deref(), out.as_deref()),
        Command::Synth { preset, seed, out } => commands::synth(&preset, seed, &out),
        Command::Report { run, out } => commands::report(&run, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
