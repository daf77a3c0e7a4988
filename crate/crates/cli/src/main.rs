mod commands;
mod layers;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Chest X-ray screening with HoG descriptors, subspace reductions and SVMs.
#[derive(Debug, Parser)]
#[command(name = "hogscreen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
struct Common {
    /// Output directory; nothing is written outside it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON overlay applied on top of the defaults (and of --spec).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Upper bound on concurrent work units.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize the images of a manifest into a lossless store.
    Ingest {
        /// Manifest CSV.
        manifest: Option<PathBuf>,
        /// Side length of the normalized images.
        #[arg(long)]
        size: Option<usize>,
        /// Keep this many samples per class (requires --seed).
        #[arg(long)]
        balance_per_class: Option<usize>,
        /// Seed of the balancing draw.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Compute HoG descriptors for every image of a store.
    Extract {
        /// Store directory written by `ingest`.
        store: Option<PathBuf>,
        /// HoG cell side in pixels; must divide the image side.
        #[arg(long)]
        cell: Option<usize>,
        /// Orientation bins per cell.
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one of the experiments.
    Experiment {
        #[arg(value_parser = ["reduce-compare", "cellsize", "soa", "early"])]
        name: String,
        /// Experiment spec (JSON); a recorded `spec.json` replays a run.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Seeds folds, splits and subsampling; required here or in the --spec file.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a reduction and an SVM on a feature matrix and save both models.
    ExportComponents {
        /// Feature-matrix CSV written by `extract`.
        features: Option<PathBuf>,
        /// pca, kpca, lda or dcv.
        #[arg(long)]
        method: Option<String>,
        /// Number of leading components in the point-cloud export.
        #[arg(long)]
        components: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Ingest { common, .. }
            | Command::Extract { common, .. }
            | Command::Experiment { common, .. }
            | Command::ExportComponents { common, .. } => common,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<commands::Status> {
    if let Some(jobs) = cli.command.common().jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Ingest {
            manifest,
            size,
            balance_per_class,
            seed,
            common,
        } => commands::ingest(&common, manifest, size, balance_per_class, seed),
        Command::Extract {
            store,
            cell,
            bins,
            common,
        } => commands::extract(&common, store, cell, bins),
        Command::Experiment {
            name,
            spec,
            seed,
            common,
        } => commands::experiment(&common, &name, spec, seed),
        Command::ExportComponents {
            features,
            method,
            components,
            common,
        } => commands::export_components(&common, features, method, components),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(Cli::parse()) {
        Ok(commands::Status::Complete) => ExitCode::SUCCESS,
        Ok(commands::Status::Failed) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
