use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sggnn::dataset::convert_raw_benchmark;
use sggnn::harness::{cmd_coefs, cmd_homophily_hist, cmd_metrics, cmd_run, ExperimentConfig};
use sggnn::Error;

#[derive(Parser)]
#[command(name = "sggnn", version, about = "Structure-guided multi-graph GNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Total variation and edge homophily of original and KNN graphs.
    Metrics(Common),
    /// Node-homophily histograms, original vs KNN-Global.
    HomophilyHist(Common),
    /// Test accuracy for every dataset, graph and model over all splits.
    Run(Common),
    /// Learned SG-GNN mixing coefficients.
    Coefs(Common),
    /// Convert a raw `out1_*.txt` benchmark directory to edges/features/labels files.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Features are lists of nonzero indices into a vector of this width.
        #[arg(long)]
        sparse_dim: Option<usize>,
    },
}

fn load(common: &Common) -> sggnn::Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_file(&common.config)?;
    Ok(match common.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn run(cli: Cli) -> sggnn::Result<()> {
    match cli.command {
        Command::Metrics(c) => cmd_metrics(&load(&c)?, &c.out).map(drop),
        Command::HomophilyHist(c) => cmd_homophily_hist(&load(&c)?, &c.out).map(drop),
        Command::Run(c) => cmd_run(&load(&c)?, &c.out).map(drop),
        Command::Coefs(c) => cmd_coefs(&load(&c)?, &c.out).map(drop),
        Command::Convert {
            input,
            output,
            sparse_dim,
        } => convert_raw_benchmark(&input, &output, sparse_dim),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::PartialFailure(failures)) => {
            eprintln!("error: {} item(s) failed:", failures.len());
            for f in failures {
                eprintln!("  {f}");
            }
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
