mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{PosteriorRequest, VerifyRequest};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "infobridge", version, about = "Brownian bridge information process: simulation, filtering and compensators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(
            self.config.as_deref(),
            &Overrides {
                seed: self.seed,
                out: self.out.clone(),
                paths: self.paths,
                dt: self.dt,
                horizon: self.horizon,
            },
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble of paths.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of paths also written as CSV.
        #[arg(long, default_value_t = 10)]
        csv_paths: usize,
    },
    /// Posterior survival curve and pin probabilities given one observation.
    Posterior {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
        /// Observed value; must be a pinning point when --absorbed-at is given.
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// Absorption time, if the process is already absorbed at time t.
        #[arg(long)]
        absorbed_at: Option<f64>,
        #[arg(long)]
        u_max: Option<f64>,
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Compensator curves over a simulated ensemble.
    Compensator {
        #[command(flatten)]
        common: Common,
        /// Also compute the compensator weighted by the path value.
        #[arg(long)]
        weighted: bool,
        #[arg(long, default_value_t = 10)]
        csv_paths: usize,
        #[arg(long, default_value_t = 20)]
        summary_points: usize,
    },
    /// Run the acceptance suite; exits nonzero if any criterion fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion ids.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u32>>,
        /// Multiplier on every ensemble size.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Scale the intensity kernel by this factor (sensitivity check).
        #[arg(long)]
        corrupt_kernel: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { common, csv_paths } => {
            commands::simulate(&common.load()?, csv_paths)?;
        }
        Command::Posterior {
            common,
            t,
            x,
            absorbed_at,
            u_max,
            points,
        } => {
            let req = PosteriorRequest {
                t,
                x,
                absorbed_at,
                u_max,
                points,
            };
            commands::posterior_curves(&common.load()?, &req)?;
        }
        Command::Compensator {
            common,
            weighted,
            csv_paths,
            summary_points,
        } => {
            commands::compensators(&common.load()?, weighted, csv_paths, summary_points)?;
        }
        Command::Verify {
            common,
            only,
            scale,
            corrupt_kernel,
        } => {
            anyhow::ensure!(scale > 0.0, "--scale must be positive");
            let req = VerifyRequest { only, scale, corrupt_kernel };
            return commands::verify(&common.load()?, &req);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
