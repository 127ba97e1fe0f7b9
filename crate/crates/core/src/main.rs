use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qsign::cli::{self, Overrides, RunConfig, SynthConfig};

#[derive(Parser)]
#[command(name = "qsign", version, about = "Quantile sign-concordance analysis of two responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-step analysis described by a config file.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated quantile levels, replacing the config's.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        /// Enable the bootstrap with this many replicates.
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Pool the two discordant categories.
        #[arg(long)]
        merged: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset and its oracle φ sidecar.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> qsign::Result<()> {
    match cli.command {
        Command::Analyze {
            config,
            taus,
            bootstrap,
            seed,
            merged,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            Overrides {
                taus,
                bootstrap,
                seed,
                merged,
                out,
            }
            .apply(&mut cfg);
            for path in cli::analyze(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Synth { config, out } => {
            let cfg = SynthConfig::load(&config)?;
            for path in cli::synth(&cfg, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
