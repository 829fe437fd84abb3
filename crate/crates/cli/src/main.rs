use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use beamshare_cli::commands;
use beamshare_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "beamshare",
    version,
    about = "Environment-aware transfer-RL workbench for mmWave beam selection"
)]
struct Cli {
    /// Plain-text key-value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated training seeds (default: 1,2,3,4,5,6,7).
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate environment A plus its perturbed siblings B and C.
    GenEnv {
        /// Perturbation radius for environment B, in meters.
        #[arg(long)]
        radius_b: Option<f64>,
        /// Perturbation radius for environment C, in meters.
        #[arg(long)]
        radius_c: Option<f64>,
    },
    /// Embed environment clouds into a 2-D distance map (map.csv).
    Map {
        /// Environment directories (default: A, B, C under the output dir).
        env_dirs: Vec<PathBuf>,
    },
    /// Train one model per seed on an environment directory.
    Train {
        #[arg(long)]
        env: PathBuf,
    },
    /// Evaluate a saved model on an environment's test locations.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        env: PathBuf,
    },
    /// Train on A, evaluate on A/B/C against their Chamfer distance from A.
    Fig5,
    /// Compare scratch training on B with fine-tuning an A-pretrained model.
    Fig6,
    /// Run the model-sharing protocol end to end over localhost sockets.
    ProtocolDemo,
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seeds) = cli.seeds {
        cfg.seeds = seeds;
    }
    cfg.validate()?;

    match cli.command {
        Command::GenEnv { radius_b, radius_c } => {
            if let Some(r) = radius_b {
                cfg.radius_b = r;
            }
            if let Some(r) = radius_c {
                cfg.radius_c = r;
            }
            cfg.validate()?;
            commands::cmd_gen_env(&cfg)?;
        }
        Command::Map { env_dirs } => {
            commands::cmd_map(&cfg, &env_dirs)?;
        }
        Command::Train { env } => {
            commands::cmd_train(&cfg, &env)?;
        }
        Command::Eval { model, env } => {
            commands::cmd_eval(&cfg, &model, &env)?;
        }
        Command::Fig5 => {
            commands::cmd_fig5(&cfg)?;
        }
        Command::Fig6 => {
            commands::cmd_fig6(&cfg)?;
        }
        Command::ProtocolDemo => {
            commands::cmd_protocol_demo(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
