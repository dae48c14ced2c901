use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use coopgame::config::load_config;
use coopgame::error::Result;
use coopgame::node::serve_node;
use coopgame::runner::{emit, error_json, run, solve, RunOptions};

/// Cooperative game learning of generative models by synthetic data exchange.
#[derive(Parser)]
#[command(name = "coopgame", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config's master_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Host every player in its own process, exchanging samples over TCP.
        /// Ports start at $COOPGAME_PORT_BASE when set.
        #[arg(long)]
        multiprocess: bool,
        /// Run alpha-sweep points in parallel.
        #[arg(long)]
        parallel_sweep: bool,
    },
    /// Print the exact equilibrium of a configuration as JSON.
    Solve { config: PathBuf },
    /// Check a configuration and report every problem found.
    Validate { config: PathBuf },
    /// Player process for multi-process runs (driven over stdin/stdout).
    #[command(hide = true)]
    Node,
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run {
            config,
            out,
            seed,
            multiprocess,
            parallel_sweep,
        } => {
            let config = load_config(&config)?;
            let report = run(
                &config,
                &RunOptions {
                    out_dir: out,
                    seed,
                    multiprocess,
                    parallel_sweep,
                    launch: None,
                },
            )?;
            emit(
                std::io::stdout(),
                &json!({ "status": "ok", "report": report }),
            )?;
        }
        Cmd::Solve { config } => {
            let config = load_config(&config)?;
            emit(std::io::stdout(), &solve(&config)?)?;
        }
        Cmd::Validate { config } => {
            let config = load_config(&config)?;
            emit(
                std::io::stdout(),
                &json!({ "status": "ok", "mode": config.mode, "players": config.spec.n_players() }),
            )?;
        }
        Cmd::Node => serve_node(std::io::stdin().lock(), std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = emit(std::io::stderr(), &error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
