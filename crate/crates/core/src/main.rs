use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dicke_cd::experiments::{cmd_dynamics, cmd_spectrum, cmd_sweep, load_config};
use dicke_cd::{CorrectionScheme, Error};

#[derive(Parser)]
#[command(version, about = "Counterdiabatic Dicke-state preparation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-resolved populations and fidelities for one scheme.
    Dynamics(Common),
    /// Final fidelity over a grid of chirp rates and schemes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Override the config's scheme list; may be repeated.
        #[arg(long = "scheme")]
        schemes: Vec<CorrectionScheme>,
    },
    /// Adiabatic and diabatic levels along the protocol.
    Spectrum(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    let (csv, meta) = match cli.command {
        Command::Dynamics(c) => cmd_dynamics(&load_config(&c.config)?, &c.out)?,
        Command::Spectrum(c) => cmd_spectrum(&load_config(&c.config)?, &c.out)?,
        Command::Sweep { common: c, schemes } => {
            let cfg = load_config(&c.config)?;
            let schemes = if schemes.is_empty() {
                cfg.schemes.clone()
            } else {
                schemes
            };
            let workers = c
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            cmd_sweep(&cfg, &schemes, workers, &c.out)?
        }
    };
    Ok(vec![csv, meta])
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
