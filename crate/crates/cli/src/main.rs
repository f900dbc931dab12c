use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kerr_junction::Error;
use kerr_junction_cli::scenario::{self, RunReport, ScenarioName};
use kerr_junction_cli::ScenarioConfig;

/// Pulsed two-mode Kerr resonator: mean field, quantum fluctuations and
/// photon statistics.
#[derive(Parser)]
#[command(name = "sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenarios enabled in the config (or those named with --scenario).
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        scenario: Vec<ScenarioName>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Step-size and cutoff convergence report for the default scenario.
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariant suite on the configured system.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "SIM_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

fn load(common: &Common) -> Result<(ScenarioConfig, PathBuf), ExitCode> {
    let cfg = ScenarioConfig::load(&common.config).map_err(|e| {
        eprintln!("error: {}: {e}", common.config.display());
        ExitCode::from(match e {
            Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        })
    })?;
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return Err(ExitCode::from(EXIT_CONFIG));
        }
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn report(result: kerr_junction::Result<RunReport>, out: &Path) -> ExitCode {
    match result {
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Ok(rep) => {
            for r in &rep.records {
                println!("{:<16} {:?}", r.name, r.status);
            }
            println!("outputs in {}", out.display());
            if let Some(e) = &rep.error {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(e));
            }
            if rep.failed() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, scenario, seed } => {
            let (mut cfg, out) = match load(&common) {
                Ok(v) => v,
                Err(code) => return code,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            report(scenario::run(&cfg, &scenario, &out), &out)
        }
        Command::Converge { common } => {
            let (cfg, out) = match load(&common) {
                Ok(v) => v,
                Err(code) => return code,
            };
            report(scenario::run(&cfg, &[ScenarioName::Converge], &out), &out)
        }
        Command::Validate { common } => {
            let (cfg, out) = match load(&common) {
                Ok(v) => v,
                Err(code) => return code,
            };
            report(scenario::validate(&cfg, &out), &out)
        }
    }
}
