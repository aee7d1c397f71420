#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if needed).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for independent scan points.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override a scenario key, e.g. `--set fock_cutoffs=[40]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Parser, Debug)]
#[command(name = "gaugecraft", version, about = "Batch runs over cavity-QED scenario files")]
struct Args {
    /// spectrum | gauge-check | detect | evolve | modes
    #[arg(value_enum)]
    command: CommandName,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandName {
    Spectrum,
    GaugeCheck,
    Detect,
    Evolve,
    Modes,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(args: &Args) -> Result<u8, CliError> {
    let cfg = RunConfig::load(&args.run.config, &args.run.out, args.run.jobs, &args.run.set)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::output(&cfg.out_dir, e))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::config("--jobs", e.to_string()))?;
    pool.install(|| commands::dispatch(args.command, &cfg))
}
