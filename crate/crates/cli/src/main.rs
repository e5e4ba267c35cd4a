//! `issma-sim`: runs detection and analysis experiments from TOML configs and writes CSV results.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};
use issma::par::{self, Execution};

#[derive(Parser)]
#[command(name = "issma-sim", version, about = "MIMO tree-search detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write CSV plus a JSON sidecar
    Run(ConfigArgs),
    /// Print the resolved config with defaults filled in, without running it
    Validate(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set ber_sweep.m=6` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    workers: Option<usize>,
    /// CSV output path; the sidecar is written next to it
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, ExitCode> {
        let ov = Overrides {
            set: self.set.clone(),
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
        };
        config::load(&self.config, &ov).map_err(|e| {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        })
    }
}

fn run(args: &ConfigArgs) -> Result<(), ExitCode> {
    let cfg = args.load()?;
    if cfg.workers > 0 && !par::configure_workers(cfg.workers) {
        eprintln!("warning: could not size the worker pool to {}", cfg.workers);
    }
    let exec = if cfg.workers == 1 { Execution::Sequential } else { Execution::Parallel };
    let start = Instant::now();
    let table = experiments::run(&cfg, exec).map_err(|e| {
        eprintln!("runtime error: {e}");
        ExitCode::from(3)
    })?;
    let elapsed = start.elapsed().as_secs_f64();

    let csv_path = cfg.out_path();
    let meta_path = output::sidecar_path(&csv_path);
    let meta = output::Metadata {
        experiment: cfg.experiment.name(),
        version: format!("issma-sim {}", env!("CARGO_PKG_VERSION")),
        seed: cfg.seed,
        workers: cfg.workers,
        config_hash: cfg.hash(),
        elapsed_seconds: elapsed,
        csv: csv_path.display().to_string(),
        columns: &table.columns,
        rows: table.rows.len(),
        config: &cfg,
    };
    let written = output::write_csv(&csv_path, &table).and_then(|_| output::write_metadata(&meta_path, &meta));
    if let Err(e) = written {
        eprintln!("output error: {}: {e}", csv_path.display());
        return Err(ExitCode::from(1));
    }
    eprintln!(
        "{}: {} rows in {elapsed:.1} s -> {}",
        cfg.experiment.name(),
        table.rows.len(),
        csv_path.display()
    );
    Ok(())
}

fn validate(args: &ConfigArgs) -> Result<(), ExitCode> {
    let cfg = args.load()?;
    print!("{}", cfg.to_toml());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => run(a),
        Command::Validate(a) => validate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
