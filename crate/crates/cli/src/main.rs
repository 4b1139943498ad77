//! `rydberg-anneal`: runs an experiment config and writes its artifacts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rydberg_anneal::{run, Error, ExperimentConfig, Mode, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "rydberg-anneal", version, about = "Rydberg-dressed quantum annealing experiments")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's mode: dressing-sweep, anneal, gap-scan or benchmark-suite.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory; defaults to the config's `out_dir`, then `./out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    /// Adds plotting columns to the CSV outputs.
    #[arg(long)]
    plot_data: bool,
}

fn execute(cli: &Cli) -> Result<String, Error> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(m) = &cli.mode {
        cfg.mode = m.parse::<Mode>()?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads == Some(0) {
        return Err(Error::config("/threads", "thread count must be positive"));
    }
    let out = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let manifest = run(&cfg, &out, &RunOptions { threads: cli.threads, plot_data: cli.plot_data })?;
    Ok(serde_json::to_string_pretty(&manifest)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(manifest) => {
            println!("{manifest}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code: u8 = if e.is_numerical() { 3 } else { 2 };
            let mut body = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": code,
            });
            if let Error::Config { pointer, .. } = &e {
                body["pointer"] = pointer.clone().into();
            }
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
