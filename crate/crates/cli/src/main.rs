use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use invariant_gan::experiments::{run_command, Command, ExperimentConfig, CONFIG_KEYS};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Verify,
    Delta3Sweep,
    GanSweep,
    Lowdim,
    Covering,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Verify => Command::Verify,
            Cmd::Delta3Sweep => Command::Delta3Sweep,
            Cmd::GanSweep => Command::GanSweep,
            Cmd::Lowdim => Command::Lowdim,
            Cmd::Covering => Command::Covering,
        }
    }
}

fn keys_help() -> String {
    let mut s = String::from("Config keys (flat `key = value`, `#` comments):\n");
    for (k, doc) in CONFIG_KEYS {
        s.push_str(&format!("  {k:<24} {doc}\n"));
    }
    s
}

#[derive(Debug, Parser)]
#[command(name = "invariant-gan-lab", version, about = "Scaling-law experiments for group-invariant GANs")]
#[command(after_help = keys_help())]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.csv, summary.json and plot.svg.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (overrides `workers`; 0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: &Args) -> anyhow::Result<bool> {
    let mut cfg = ExperimentConfig::from_file(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let cmd = Command::from(args.command);
    let outcome = run_command(cmd, &cfg, &args.out).with_context(|| format!("running {cmd}"))?;
    let mut summary = outcome.summary.clone();
    if let Some(obj) = summary.as_object_mut() {
        obj.remove("config");
        obj.remove("environment");
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    println!("outputs written to {}", args.out.display());
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
