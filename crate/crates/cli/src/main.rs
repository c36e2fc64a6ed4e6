//! `fedfuse` command-line runner.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedfuse::bound::{run_bound_suite, BoundSuiteConfig};
use fedfuse::harness::{partition_stats, run_experiment, ExperimentConfig};
use fedfuse::FedError;

#[derive(Parser)]
#[command(name = "fedfuse", version, about = "Deterministic federated-learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed and strategy of an experiment config.
    Run { config: PathBuf },
    /// Evaluate the ensemble risk bound on a seeded suite of instances.
    BoundCheck { config: PathBuf },
    /// Print per-client class histograms and entropies of the partition.
    PartitionStats { config: PathBuf },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), FedError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| FedError::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn execute(command: Command) -> Result<(), FedError> {
    match command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg)?;
            for seed in &summary.seeds {
                for (label, s) in &seed.strategies {
                    let rtt = s.rounds_to_target.map_or("-".to_string(), |r| r.to_string());
                    println!(
                        "seed {:>4} {:<24} fused {:.4} averaged {:.4} ensemble {:.4} rounds-to-target {}",
                        seed.seed, label, s.final_acc_fused, s.final_acc_averaged, s.final_acc_ensemble, rtt
                    );
                }
            }
            println!("wrote {}", cfg.output_dir().display());
        }
        Command::BoundCheck { config } => {
            let cfg = BoundSuiteConfig::load(&config)?;
            let report = run_bound_suite(&cfg)?;
            let path = cfg.output_dir().join("bound-report.json");
            write_json(&path, &report)?;
            println!(
                "{}/{} instances hold ({} vacuous), min slack {:.4}",
                report.holds_count, report.instances, report.vacuous_count, report.min_slack
            );
            println!("wrote {}", path.display());
        }
        Command::PartitionStats { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            for stats in partition_stats(&cfg)? {
                let line = serde_json::to_string(&stats).map_err(|e| FedError::Parse(e.to_string()))?;
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                FedError::Config(_) | FedError::Parse(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
