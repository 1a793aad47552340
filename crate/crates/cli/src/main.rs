use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collapse_lab_cli::{experiments::EXPERIMENTS, run_file, validate_file, Overrides};
use serde_json::json;

#[derive(Parser)]
#[command(name = "collapse-lab", version, about = "Reproducible collapse-model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trajectories: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
    /// Print the registered experiments.
    ListExperiments,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::ListExperiments => {
            for e in EXPERIMENTS {
                println!("{:<20} {}", e.name, e.summary);
            }
            0
        }
        Command::Validate { config } => match validate_file(&config) {
            Ok(p) => {
                println!("{}", json!({"status": "ok", "config": p.effective}));
                0
            }
            Err(v) => {
                println!("{}", json!({"status": "invalid-config", "violations": v}));
                1
            }
        },
        Command::Run {
            config,
            seed,
            trajectories,
            out,
            workers,
        } => {
            let overrides = Overrides {
                seed,
                trajectories,
                out,
                workers,
            };
            match run_file(&config, &overrides) {
                Ok(report) => {
                    for inv in &report.summary.invariants {
                        println!("{} {} measured={:e} ({})", if inv.passed { "PASS" } else { "FAIL" }, inv.name, inv.measured, inv.tolerance);
                    }
                    println!("outputs in {}", report.output_dir.display());
                    report.exit_code()
                }
                Err(e) => {
                    eprintln!("{}", e.report());
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
