use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use imgep::harness::{emit_plots, ratio_csv, run_experiment, ExperimentConfig};
use imgep::imgep::ExplorationHistory;
use imgep::sim::generate_dataset;

#[derive(Parser)]
#[command(name = "imgep", version, about = "Modular goal exploration on the Arm-2-Balls environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset of random ball/distractor scenes (A2BDS001 format).
    GenDataset {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment matrix described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Render SVG plots from report files.
    Plot {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Exploration ratio per episode of one history log, as CSV.
    Eval {
        history: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDataset { n, seed, out } => {
            generate_dataset(n, seed, &out)?;
            println!("wrote {n} scenes to {}", out.display());
        }
        Command::Run { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let reports = run_experiment(&cfg, &out_dir)?;
            for r in &reports {
                let finals = r.final_ratios();
                println!(
                    "{:<28} median final ratio {:.3} over {} trials",
                    r.condition,
                    imgep::harness::median(&finals),
                    finals.len()
                );
            }
        }
        Command::Plot { reports, out_dir } => {
            let written = emit_plots(&reports, &out_dir)?;
            println!("wrote {} plots to {}", written.len(), out_dir.display());
        }
        Command::Eval { history, out } => {
            let h = ExplorationHistory::load(&history)?;
            let csv = ratio_csv(&h);
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
