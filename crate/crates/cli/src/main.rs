// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sisnet_cli::{commands, ExperimentConfig, Options};

#[derive(Parser)]
#[command(name = "sisnet", version, about = "SIS epidemics on kernel-sampled random graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Also run the n = 8 shared-randomness oracle (couple only).
    #[arg(long)]
    oracle: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample graphs and simulate trajectories.
    Simulate(Common),
    /// Solve the deterministic limit equation.
    Meanfield(Common),
    /// Run the coupled processes and report the bound.
    Couple(Common),
    /// Run a scenario grid and write aggregated CSVs.
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::Meanfield(c) => ("meanfield", c),
        Command::Couple(c) => ("couple", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let cfg = match ExperimentConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let opts = Options { seed: common.seed, out: common.out.clone(), threads: common.threads, oracle: common.oracle };
    let result = match name {
        "simulate" => commands::simulate(&cfg, &opts),
        "meanfield" => commands::meanfield(&cfg, &opts),
        "couple" => commands::couple(&cfg, &opts),
        _ => commands::sweep(&cfg, &opts),
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
