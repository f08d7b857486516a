//! `topics`: batch driver for the simulation toolkit.
//!
//! Subcommands talk to each other only through files in `--out`:
//! `generate` writes the population, `simulate` the observations and truth,
//! and `denoise` / `reidentify` read those back.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::artifact::{Header, OutDir};
use crate::commands::Ctx;
use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "topics", version, about = "Topics API privacy simulations")]
struct Cli {
    /// Flat JSON config; unknown keys are errors.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: available cores]. Outputs do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic population and print its summary statistics.
    Generate {
        /// Also write this many candidate top profiles per user.
        #[arg(long, default_value_t = 1)]
        candidates: u32,
    },
    /// Run the API mechanism over the population.
    Simulate,
    /// Score one-shot and multi-shot noise removal against the truth.
    Denoise,
    /// Match users across the first two sites at every epoch.
    Reidentify,
    /// Closed-form noise statistics as JSON.
    Analytics,
    /// Apply the topic filter to a file of score vectors.
    Filter {
        /// `domain<TAB>` then omega+1 space-separated scores per line.
        scores: PathBuf,
    },
    /// Classification histograms for plotting.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = OutDir::create(&cli.out, Header::new(cfg.hash(), cfg.seed))?;
    let ctx = Ctx { cfg, out };
    match cli.command {
        Command::Generate { candidates } => commands::generate(&ctx, candidates),
        Command::Simulate => commands::simulate(&ctx),
        Command::Denoise => commands::denoise(&ctx),
        Command::Reidentify => commands::reidentify_cmd(&ctx),
        Command::Analytics => commands::analytics(&ctx),
        Command::Filter { scores } => commands::filter(&ctx, &scores),
        Command::Report => commands::report(&ctx),
    }
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
