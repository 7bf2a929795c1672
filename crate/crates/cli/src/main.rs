//! Command-line runner for measure-toc experiments.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "measure-toc", version, about = "Time-optimal control experiments on particle measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for sampling and search, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate one control and report the hitting time.
    Simulate,
    /// Estimate the minimal time by control search.
    Value,
    /// Residual sweep of the Hamilton–Jacobi equation on the mean-drift problem.
    HjbCheck,
    /// Γ-convergence table for the family f + 1/n.
    Gamma,
    /// Compare numerics with the closed-form mean-drift problem.
    ExampleVerify,
}

enum Failure {
    Config(anyhow::Error),
    BlowUp(anyhow::Error),
}

fn classify(err: anyhow::Error) -> Failure {
    let blow_up =
        err.chain().any(|e| matches!(e.downcast_ref::<measure_toc::Error>(), Some(measure_toc::Error::BlowUp { .. })));
    if blow_up {
        Failure::BlowUp(err)
    } else {
        Failure::Config(err)
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let cfg = load(cli).map_err(Failure::Config)?;
    let outcome = match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Value => commands::value(&cfg),
        Command::HjbCheck => commands::hjb_check(&cfg),
        Command::Gamma => commands::gamma(&cfg),
        Command::ExampleVerify => commands::example_verify(&cfg),
    }
    .map_err(classify)?;
    let pass = outcome.pass;
    let written = outcome.artifacts.flush().map_err(Failure::Config)?;
    if !cli.quiet {
        for line in &outcome.summary {
            println!("{line}");
        }
        for path in written {
            println!("wrote {}", path.display());
        }
        println!("{}", if pass { "all checks passed" } else { "check failed" });
    }
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::BlowUp(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
