use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use plate_core::harness::{self, members, Overrides, RunConfig};
use plate_core::RunStatus;

/// Desk-scale experiments with a damped plate equation.
#[derive(Parser)]
#[command(name = "platelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory (defaults to the config's `out`, then `out/<scenario name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    /// Accept scenarios that violate structural hypotheses (numerics checks still apply).
    #[arg(long)]
    allow_hypothesis_violation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate one trajectory and write its bundle.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run one trajectory per (seed, norm) pair and aggregate.
    Ensemble {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Initial H2×L2 norms (defaults to the config's target norm).
        #[arg(long, value_delimiter = ',')]
        norms: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Search for stationary points from the zero guess and `k` random guesses.
    Stationary {
        config: PathBuf,
        #[arg(long, default_value_t = 4)]
        guesses: usize,
        /// Amplitude of the random guesses.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &Path, common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(&Overrides {
        dt: common.dt,
        horizon: common.horizon,
        stride: common.stride,
        allow_hypothesis_violation: common.allow_hypothesis_violation,
        out: common.out.clone(),
    })?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    Ok(match &cfg.out {
        Some(p) => p.clone(),
        None => Path::new("out").join(&cfg.scenario()?.name),
    })
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { config, json, common } => {
            let cfg = load(&config, &common)?;
            let v = harness::validate_config(&cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&v)?);
            } else {
                print!("{v}");
            }
            Ok(if v.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Run { config, common } => {
            let cfg = load(&config, &common)?;
            let dir = out_dir(&cfg)?;
            let (sim, bundle) = harness::run_scenario(&cfg, &dir)?;
            let last = sim.record.samples.last().context("empty trajectory")?;
            println!("bundle: {}", bundle.dir.display());
            println!("config hash: {}", bundle.contents.hashes.config);
            println!("trajectory hash: {}", bundle.contents.hashes.trajectory);
            if !sim.scenario.waived.is_empty() {
                println!("waived hypotheses: {}", sim.scenario.waived.join(", "));
            }
            println!(
                "t = {}  E = {:.6e}  L = {:.6e}  |(u,v)| = {:.6e}",
                last.t, last.energy, last.lyapunov, last.phase_norm
            );
            match sim.status() {
                RunStatus::Completed => {
                    println!("status: completed");
                    Ok(ExitCode::SUCCESS)
                }
                RunStatus::Halted { step, reason } => {
                    println!("status: halted at step {step}: {reason}");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Ensemble { config, seeds, norms, common } => {
            let cfg = load(&config, &common)?;
            let norms = if norms.is_empty() {
                match cfg.initial {
                    harness::InitialDataSpec::LowPass { target_norm, .. } => vec![target_norm],
                    _ => bail!("--norms is required when the config's sampler is not low_pass"),
                }
            } else {
                norms
            };
            let dir = out_dir(&cfg)?;
            let report = harness::run_ensemble(&cfg, &members(&seeds, &norms), Some(&dir))?;
            println!("aggregate: {}", dir.join(harness::AGGREGATE_FILE).display());
            println!("members: {}", report.runs.len());
            println!(
                "absorption: {:.6e} -> {:.6e}",
                report.absorption.first().copied().unwrap_or(f64::NAN),
                report.absorption.last().copied().unwrap_or(f64::NAN)
            );
            println!("max Lyapunov increase: {:.3e}", report.max_lyapunov_increase);
            println!("max balance residual: {:.3e}", report.max_balance_residual);
            Ok(ExitCode::SUCCESS)
        }
        Command::Stationary { config, guesses, scale, max_iter, common } => {
            let cfg = load(&config, &common)?;
            let dir = out_dir(&cfg)?;
            let found = harness::run_stationary(&cfg, guesses, scale, max_iter, Some(&dir))?;
            println!("{} distinct stationary point(s)", found.len());
            for s in &found {
                println!(
                    "  from {}: |phi|_H2 = {:.6e}, residual {:.2e}, {} Newton steps",
                    s.guess, s.h2_norm, s.residual, s.iterations
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
