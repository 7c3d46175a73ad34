//! `sph` — command-line front end for the experiment harness.
//!
//! ```text
//! sph run <config> [--seed N] [--out DIR]   run an experiment config
//! sph list                                  list built-in presets
//! sph validate <config>                     parse + validate, don't run
//! ```
//!
//! `SPH_THREADS` bounds the worker-thread count (defaults to all cores).
//! `run` exits 0 exactly when the solver never tripped its divergence
//! fallback and every output file was written.

use clap::{Parser, Subcommand};
use sph_core::experiment::{list_experiments, parse_config, run_experiment};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sph",
    version,
    about = "SPH boundary-handling experiments: coupled vs. decoupled pressure solves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a config file and write its outputs.
    Run {
        /// Path to the config file (see `sph list` and the repo README).
        config: PathBuf,
        /// Overrides the `seed` key from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics, histograms, snapshots, config_echo.
        #[arg(long, default_value = "sph-out")]
        out: PathBuf,
    },
    /// List the built-in experiment presets.
    List,
    /// Parse and validate a config file without running it.
    Validate {
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("SPH_THREADS") {
        match threads.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: SPH_THREADS={threads} not applied: {e}");
                }
            }
            _ => {
                eprintln!("error: SPH_THREADS must be a positive integer, got '{threads}'");
                return ExitCode::from(2);
            }
        }
    }

    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for line in list_experiments() {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match parse_config(&config) {
            Ok(p) => {
                println!(
                    "ok: {} ({}, {}), duration {} s, sampling_ratio {}, seed {}",
                    p.name.label(),
                    p.solver.mode.label(),
                    p.solver.estimator.label(),
                    p.duration,
                    p.sampling_ratio,
                    p.seed
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Run { config, seed, out } => {
            let preset = match parse_config(&config) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let seed = seed.unwrap_or(preset.seed);
            eprintln!(
                "running {} ({}, {}), seed {}, writing to {}",
                preset.name.label(),
                preset.solver.mode.label(),
                preset.solver.estimator.label(),
                seed,
                out.display()
            );
            match run_experiment(&preset, seed, Some(&out)) {
                Ok(outcome) => {
                    if let Some(r) = &outcome.relaxation {
                        eprintln!(
                            "relaxation: {} steps, converged = {}, final speed {:.3e} m/s",
                            r.steps_taken, r.converged, r.final_avg_speed
                        );
                    }
                    eprintln!(
                        "measured {} steps, mean iterations {:.2}, {} fluid / {} boundary particles",
                        outcome.measured_steps,
                        outcome.mean_iterations(),
                        outcome.fluid_count,
                        outcome.boundary_count
                    );
                    if let Some(p) = outcome.metrics.passage {
                        eprintln!("passage ratio: {p:.4}");
                    }
                    match &outcome.failure {
                        Some(e) => {
                            eprintln!("error: run aborted: {e} (partial outputs retained)");
                            ExitCode::from(1)
                        }
                        None if outcome.diverged_steps > 0 => {
                            eprintln!(
                                "error: pressure solve tripped its divergence fallback on {} steps",
                                outcome.diverged_steps
                            );
                            ExitCode::from(1)
                        }
                        None => ExitCode::SUCCESS,
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
