use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasetie::zernike::presets;
use phasetie_harness::config::{ExperimentConfig, MethodSet};
use phasetie_harness::pipeline::{
    run_delta_sweep, run_from_events, run_intensity_sweep, run_single, simulate_events,
};
use phasetie_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(
    name = "phasetie",
    version,
    about = "Phase retrieval from defocus intensities and events"
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; for sweeps, replaces the seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<MethodSet>,
    /// Disable shot noise, readout noise and threshold fluctuation.
    #[arg(long, global = true)]
    noise_free: bool,
    #[command(subcommand)]
    command: Command,
}

fn parse_method(s: &str) -> std::result::Result<MethodSet, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// One retrieval at `run.intensity`.
    Single {
        #[arg(long)]
        intensity: Option<f64>,
    },
    /// RMSE against focus intensity for every sweep phase and seed.
    SweepIntensity,
    /// TEE RMSE against translation distance.
    SweepDelta,
    /// TEE retrieval from a recorded event CSV (needs `solve.C`).
    FromEvents {
        #[arg(long)]
        events: PathBuf,
        /// Preset to score the retrieval against.
        #[arg(long)]
        reference: Option<String>,
        /// Regularization constant; overrides `solve.C`.
        #[arg(long = "C")]
        c: Option<f64>,
    },
    /// Write a simulated stepwise event stream for the configured target.
    SimulateEvents {
        #[arg(long)]
        events: PathBuf,
    },
    /// Print the built-in aberration presets.
    Presets,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(method) = cli.method {
        cfg.method = method;
    }
    if cli.noise_free {
        cfg.noise_free = true;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load(&cli)?;
    match cli.command {
        Command::Single { intensity } => {
            if let Some(i) = intensity {
                cfg.intensity = i;
            }
            let outcome = run_single(&cfg)?;
            for r in &outcome.runs {
                println!(
                    "{} {}: rmse {:.4} (full frame {:.4}), C = {:e}",
                    outcome.target.label,
                    r.method.name(),
                    r.rmse,
                    r.rmse_full_frame,
                    r.regularization
                );
            }
        }
        Command::SweepIntensity => {
            let sweep = run_intensity_sweep(&cfg)?;
            for m in &sweep.means {
                println!(
                    "{} I={:.4}: mean rmse {:.4} over {} runs",
                    m.method, m.intensity, m.mean_rmse, m.runs
                );
            }
        }
        Command::SweepDelta => {
            let sweep = run_delta_sweep(&cfg)?;
            for m in &sweep.means {
                match m.two_delta {
                    Some(d) => println!(
                        "2Δ={:.0} mm: mean rmse {:.4} over {} runs",
                        d * 1e3,
                        m.rmse,
                        m.runs
                    ),
                    None => println!("acceptable: {:.3}", m.rmse),
                }
            }
        }
        Command::FromEvents {
            events,
            reference,
            c,
        } => {
            cfg.events.path = Some(events);
            if reference.is_some() {
                cfg.events.reference = reference;
            }
            if c.is_some() {
                cfg.pinned_c = c;
            }
            let outcome = run_from_events(&cfg)?;
            println!("{} events accumulated", outcome.stream.len());
            if let Some(r) = outcome.report {
                println!("rmse {:.4} (full frame {:.4})", r.rmse, r.rmse_full_frame);
            }
        }
        Command::SimulateEvents { events } => {
            cfg.validate()?;
            let n = simulate_events(&cfg, &events)?;
            println!("{n} events written to {}", events.display());
        }
        Command::Presets => {
            for (name, weights) in presets::BENCHMARK {
                let terms: Vec<String> = weights.iter().map(|(i, w)| format!("{i}:{w}")).collect();
                println!("{name}: {}", terms.join(" "));
            }
            println!("zero:");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &HarnessError) -> u8 {
    e.exit_code() as u8
}
