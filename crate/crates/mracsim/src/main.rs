//! Thin command-line front end over the library harness.
//!
//! Exit codes: 0 success, 1 criterion or runtime failure, 2 configuration
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mracsim::error::Error;
use mracsim::harness::{
    check_acceptance, load_scenario, preset, preset_names, run_experiment, run_sweep,
    ExperimentOptions, Scenario, SweepParameter,
};

#[derive(Parser)]
#[command(
    name = "mracsim",
    about = "Adaptive-control experiment runner: scenarios, sweeps and acceptance checks",
    after_help = "Scenario arguments accept either a JSON file path or a shipped preset name."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv / summary.json (+ plots).
    Run {
        /// Scenario file or preset name.
        #[arg(long)]
        scenario: String,
        /// Output directory for the artifacts.
        #[arg(long)]
        out: PathBuf,
        /// Also render static SVG plots.
        #[arg(long)]
        plots: bool,
        /// Override the trace decimation stride.
        #[arg(long)]
        decimate: Option<usize>,
    },
    /// Run one sub-experiment per value of a swept parameter.
    Sweep {
        /// Base scenario file or preset name.
        #[arg(long)]
        scenario: String,
        /// Parameter to sweep: gamma0, gamma1 or reference.
        #[arg(long)]
        param: String,
        /// Comma-separated values (numbers, or signal tokens like sin:1:1).
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Output directory; one subdirectory per value.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the acceptance criteria against a completed campaign.
    Check {
        /// Directory holding the preset runs and sweeps.
        #[arg(long)]
        out: PathBuf,
    },
    /// List the shipped scenario presets.
    Presets,
}

fn resolve_scenario(arg: &str) -> Result<Scenario, Error> {
    if preset_names().contains(&arg) {
        preset(arg)
    } else {
        load_scenario(arg.as_ref())
    }
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Validation(_) | Error::Config(_) | Error::Parse(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { scenario, out, plots, decimate } => {
            let scenario = resolve_scenario(&scenario)?;
            let summary =
                run_experiment(&scenario, &out, &ExperimentOptions { plots, decimate })?;
            println!(
                "{}: theta_hat = {:?}, |theta_tilde| = {:.3e}, artifacts in {}",
                summary.scenario_name,
                summary.theta_hat_final,
                summary.theta_tilde_final_norm,
                out.display()
            );
            if let Some(info) = &summary.aborted {
                eprintln!("run aborted at t = {} s: {} (partial outputs kept)", info.t, info.what);
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { scenario, param, values, out } => {
            let scenario = resolve_scenario(&scenario)?;
            let param: SweepParameter = param.parse()?;
            let summary = run_sweep(&scenario, param, &values, &out)?;
            println!("sweep over {} ({} runs):", summary.parameter, summary.runs.len());
            for r in &summary.runs {
                let rate = r
                    .xi_decay_rate
                    .map(|s| format!("{:.4}", -s))
                    .unwrap_or_else(|| "-".into());
                println!("  {:<16} rate {:<10} {}", r.value, rate, r.status);
            }
            if let Some(ord) = summary.rate_nondecreasing {
                println!("  rate ordering nondecreasing: {ord}");
            }
            let all_ok = summary.runs.iter().all(|r| r.status == "ok");
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Check { out } => {
            let report = check_acceptance(&out)?;
            print!("{report}");
            Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
