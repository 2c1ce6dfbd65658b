//! `nla <experiment> --config <path> [--out <dir>] [--override key=value ...]`
//!
//! Exit codes: 0 all bounds hold, 1 a bound is violated, 2 configuration or usage
//! error, 3 runtime failure. `NLA_THREADS` caps the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nonlocal_lab::experiments::{self, ExperimentConfig, ExperimentKind};
use nonlocal_lab::LabError;

#[derive(Parser, Debug)]
#[command(name = "nla", about = "Nonlocal convection-diffusion lab")]
struct Cli {
    /// decay, asymptotics, scaling_identity, kernel_limits, energy_bounds,
    /// tail_bounds, compactness_functionals or profile_residuals
    experiment: String,
    /// `key = value` config file; built-in defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` pairs applied after the config file
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn init_threads() -> Result<(), LabError> {
    let Ok(text) = std::env::var("NLA_THREADS") else {
        return Ok(());
    };
    let threads: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| LabError::config("NLA_THREADS", format!("`{text}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| LabError::config("NLA_THREADS", e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_threads()
        .and_then(|_| cli.experiment.parse::<ExperimentKind>())
        .and_then(|kind| ExperimentConfig::load(kind, cli.config.as_deref(), &cli.overrides))
        .map(|mut cfg| {
            if let Some(out) = cli.out {
                cfg.out_dir = out;
            }
            cfg
        })
        .and_then(|cfg| experiments::run(&cfg));
    match &result {
        Ok(outcome) => {
            println!("{}", outcome.verdict_line());
            for row in outcome.rows.iter().filter(|r| !r.passed()) {
                eprintln!("  violated: {} [{}] = {:e}", row.check, row.parameter, row.value);
            }
        }
        Err(e) => eprintln!("nla: {e}"),
    }
    ExitCode::from(experiments::exit_code(&result) as u8)
}
