//! Command-line front end for coupled Lévy queue analysis.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use levyq_cli::commands;
use levyq_cli::config::{parse_config, parse_grid_spec, ModelConfig};
use levyq_cli::exit_code;

#[derive(Parser)]
#[command(
    name = "levyq",
    version,
    about = "Stationary analysis of two coupled Lévy-driven queues: exact joint \
             transforms via Wiener-Hopf factorization, marginal distributions, \
             moments, and a cross-validating simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Model configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for CSV outputs (stdout tables otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the [run] seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Stability, drifts, derived constants and busy-period summaries.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Joint transform values with functional-equation residuals.
    Transform {
        #[command(flatten)]
        common: Common,
        /// First-axis grid, `a:b:n` or comma list (overrides [run] grid1).
        #[arg(long)]
        grid1: Option<String>,
        /// Second-axis grid (overrides [run] grid2).
        #[arg(long)]
        grid2: Option<String>,
    },
    /// Stationary mean workloads and the means identity.
    Moments {
        #[command(flatten)]
        common: Common,
        /// Finite-difference step at the origin (overrides [run] moment_step).
        #[arg(long)]
        step: Option<f64>,
    },
    /// Marginal workload distribution of one queue.
    Marginal {
        #[command(flatten)]
        common: Common,
        /// Queue index, 1 or 2 (overrides [run] queue).
        #[arg(long)]
        queue: Option<usize>,
        /// Evaluation grid, `a:b:n` or comma list (overrides [run] xs).
        #[arg(long)]
        xs: Option<String>,
    },
    /// Monte-Carlo estimates of transforms, moments and idle probabilities.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulated time units (overrides [run] horizon).
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Side-by-side analytic vs simulated values with pass/fail flags.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<f64>,
    },
}

fn load(common: &Common) -> Result<(ModelConfig, String), i32> {
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return Err(1);
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(exit_code(&e));
        }
    };
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    Ok((config, text))
}

fn run() -> Result<(), i32> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(code) };
        }
    };

    let (common, result) = match &cli.command {
        Command::Analyze { common } => {
            let (config, text) = load(common)?;
            (common, commands::cmd_analyze(&config, &text, common.out.as_deref()))
        }
        Command::Transform {
            common,
            grid1,
            grid2,
        } => {
            let (mut config, text) = load(common)?;
            for (spec, target) in [(grid1, &mut config.run.grid1), (grid2, &mut config.run.grid2)]
            {
                if let Some(spec) = spec {
                    match parse_grid_spec(spec) {
                        Ok(grid) => *target = grid,
                        Err(e) => {
                            eprintln!("error: {e}");
                            return Err(exit_code(&e));
                        }
                    }
                }
            }
            (common, commands::cmd_transform(&config, &text, common.out.as_deref()))
        }
        Command::Moments { common, step } => {
            let (mut config, text) = load(common)?;
            if let Some(step) = step {
                config.run.moment_step = *step;
            }
            (common, commands::cmd_moments(&config, &text, common.out.as_deref()))
        }
        Command::Marginal { common, queue, xs } => {
            let (mut config, text) = load(common)?;
            if let Some(queue) = queue {
                config.run.queue = *queue;
            }
            if let Some(xs) = xs {
                match parse_grid_spec(xs) {
                    Ok(grid) => config.run.xs = grid,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return Err(exit_code(&e));
                    }
                }
            }
            (common, commands::cmd_marginal(&config, &text, common.out.as_deref()))
        }
        Command::Simulate { common, horizon } => {
            let (mut config, text) = load(common)?;
            if let Some(h) = horizon {
                config.run.horizon = *h;
            }
            (common, commands::cmd_simulate(&config, &text, common.out.as_deref()))
        }
        Command::Compare { common, horizon } => {
            let (mut config, text) = load(common)?;
            if let Some(h) = horizon {
                config.run.horizon = *h;
            }
            (common, commands::cmd_compare(&config, &text, common.out.as_deref()))
        }
    };
    let _ = common;
    match result {
        Ok(report) => {
            println!("{report}");
            Ok(())
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(exit_code(&e))
        }
    }
}

fn main() -> ExitCode {
    // die quietly when the reader of a pipe goes away (e.g. `levyq ... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code as u8),
    }
}
