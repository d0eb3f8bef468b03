use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snls_core::config::{Overrides, RunConfig};
use snls_core::error::Error;
use snls_core::experiment::{run_experiment, write_outputs, ExitStatus};

#[derive(Parser)]
#[command(name = "snls", version, about = "Stochastic coupled NLS simulator and identity checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<String>,
        /// Number of Brownian paths (overrides `n_paths`).
        #[arg(long)]
        paths: Option<usize>,
        /// Step size (overrides `solver.dt`).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Parse and validate a config file without running it.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(ExitStatus::for_error(e).code() as u8)
}

fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, Error> {
    let config = RunConfig::from_file(path, overrides)?;
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(violations))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify { config } => match load(&config, &Overrides::default()) {
            Ok(c) => {
                println!("ok: experiment {} (config hash {})", c.experiment.name(), c.hash());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run {
            config,
            seed,
            out,
            paths,
            dt,
        } => {
            let overrides = Overrides {
                seed,
                output_dir: out,
                n_paths: paths,
                dt,
            };
            let config = match load(&config, &overrides) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let outcome = match run_experiment(&config, None) {
                Ok(o) => o,
                Err(e) => return fail(&e),
            };
            if let Err(e) = write_outputs(&outcome, Path::new(&config.output_dir)) {
                return fail(&e);
            }
            let v = &outcome.verdict;
            for c in &v.criteria {
                let range = match c.upper {
                    Some(hi) => format!("[{}, {}]", c.threshold, hi),
                    None => format!("{}", c.threshold),
                };
                println!(
                    "{} {}: {:e} {} {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.comparison,
                    range
                );
            }
            println!("{} {}: {}", config.experiment.name(), v.status, config.output_dir);
            ExitCode::from(outcome.exit_status().code() as u8)
        }
    }
}
