//! Batch driver for capflow experiments.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod suites;

use std::ffi::OsString;

use clap::Parser;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use run::{run, RunStatus};

use error::{EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION};

/// Resolve the config from file and flags, run it on the requested worker pool, and return the exit status.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (file, flags) = cli.overrides();
    let cfg = match file.map(|p| ExperimentConfig::from_file(&p)).transpose() {
        Ok(base) => base.unwrap_or_default().merge(flags),
        Err(e) => {
            eprintln!("capflow: {e}");
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("capflow: cannot start worker pool: {e}");
            return EXIT_NUMERIC;
        }
    };
    match pool.install(|| run(&cfg)) {
        Ok(status) if status.violations.is_empty() => EXIT_OK,
        Ok(status) => {
            for v in &status.violations {
                eprintln!("capflow: invariant violation: {v}");
            }
            if cfg.fatal() {
                EXIT_VIOLATION
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("capflow: {e}");
            e.exit_code()
        }
    }
}
