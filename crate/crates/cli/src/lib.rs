//! Command-line front end: data ingestion, configuration, and report
//! emission around the `tacarr` library.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod output;

use std::fmt;
use std::path::PathBuf;

use anyhow::Result;

use crate::args::{Cli, Command};
use crate::commands::Context;

/// Bad flags or configuration; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => config::load(p)?,
        None => config::FileConfig::default(),
    };
    if let Some(j) = cli.jobs.or(file.jobs) {
        if j == 0 {
            return Err(usage("--jobs must be positive"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let ctx = Context {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        output_dir: cli.output_dir.or(file.output_dir).unwrap_or_else(|| PathBuf::from(".")),
    };
    match cli.command {
        Command::Ranges(mut c) => {
            c.data.merge(&file.data);
            commands::ranges(&ctx, &c)
        }
        Command::Fit(mut c) => {
            c.data.merge(&file.data);
            c.model.merge(&file.model);
            c.estimation.merge(&file.estimation);
            c.diagnostics.merge(&file.diagnostics);
            commands::fit_cmd(&ctx, &c)
        }
        Command::Simulate(mut c) => {
            c.model.merge(&file.model);
            c.estimation.merge(&file.estimation);
            c.simulation.merge(&file.simulation);
            commands::simulate(&ctx, &c)
        }
        Command::Forecast(mut c) => {
            c.data.merge(&file.data);
            c.model.merge(&file.model);
            c.estimation.merge(&file.estimation);
            c.forecast.merge(&file.forecast);
            commands::forecast(&ctx, &c)
        }
        Command::Compare(mut c) => {
            c.data.merge(&file.data);
            c.model.merge(&file.model);
            c.estimation.merge(&file.estimation);
            c.forecast.merge(&file.forecast);
            commands::compare(&ctx, &c)
        }
        Command::Diagnose(mut c) => {
            c.diagnostics.merge(&file.diagnostics);
            commands::diagnose(&ctx, &c.diagnostics)
        }
    }
}
