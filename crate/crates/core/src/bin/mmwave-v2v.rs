use std::fs;
use std::io;
use std::process::ExitCode;

use clap::Parser;
use log::info;

use mmwave_v2v::config::{expand_sweep, Cli};
use mmwave_v2v::harness::{self, Parallelism};
use mmwave_v2v::sim::RunOptions;
use mmwave_v2v::{Error, Result};

fn run(cli: Cli) -> Result<()> {
    let file_text = match &cli.config {
        Some(path) => Some(fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?),
        None => None,
    };
    let spec = cli.sweep(file_text.as_deref())?;
    let configs = expand_sweep(&spec);
    info!(
        "{} sweep points x {} replications = {} runs",
        spec.num_points(),
        spec.replications,
        configs.len()
    );

    let par = match (cli.serial, cli.jobs) {
        (true, _) => Parallelism::Serial,
        (false, Some(n)) => Parallelism::Threads(n),
        (false, None) => Parallelism::Auto,
    };
    let opts = RunOptions {
        trace: cli.trace.is_some(),
        keep_segments: cli.dump_channel.is_some(),
    };
    let runs = harness::run_sweep_detailed(&configs, par, opts)?;

    if let Some(path) = &cli.trace {
        harness::write_trace(&runs, path)?;
    }
    if let Some(path) = &cli.dump_channel {
        harness::write_channel_dump(&runs, path)?;
    }
    let records: Vec<harness::RunRecord> = runs
        .into_iter()
        .map(|(config, o)| harness::RunRecord {
            config,
            metrics: o.metrics,
        })
        .collect();
    match &cli.out {
        Some(path) => harness::write_csv(&records, path)?,
        None => harness::write_csv_to(&records, io::stdout().lock())?,
    }
    if let Some(path) = &cli.summary {
        harness::write_summary_csv(&harness::aggregate(&records), path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
