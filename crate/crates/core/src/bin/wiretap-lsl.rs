use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use wiretap_core::expcli::{
    figure_preset, parse_config_str, run_sweep, ExperimentConfig, RunOptions,
};
use wiretap_core::Error;

#[derive(Parser)]
#[command(
    name = "wiretap-lsl",
    version,
    about = "Large-system secrecy rates of correlated MIMO wiretap channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write the results as CSV.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON configuration file. Keys override the preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["fig2", "fig3", "fig4", "fig5"])]
    preset: Option<String>,
    /// Output CSV path; defaults to `output_path` from the config, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo realizations per grid point.
    #[arg(long)]
    mc: Option<usize>,
    /// Skip the Monte Carlo columns.
    #[arg(long)]
    no_mc: bool,
    /// Omit the timestamp comment line so reruns are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let base = args.preset.as_deref().map(figure_preset).transpose()?;
    let mut config = match (&args.config, base) {
        (Some(path), base) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            parse_config_str(&text, base.as_ref())?
        }
        (None, Some(base)) => base,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "one of --config or --preset is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.mc {
        config.mc_realizations = n;
    }
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs) -> ExitCode {
    let config = match load_config(&args) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("config error: {err}");
            return ExitCode::from(1);
        }
    };
    let result = run_sweep(
        &config,
        RunOptions {
            skip_mc: args.no_mc,
        },
    );
    for row in &result.rows {
        if let Some(err) = &row.error {
            eprintln!(
                "{} = {} [{}]: {err}",
                result.sweep, row.sweep_value, row.strategy
            );
        }
    }
    let timestamp = (!args.no_timestamp).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let out_path = args
        .out
        .or_else(|| config.output_path.clone().map(PathBuf::from));
    let written = match &out_path {
        Some(path) => File::create(path)
            .map_err(Error::from)
            .and_then(|f| result.write_csv(BufWriter::new(f), timestamp)),
        None => result.write_csv(io::stdout().lock(), timestamp),
    };
    if let Err(err) = written {
        eprintln!("failed to write output: {err}");
        return ExitCode::from(2);
    }
    let _ = io::stdout().flush();
    if result.all_failed() {
        eprintln!("every grid point failed");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
    }
}
