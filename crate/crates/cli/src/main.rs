use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use jnet_cli::{commands, CliError, Output, Overrides, RunConfig};

/// Spectral radius and essential spectral radius of open Jackson networks.
///
/// Exit codes: 1 config error, 2 invalid network, 3 numeric failure or
/// failed check.
#[derive(Debug, Parser)]
#[command(name = "jnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report.json and any CSV or artifact files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of text.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Print the CSV table (spectral, simulate) instead of text.
    #[arg(long, global = true)]
    csv: bool,
    /// Seed for random loops and simulation; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Eigen-solver residual tolerance; overrides `spectral.tol`.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Traffic solution, classification and closed-form radii.
    Analyze,
    /// Truncated-generator eigenvalues over the configured (k, N) grid.
    Spectral,
    /// Minimum action over closed loops.
    Pathopt,
    /// Dyadic cluster of a demo path, its invariants and the cluster count.
    ClusterDemo,
    /// Monte-Carlo survival decay.
    Simulate,
    /// All estimates side by side with tolerance checks.
    Crosscheck,
}

fn write_outputs(dir: &Path, out: &Output) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let report = serde_json::to_string_pretty(&out.json)? + "\n";
    std::fs::write(dir.join("report.json"), report)?;
    if let Some((name, csv)) = &out.csv {
        std::fs::write(dir.join(name), csv)?;
    }
    for (name, body) in &out.files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Config("--tol must lie in (0, 1)".into()).into());
        }
    }
    let ov = Overrides {
        seed: cli.seed,
        tol: cli.tol,
    };
    let out = match cli.command {
        Command::Analyze => commands::analyze(&cfg, ov),
        Command::Spectral => commands::spectral(&cfg, ov),
        Command::Pathopt => commands::pathopt(&cfg, ov),
        Command::ClusterDemo => commands::cluster_demo(&cfg, ov),
        Command::Simulate => commands::simulate(&cfg, ov),
        Command::Crosscheck => commands::crosscheck(&cfg, ov),
    }?;

    if cli.json {
        println!("{}", serde_json::to_string_pretty(&out.json)?);
    } else if cli.csv {
        match &out.csv {
            Some((_, csv)) => print!("{csv}"),
            None => return Err(CliError::Config("this command has no CSV output".into()).into()),
        }
    } else {
        print!("{}", out.text);
    }
    if let Some(dir) = &cli.out {
        write_outputs(dir, &out).map_err(|e| CliError::Config(format!("writing outputs: {e:#}")))?;
    }
    match out.failure {
        Some(msg) => Err(CliError::Disagreement(msg).into()),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
