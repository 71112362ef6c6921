use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use hmmlab::config::{Command, ExperimentConfig};
use hmmlab::output::write_outputs;
use hmmlab::{exit, CliError};

/// Seeded experiments on hidden Markov models.
///
/// Writes `<command>_<seed>.csv` for every seed and a `summary.json` to the
/// output directory. Exit status: 0 when every check passes, 2 when a check
/// fails, 1 on input errors.
#[derive(Debug, Parser)]
#[command(name = "hmmlab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Seed to run; repeat for several. Replaces the config's seed list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory [default: config `out`, else `hmmlab-out/<command>`].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: config `jobs`, else $HMMLAB_JOBS, else all cores].
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::from(exit::PASS);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(exit::INPUT_ERROR);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::from(exit::PASS),
        Ok(false) => ExitCode::from(exit::ASSERTION_FAILED),
        Err(e) => {
            eprintln!("hmmlab: {e}");
            ExitCode::from(exit::INPUT_ERROR)
        }
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if !cli.seeds.is_empty() {
        config.seeds = cli.seeds;
    }
    if cli.out.is_some() {
        config.out = cli.out;
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    let jobs = match config.jobs {
        Some(j) => j,
        None => env_jobs()?
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    let out = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("hmmlab-out").join(cli.command.name()));
    let summary = hmmlab::run(cli.command, &config, jobs)?;
    write_outputs(&out, &summary)?;
    for c in &summary.checks {
        let margin = c
            .margin
            .map_or(String::new(), |m| format!(" (margin {m:.3e})"));
        println!(
            "{} {}{margin}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name
        );
    }
    println!("wrote {} run(s) to {}", summary.runs.len(), out.display());
    Ok(summary.pass)
}

fn env_jobs() -> Result<Option<usize>, CliError> {
    match std::env::var("HMMLAB_JOBS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(j) if j > 0 => Ok(Some(j)),
            _ => Err(CliError::Input(format!(
                "HMMLAB_JOBS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}
