//! `traffic`: runs one experiment family from a JSON configuration and writes
//! plot-ready CSV files plus `manifest.json` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use multilane::config::{parse_with_overrides, ConfigDocument};
use multilane::dsmc::Execution;
use multilane::error::ConfigError;
use multilane::experiments::{execute, Check, Timing};

const THREADS_VAR: &str = "TRAFFIC_THREADS";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(
        "configuration declares experiment.kind = `{declared}` but `{requested}` was requested"
    )]
    KindMismatch { declared: String, requested: String },
    #[error("{THREADS_VAR} must be a non-negative integer, got `{0}`")]
    Threads(String),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Run(#[from] multilane::Error),
    #[error("{0} internal check(s) failed")]
    ChecksFailed(usize),
}

#[derive(Debug, Parser)]
#[command(
    name = "traffic",
    version,
    about = "Two-lane controlled traffic experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Space-homogeneous moment trajectories.
    Homogeneous(Args),
    /// Fundamental diagrams from the long-time homogeneous state.
    Diagram(Args),
    /// Particle simulation of the inhomogeneous kinetic system.
    Dsmc(Args),
    /// Finite-volume solution of a hydrodynamic limit.
    Hydro(Args),
    /// Kinetic-vs-hydrodynamic L1 convergence table.
    Compare(Args),
}

#[derive(Debug, Clone, clap::Args)]
struct Args {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides experiment.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path override such as `model.control.p=0.1`; repeatable.
    #[arg(long = "override", value_name = "KEY=VAL")]
    overrides: Vec<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Homogeneous(_) => "homogeneous",
            Command::Diagram(_) => "diagram",
            Command::Dsmc(_) => "dsmc",
            Command::Hydro(_) => "hydro",
            Command::Compare(_) => "compare",
        }
    }

    fn args(&self) -> &Args {
        match self {
            Command::Homogeneous(a)
            | Command::Diagram(a)
            | Command::Dsmc(a)
            | Command::Hydro(a)
            | Command::Compare(a) => a,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    config_hash: String,
    seed: u64,
    threads: usize,
    outputs: Vec<String>,
    steps: u64,
    timings: Vec<Timing>,
    checks: Vec<Check>,
}

/// Git-style content hash: SHA-256 of `blob <len>\0<content>`.
fn content_hash(content: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", content.len()).as_bytes());
    hasher.update(content.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Worker cap from the environment; `None` leaves rayon's default.
fn thread_setting() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(raw) => raw
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Threads(raw)),
    }
}

fn resolve(command: &Command) -> Result<ConfigDocument, CliError> {
    let args = command.args();
    let text = fs::read_to_string(&args.config).map_err(|source| CliError::Read {
        path: args.config.display().to_string(),
        source,
    })?;
    let mut overrides = vec![format!("experiment.kind={}", command.name())];
    if let Some(seed) = args.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    overrides.extend(args.overrides.iter().cloned());
    let declared: Option<String> = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.pointer("/experiment/kind")?.as_str().map(str::to_string));
    if let Some(declared) = declared.filter(|d| d != command.name()) {
        return Err(CliError::KindMismatch {
            declared,
            requested: command.name().to_string(),
        });
    }
    Ok(parse_with_overrides(&text, &overrides)?)
}

fn relative(out: &Path, path: &Path) -> String {
    path.strip_prefix(out).unwrap_or(path).display().to_string()
}

fn run(command: &Command) -> Result<(), CliError> {
    let threads = thread_setting()?;
    let doc = resolve(command)?;
    let out = &command.args().out;
    fs::create_dir_all(out).map_err(|source| CliError::Write {
        path: out.display().to_string(),
        source,
    })?;
    let exec = threads.map_or(Execution::Parallel, Execution::from_threads);
    let report = match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| execute(&doc, out, exec))?,
        _ => execute(&doc, out, exec)?,
    };
    let config = doc.to_json();
    let manifest = RunManifest {
        command: command.name().to_string(),
        config_hash: content_hash(&config),
        config: serde_json::from_str(&config).expect("config JSON round-trips"),
        seed: doc.experiment.seed,
        threads: threads.unwrap_or_else(rayon::current_num_threads),
        outputs: report.outputs.iter().map(|p| relative(out, p)).collect(),
        steps: report.steps,
        timings: report.timings.clone(),
        checks: report.checks.clone(),
    };
    let path = out.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })?;
    for check in &report.checks {
        let status = if check.passed { "ok" } else { "FAILED" };
        eprintln!("check {}: {status} ({})", check.name, check.detail);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("traffic {}: {e}", cli.command.name());
            ExitCode::FAILURE
        }
    }
}
