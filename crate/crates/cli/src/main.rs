//! `bonefrag`: batch runner for feature extraction, classification
//! experiments, spectral clustering, the leakage audit and external-CSV
//! ingestion. Every command is a pure function of its resolved config, so
//! reruns with the same seed produce byte-identical outputs.

mod audit_cmd;
mod experiment;
mod extract;
mod ingest_cmd;
mod spectral_cmd;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bonefrag::{Error, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "bonefrag", version, about = "Bone-fragment break analysis toolkit")]
struct Cli {
    /// Master seed. Omitted: generated from OS entropy and printed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads. Affects speed only, never results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON file providing this command's parameters; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute break- and fragment-level feature tables from meshes plus
    /// break annotations.
    Extract(extract::ExtractArgs),
    /// Run repeated train/test trials for a roster of classifiers.
    Experiment(experiment::ExperimentArgs),
    /// Spectral clustering of a feature table, with optional 2-D scatter.
    Spectral(spectral_cmd::SpectralArgs),
    /// Leakage audit: three evaluation protocols on label-free noise.
    Audit(audit_cmd::AuditArgs),
    /// Clean an external CSV into the feature-table format.
    Ingest(ingest_cmd::IngestArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::contract("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let ctx = Context {
        seed_flag: cli.seed,
        config_path: cli.config,
    };
    match cli.command {
        Command::Extract(args) => extract::run(&ctx, args),
        Command::Experiment(args) => experiment::run(&ctx, args),
        Command::Spectral(args) => spectral_cmd::run(&ctx, args),
        Command::Audit(args) => audit_cmd::run(&ctx, args),
        Command::Ingest(args) => ingest_cmd::run(&ctx, args),
    }
}

/// Global flags shared by all commands.
pub struct Context {
    seed_flag: Option<u64>,
    config_path: Option<PathBuf>,
}

impl Context {
    /// Parse the `--config` file into the command's partial-config type, or
    /// give its default when no file was passed.
    pub fn load_config<T: DeserializeOwned + Default>(&self) -> Result<T> {
        match &self.config_path {
            None => Ok(T::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            }
        }
    }

    /// Seed precedence: `--seed` flag, then config file, then fresh entropy.
    /// The resolved value is always printed so any run can be replayed.
    pub fn resolve_seed(&self, from_config: Option<u64>) -> u64 {
        let seed = self
            .seed_flag
            .or(from_config)
            .unwrap_or_else(rand::random);
        println!("master_seed = {seed}");
        seed
    }
}

/// Both of `flag`/`file` unset is a validation error naming the parameter.
pub fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::Config(format!("missing required parameter '{name}'")))
}

/// Serialize the resolved config next to an output file (`<out>.config.json`)
/// so the artifact records exactly how it was produced.
pub fn write_config_sidecar<C: serde::Serialize>(out: &Path, config: &C) -> Result<()> {
    let text = serde_json::to_string_pretty(config)
        .map_err(|e| Error::Config(format!("serializing resolved config: {e}")))?;
    let path = sidecar_path(out);
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    out.with_file_name(name)
}

/// Remove files created before a failure so no partial outputs survive.
pub fn remove_partial_outputs(paths: &[&Path]) {
    for p in paths {
        let _ = std::fs::remove_file(p);
    }
}
