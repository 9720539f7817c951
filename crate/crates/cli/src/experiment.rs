//! `bonefrag experiment`: repeated train/test trials for a list of
//! classifiers over one feature table, reported as a CSV.

use std::path::PathBuf;

use bonefrag::dataset::read_features_csv;
use bonefrag::eval::{run_experiment, write_report_csv, ExperimentConfig, Protocol};
use bonefrag::learners::ClassifierSpec;
use bonefrag::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::{require, write_config_sidecar, Context};

#[derive(Args)]
pub struct ExperimentArgs {
    /// Feature table CSV (break- or fragment-level).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// fragment_level | break_level_voted | row_level_unsafe
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    n_trials: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Report CSV path; a `.config.json` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ExperimentFileConfig {
    dataset: Option<PathBuf>,
    protocol: Option<Protocol>,
    n_trials: Option<usize>,
    test_fraction: Option<f64>,
    master_seed: Option<u64>,
    algorithms: Option<Vec<ClassifierSpec>>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedConfig {
    dataset: PathBuf,
    protocol: Protocol,
    n_trials: usize,
    test_fraction: f64,
    master_seed: u64,
    algorithms: Vec<ClassifierSpec>,
    out: PathBuf,
}

fn parse_protocol(text: &str) -> Result<Protocol> {
    serde_json::from_value(serde_json::Value::String(text.to_string()))
        .map_err(|_| Error::Config(format!("unknown protocol '{text}'")))
}

pub fn run(ctx: &Context, args: ExperimentArgs) -> Result<()> {
    let file: ExperimentFileConfig = ctx.load_config()?;
    let protocol = match args.protocol {
        Some(text) => parse_protocol(&text)?,
        None => require(None, file.protocol, "protocol")?,
    };
    let algorithms = file
        .algorithms
        .ok_or_else(|| Error::Config("config file must list 'algorithms'".into()))?;
    if algorithms.is_empty() {
        return Err(Error::Config("'algorithms' must not be empty".into()));
    }
    let cfg = ResolvedConfig {
        dataset: require(args.dataset, file.dataset, "dataset")?,
        protocol,
        n_trials: args.n_trials.or(file.n_trials).unwrap_or(300),
        test_fraction: args.test_fraction.or(file.test_fraction).unwrap_or(0.25),
        master_seed: ctx.resolve_seed(file.master_seed),
        algorithms,
        out: require(args.out, file.out, "out")?,
    };

    let table = read_features_csv(&cfg.dataset)?;
    let experiment = ExperimentConfig {
        protocol: cfg.protocol,
        n_trials: cfg.n_trials,
        test_fraction: cfg.test_fraction,
        master_seed: cfg.master_seed,
    };
    let mut reports = Vec::with_capacity(cfg.algorithms.len());
    for spec in &cfg.algorithms {
        let report = run_experiment(&table, spec, &experiment)?;
        println!(
            "{:<14} mean_accuracy={:.4} std={:.4}",
            report.algorithm, report.mean_accuracy, report.std_accuracy
        );
        reports.push(report);
    }
    write_report_csv(&reports, &cfg.out)?;
    write_config_sidecar(&cfg.out, &cfg)?;
    println!("wrote {}", cfg.out.display());
    Ok(())
}
