//! `bonefrag audit`: the three-protocol leakage audit over pure-noise data.

use std::path::PathBuf;

use bonefrag::learners::ClassifierSpec;
use bonefrag::synth::{
    default_audit_algorithms, run_leakage_audit, write_audit_csv, RandomDatasetConfig,
};
use bonefrag::Result;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::{require, write_config_sidecar, Context};

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long)]
    n_trials: Option<usize>,
    /// Fraction of rows/fragments held out per trial.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Audit report CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AuditFileConfig {
    n_trials: Option<usize>,
    test_fraction: Option<f64>,
    master_seed: Option<u64>,
    n_fragments: Option<usize>,
    breaks_per_fragment: Option<usize>,
    n_fragment_features: Option<usize>,
    n_break_features: Option<usize>,
    algorithms: Option<Vec<ClassifierSpec>>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedConfig {
    n_trials: usize,
    test_fraction: f64,
    master_seed: u64,
    dataset: RandomDatasetConfig,
    algorithms: Vec<ClassifierSpec>,
    out: PathBuf,
}

pub fn run(ctx: &Context, args: AuditArgs) -> Result<()> {
    let file: AuditFileConfig = ctx.load_config()?;
    let master_seed = ctx.resolve_seed(file.master_seed);
    let defaults = RandomDatasetConfig::default();
    let dataset = RandomDatasetConfig {
        n_fragments: file.n_fragments.unwrap_or(defaults.n_fragments),
        breaks_per_fragment: file
            .breaks_per_fragment
            .unwrap_or(defaults.breaks_per_fragment),
        n_fragment_features: file
            .n_fragment_features
            .unwrap_or(defaults.n_fragment_features),
        n_break_features: file.n_break_features.unwrap_or(defaults.n_break_features),
        seed: master_seed,
    };
    let cfg = ResolvedConfig {
        n_trials: args.n_trials.or(file.n_trials).unwrap_or(100),
        test_fraction: args.test_fraction.or(file.test_fraction).unwrap_or(0.25),
        master_seed,
        dataset,
        algorithms: file.algorithms.unwrap_or_else(default_audit_algorithms),
        out: require(args.out, file.out, "out")?,
    };

    let report = run_leakage_audit(&cfg.dataset, cfg.n_trials, cfg.test_fraction, &cfg.algorithms)?;
    print!("{report}");
    write_audit_csv(&report, &cfg.out)?;
    write_config_sidecar(&cfg.out, &cfg)?;
    println!("wrote {}", cfg.out.display());
    Ok(())
}
