//! `bonefrag spectral`: embed a feature table with the normalized-Laplacian
//! eigenmap, k-means the embedding, and score the clusters against labels.

use std::path::PathBuf;

use bonefrag::dataset::read_features_csv;
use bonefrag::rng::rng_from_seed;
use bonefrag::spectral::{clustering_accuracy_detailed, export_scatter, spectral_clustering};
use bonefrag::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::{remove_partial_outputs, require, write_config_sidecar, Context};

#[derive(Args)]
pub struct SpectralArgs {
    /// Feature table CSV.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Number of clusters (and embedding dimensions).
    #[arg(long)]
    k: Option<usize>,
    /// Neighbors per node in the similarity graph.
    #[arg(long)]
    k_neighbors: Option<usize>,
    /// Clustering report CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional scatter CSV of the embedding (requires k = 2).
    #[arg(long)]
    scatter: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SpectralFileConfig {
    dataset: Option<PathBuf>,
    k: Option<usize>,
    k_neighbors: Option<usize>,
    master_seed: Option<u64>,
    out: Option<PathBuf>,
    scatter: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedConfig {
    dataset: PathBuf,
    k: usize,
    k_neighbors: usize,
    master_seed: u64,
    out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    scatter: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: SpectralArgs) -> Result<()> {
    let file: SpectralFileConfig = ctx.load_config()?;
    let cfg = ResolvedConfig {
        dataset: require(args.dataset, file.dataset, "dataset")?,
        k: args.k.or(file.k).unwrap_or(2),
        k_neighbors: args.k_neighbors.or(file.k_neighbors).unwrap_or(10),
        master_seed: ctx.resolve_seed(file.master_seed),
        out: require(args.out, file.out, "out")?,
        scatter: args.scatter.or(file.scatter),
    };

    if cfg.scatter.is_some() && cfg.k != 2 {
        return Err(Error::contract(format!(
            "scatter export needs a 2-D embedding, but k = {}",
            cfg.k
        )));
    }

    let table = read_features_csv(&cfg.dataset)?;
    let rows: Vec<&[f64]> = table.rows().iter().map(|r| r.as_slice()).collect();
    let mut rng = rng_from_seed(cfg.master_seed);
    let (pred, embedding) = spectral_clustering(&rows, cfg.k, cfg.k_neighbors, &mut rng)?;
    let (accuracy, per_class) = clustering_accuracy_detailed(&pred, table.labels())?;

    let mut report = String::from("level,k,accuracy");
    for class in per_class.keys() {
        report.push_str(&format!(",acc_class_{class}"));
    }
    report.push_str(",seed\n");
    report.push_str(&format!("{},{},{}", table.level(), cfg.k, accuracy));
    for acc in per_class.values() {
        report.push_str(&format!(",{acc}"));
    }
    report.push_str(&format!(",{}\n", cfg.master_seed));

    let written = (|| -> Result<()> {
        std::fs::write(&cfg.out, &report)?;
        if let Some(scatter) = &cfg.scatter {
            export_scatter(&embedding, table.labels(), scatter)?;
        }
        write_config_sidecar(&cfg.out, &cfg)
    })();
    if written.is_err() {
        let sidecar = crate::sidecar_path(&cfg.out);
        let mut paths: Vec<&std::path::Path> = vec![&cfg.out, &sidecar];
        if let Some(s) = &cfg.scatter {
            paths.push(s);
        }
        remove_partial_outputs(&paths);
        return written;
    }
    if let Some(scatter) = &cfg.scatter {
        println!("wrote {}", scatter.display());
    }
    println!(
        "clustering accuracy = {accuracy:.4} over {} rows; wrote {}",
        table.n_rows(),
        cfg.out.display()
    );
    Ok(())
}
