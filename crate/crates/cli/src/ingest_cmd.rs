//! `bonefrag ingest`: clean an external tabular CSV into the feature-table
//! format, writing the table plus a plain-text cleaning report.

use std::path::PathBuf;

use bonefrag::dataset::ingest::{ingest_tabular_csv, IngestSchema};
use bonefrag::dataset::write_features_csv;
use bonefrag::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::{remove_partial_outputs, require, Context};

#[derive(Args)]
pub struct IngestArgs {
    /// External CSV to clean.
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON schema declaring each column's role.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Cleaned feature-table CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cleaning-report text path (default: `<out>.report.txt`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct IngestFileConfig {
    input: Option<PathBuf>,
    schema: Option<PathBuf>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedConfig {
    input: PathBuf,
    schema: PathBuf,
    out: PathBuf,
    report: PathBuf,
}

pub fn run(ctx: &Context, args: IngestArgs) -> Result<()> {
    let file: IngestFileConfig = ctx.load_config()?;
    let input = require(args.input, file.input, "input")?;
    let schema_path = require(args.schema, file.schema, "schema")?;
    let out = require(args.out, file.out, "out")?;
    let report_path = args.report.or(file.report).unwrap_or_else(|| {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".report.txt");
        out.with_file_name(name)
    });
    let cfg = ResolvedConfig {
        input,
        schema: schema_path,
        out,
        report: report_path,
    };

    let schema_text = std::fs::read_to_string(&cfg.schema)?;
    let schema = IngestSchema::from_json(&schema_text)?;
    let (table, report) = ingest_tabular_csv(&cfg.input, &schema)?;

    let config_json = serde_json::to_string_pretty(&cfg)
        .map_err(|e| Error::Config(format!("serializing resolved config: {e}")))?;
    let report_text = format!("resolved config:\n{config_json}\n\n{report}");

    let written = (|| -> Result<()> {
        write_features_csv(&table, &cfg.out)?;
        std::fs::write(&cfg.report, &report_text)?;
        Ok(())
    })();
    if written.is_err() {
        remove_partial_outputs(&[&cfg.out, &cfg.report]);
        return written;
    }
    print!("{report}");
    println!(
        "wrote {} ({} rows x {} features) and {}",
        cfg.out.display(),
        table.n_rows(),
        table.n_features(),
        cfg.report.display()
    );
    Ok(())
}
