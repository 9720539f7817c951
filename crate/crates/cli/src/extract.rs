//! `bonefrag extract`: meshes + break annotations -> two feature CSVs and a
//! diagnostics manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bonefrag::breaks::io::read_break_curves;
use bonefrag::breaks::{build_break_record, BreakCurve, BreakRecord};
use bonefrag::dataset::{
    assemble_break_table, assemble_fragment_table, build_fragment_record, measure_mesh,
    read_fragment_meta_csv, write_features_csv, FragmentRecord,
};
use bonefrag::mesh::ply::load_ply;
use bonefrag::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::{remove_partial_outputs, require, Context};

#[derive(Args)]
pub struct ExtractArgs {
    /// Directory holding one `<fragment_id>.ply` per annotated fragment.
    #[arg(long)]
    mesh_dir: Option<PathBuf>,
    /// Break-curve points CSV (one row per annotated point).
    #[arg(long)]
    points: Option<PathBuf>,
    /// Break metadata CSV (one row per break).
    #[arg(long)]
    break_meta: Option<PathBuf>,
    /// Fragment metadata CSV (`fragment_id,label,trabecula`).
    #[arg(long)]
    fragment_meta: Option<PathBuf>,
    /// Output path prefix for `_breaks.csv`, `_fragments.csv`, `_manifest.txt`.
    #[arg(long)]
    out_prefix: Option<String>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ExtractFileConfig {
    mesh_dir: Option<PathBuf>,
    points_csv: Option<PathBuf>,
    break_meta_csv: Option<PathBuf>,
    fragment_meta_csv: Option<PathBuf>,
    out_prefix: Option<String>,
}

#[derive(Serialize)]
struct ResolvedConfig {
    mesh_dir: PathBuf,
    points_csv: PathBuf,
    break_meta_csv: PathBuf,
    fragment_meta_csv: PathBuf,
    out_prefix: String,
}

pub fn run(ctx: &Context, args: ExtractArgs) -> Result<()> {
    let file: ExtractFileConfig = ctx.load_config()?;
    let cfg = ResolvedConfig {
        mesh_dir: require(args.mesh_dir, file.mesh_dir, "mesh_dir")?,
        points_csv: require(args.points, file.points_csv, "points_csv")?,
        break_meta_csv: require(args.break_meta, file.break_meta_csv, "break_meta_csv")?,
        fragment_meta_csv: require(
            args.fragment_meta,
            file.fragment_meta_csv,
            "fragment_meta_csv",
        )?,
        out_prefix: require(args.out_prefix, file.out_prefix, "out_prefix")?,
    };

    let metas = read_fragment_meta_csv(&cfg.fragment_meta_csv)?;
    let known: BTreeSet<&str> = metas.iter().map(|m| m.fragment_id.as_str()).collect();
    if known.len() != metas.len() {
        return Err(Error::data("fragment metadata lists a fragment twice"));
    }

    let curves = read_break_curves(&cfg.points_csv, &cfg.break_meta_csv)?;
    let mut by_fragment: BTreeMap<&str, Vec<&BreakCurve>> = BTreeMap::new();
    for curve in &curves {
        if !known.contains(curve.fragment_id.as_str()) {
            return Err(Error::data(format!(
                "annotation references unknown fragment '{}'",
                curve.fragment_id
            )));
        }
        by_fragment.entry(&curve.fragment_id).or_default().push(curve);
    }

    // Fail before computing anything if any annotated fragment lacks a mesh,
    // so errors can never leave partial outputs behind.
    for frag in by_fragment.keys() {
        let path = mesh_path(&cfg.mesh_dir, frag);
        if !path.is_file() {
            return Err(Error::data(format!(
                "missing mesh for annotated fragment '{frag}': expected {}",
                path.display()
            )));
        }
    }

    let mut warnings: Vec<String> = Vec::new();
    let mut diagnostics: Vec<String> = Vec::new();
    let mut break_records: Vec<BreakRecord> = Vec::new();
    let mut fragment_records: Vec<FragmentRecord> = Vec::new();
    let mut used_metas = Vec::new();
    for meta in &metas {
        let Some(frag_curves) = by_fragment.get(meta.fragment_id.as_str()) else {
            warnings.push(format!(
                "fragment '{}' has metadata but no annotated breaks; skipped",
                meta.fragment_id
            ));
            continue;
        };
        let mesh = load_ply(&mesh_path(&cfg.mesh_dir, &meta.fragment_id))?;
        let (features, frame, watertight) = measure_mesh(&mesh)?;
        if !watertight {
            warnings.push(format!(
                "fragment '{}': mesh is not watertight; enclosed volume is approximate",
                meta.fragment_id
            ));
        }
        let mut records = Vec::with_capacity(frag_curves.len());
        for curve in frag_curves {
            records.push(build_break_record(curve, &frame.axes[0])?);
        }
        fragment_records.push(build_fragment_record(meta, &features, &records)?);
        diagnostics.push(format!(
            "{}: label={}, breaks={}, vertices={}, faces={}, watertight={}, volume={}, surface_area={}",
            meta.fragment_id,
            meta.label,
            records.len(),
            mesh.vertices().len(),
            mesh.faces().len(),
            if watertight { "yes" } else { "no" },
            features.volume,
            features.surface_area,
        ));
        break_records.extend(records);
        used_metas.push(meta.clone());
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let break_table = assemble_break_table(&break_records, &used_metas)?;
    let fragment_table = assemble_fragment_table(&fragment_records)?;

    let breaks_path = PathBuf::from(format!("{}_breaks.csv", cfg.out_prefix));
    let fragments_path = PathBuf::from(format!("{}_fragments.csv", cfg.out_prefix));
    let manifest_path = PathBuf::from(format!("{}_manifest.txt", cfg.out_prefix));
    if let Some(parent) = breaks_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }

    let mut manifest = String::from("extract manifest\n\nresolved config:\n");
    let config_json = serde_json::to_string_pretty(&cfg)
        .map_err(|e| Error::Config(format!("serializing resolved config: {e}")))?;
    manifest.push_str(&config_json);
    manifest.push_str("\n\nfragments:\n");
    for d in &diagnostics {
        let _ = writeln!(manifest, "  {d}");
    }
    if !warnings.is_empty() {
        manifest.push_str("\nwarnings:\n");
        for w in &warnings {
            let _ = writeln!(manifest, "  {w}");
        }
    }

    let written = (|| -> Result<()> {
        write_features_csv(&break_table, &breaks_path)?;
        write_features_csv(&fragment_table, &fragments_path)?;
        std::fs::write(&manifest_path, &manifest)?;
        Ok(())
    })();
    if written.is_err() {
        remove_partial_outputs(&[&breaks_path, &fragments_path, &manifest_path]);
        return written;
    }
    println!(
        "wrote {} ({} rows), {} ({} rows), {}",
        breaks_path.display(),
        break_table.n_rows(),
        fragments_path.display(),
        fragment_table.n_rows(),
        manifest_path.display()
    );
    Ok(())
}

fn mesh_path(dir: &Path, fragment_id: &str) -> PathBuf {
    dir.join(format!("{fragment_id}.ply"))
}
