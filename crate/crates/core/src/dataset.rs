//! Fragment-level feature records, assembled feature tables and their CSV
//! round-trip formats.

pub mod ingest;

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::breaks::{summary_stats, BreakRecord, InteriorEdge, BREAK_COLUMNS, SUMMARY_STAT_NAMES};
use crate::error::{Error, Result};
use crate::mesh::{PrincipalFrame, TriangleMesh};

/// Identity and labelling for one fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentMeta {
    pub fragment_id: String,
    pub label: String,
    /// Whether trabecular bone is visible on the fragment.
    pub trabecula: bool,
}

/// Whole-mesh measurements feeding the fragment feature row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshFeatures {
    pub volume: f64,
    pub surface_area: f64,
    /// Oriented bounding box extents, descending.
    pub bbox_dims: [f64; 3],
}

/// Measure a mesh once, returning the features, the principal frame (needed
/// for per-break arc angles) and the watertightness flag for diagnostics.
pub fn measure_mesh(mesh: &TriangleMesh) -> Result<(MeshFeatures, PrincipalFrame, bool)> {
    let frame = mesh.principal_frame()?;
    let est = mesh.enclosed_volume();
    let features = MeshFeatures {
        volume: est.volume,
        surface_area: mesh.surface_area(),
        bbox_dims: mesh.bounding_box_dims(&frame),
    };
    Ok((features, frame, est.watertight))
}

pub const FRAGMENT_COLUMN_COUNT: usize = 66;

/// The frozen fragment-level feature schema.
///
/// Layout: counts and whole-mesh measurements, then the 6x6 grid of
/// across-break summary stats of per-break angle stats (`angle_<outer>_of_<inner>`
/// = `<outer>` over breaks of each break's angle `<inner>`), then shape-flag
/// tallies, then across-break stats of chord length, arc length and arc angle.
pub fn fragment_columns() -> Vec<String> {
    let mut cols: Vec<String> = vec![
        "num_breaks".into(),
        "trabecula".into(),
        "volume".into(),
        "surface_area".into(),
        "bbox_length".into(),
        "bbox_width".into(),
        "bbox_depth".into(),
    ];
    for outer in SUMMARY_STAT_NAMES {
        for inner in SUMMARY_STAT_NAMES {
            cols.push(format!("angle_{outer}_of_{inner}"));
        }
    }
    cols.extend(
        [
            "n_interior_edge_break",
            "n_interior_edge_endosteal",
            "n_interrupted",
            "n_ridge_notch",
            "n_interior_notch",
        ]
        .map(String::from),
    );
    for prefix in ["chord", "arc_length", "arc_angle"] {
        for stat in SUMMARY_STAT_NAMES {
            cols.push(format!("{prefix}_{stat}"));
        }
    }
    debug_assert_eq!(cols.len(), FRAGMENT_COLUMN_COUNT);
    cols
}

/// One fragment's assembled feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentRecord {
    pub fragment_id: String,
    pub label: String,
    pub values: Vec<f64>,
}

/// Aggregate a fragment's breaks and mesh measurements into its feature row.
///
/// Angle meta-stats are stats *of per-break stats*: raw angles from different
/// breaks are never pooled, so every break counts once regardless of how many
/// angle measurements it carries.
pub fn build_fragment_record(
    meta: &FragmentMeta,
    mesh: &MeshFeatures,
    breaks: &[BreakRecord],
) -> Result<FragmentRecord> {
    if breaks.is_empty() {
        return Err(Error::data(format!(
            "fragment {}: no breaks to aggregate",
            meta.fragment_id
        )));
    }
    for b in breaks {
        if b.fragment_id != meta.fragment_id {
            return Err(Error::contract(format!(
                "fragment {}: break {}/{} belongs to a different fragment",
                meta.fragment_id, b.fragment_id, b.break_id
            )));
        }
    }

    let mut values = Vec::with_capacity(FRAGMENT_COLUMN_COUNT);
    values.push(breaks.len() as f64);
    values.push(meta.trabecula as u8 as f64);
    values.push(mesh.volume);
    values.push(mesh.surface_area);
    values.extend_from_slice(&mesh.bbox_dims);

    // Across-break stats of each per-break angle stat.
    let per_inner: Vec<[f64; 6]> = {
        let mut outer = Vec::with_capacity(6);
        for inner_idx in 0..6 {
            let series: Vec<f64> = breaks
                .iter()
                .map(|b| b.angle_stats.as_array()[inner_idx])
                .collect();
            outer.push(summary_stats(&series)?.as_array());
        }
        outer
    };
    for outer_idx in 0..6 {
        for item in per_inner.iter().take(6) {
            values.push(item[outer_idx]);
        }
    }

    let n_break_edge = breaks
        .iter()
        .filter(|b| b.interior_edge == InteriorEdge::Break)
        .count();
    values.push(n_break_edge as f64);
    values.push((breaks.len() - n_break_edge) as f64);
    values.push(breaks.iter().filter(|b| b.interrupted).count() as f64);
    values.push(breaks.iter().filter(|b| b.ridge_notch).count() as f64);
    values.push(breaks.iter().filter(|b| b.interior_notch).count() as f64);

    let chords: Vec<f64> = breaks.iter().map(|b| b.chord_length).collect();
    let arcs: Vec<f64> = breaks.iter().map(|b| b.arc_length).collect();
    let arc_angles: Vec<f64> = breaks.iter().map(|b| b.arc_angle_deg).collect();
    for series in [chords, arcs, arc_angles] {
        values.extend_from_slice(&summary_stats(&series)?.as_array());
    }

    debug_assert_eq!(values.len(), FRAGMENT_COLUMN_COUNT);
    Ok(FragmentRecord {
        fragment_id: meta.fragment_id.clone(),
        label: meta.label.clone(),
        values,
    })
}

/// Whether a table's rows are whole fragments or individual breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableLevel {
    Fragment,
    Break,
}

impl std::fmt::Display for TableLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TableLevel::Fragment => "fragment",
            TableLevel::Break => "break",
        })
    }
}

/// A numeric feature matrix with row labels and leakage-relevant group ids.
///
/// `group_ids` tie every row to the physical fragment it came from; splits
/// must respect them. Fragment-level tables have one row per group.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    level: TableLevel,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<String>,
    group_ids: Vec<String>,
    row_ids: Vec<String>,
}

impl FeatureTable {
    pub fn new(
        level: TableLevel,
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<String>,
        group_ids: Vec<String>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::contract("feature table needs at least one column"));
        }
        if rows.is_empty() {
            return Err(Error::contract("feature table needs at least one row"));
        }
        let mut seen_cols = HashSet::new();
        for c in &columns {
            if !seen_cols.insert(c.as_str()) {
                return Err(Error::contract(format!("duplicate column name '{c}'")));
            }
        }
        if labels.len() != rows.len() || group_ids.len() != rows.len() || row_ids.len() != rows.len()
        {
            return Err(Error::contract(
                "rows, labels, group_ids and row_ids must have equal lengths",
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::contract(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "row {i} ({}): non-finite value in column '{}'",
                    row_ids[i], columns[j]
                )));
            }
        }
        let mut seen_rows = HashSet::new();
        for id in &row_ids {
            if !seen_rows.insert(id.as_str()) {
                return Err(Error::contract(format!("duplicate row id '{id}'")));
            }
        }
        if level == TableLevel::Fragment {
            let mut seen = HashSet::new();
            for g in &group_ids {
                if !seen.insert(g.as_str()) {
                    return Err(Error::contract(format!(
                        "fragment-level table has two rows in group '{g}'"
                    )));
                }
            }
        }
        Ok(FeatureTable {
            level,
            columns,
            rows,
            labels,
            group_ids,
            row_ids,
        })
    }

    pub fn level(&self) -> TableLevel {
        self.level
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn group_ids(&self) -> &[String] {
        &self.group_ids
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Distinct labels, sorted. Fixed class ordering for everything downstream.
    pub fn class_list(&self) -> Vec<String> {
        let mut classes: Vec<String> = self
            .labels
            .iter()
            .cloned()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        classes.sort();
        classes
    }

    /// Borrow the selected rows and labels, e.g. a training partition.
    pub fn gather(&self, idx: &[usize]) -> (Vec<&[f64]>, Vec<&str>) {
        let rows = idx.iter().map(|&i| self.rows[i].as_slice()).collect();
        let labels = idx.iter().map(|&i| self.labels[i].as_str()).collect();
        (rows, labels)
    }

    /// Keep only the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureTable> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::contract(format!("no column named '{n}'")))
            })
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect();
        FeatureTable::new(
            self.level,
            names.to_vec(),
            rows,
            self.labels.clone(),
            self.group_ids.clone(),
            self.row_ids.clone(),
        )
    }
}

/// Build the break-level table: one row per break, grouped by fragment.
pub fn assemble_break_table(
    records: &[BreakRecord],
    metas: &[FragmentMeta],
) -> Result<FeatureTable> {
    if records.is_empty() {
        return Err(Error::contract("no break records to assemble"));
    }
    let label_by_fragment: BTreeMap<&str, &str> = metas
        .iter()
        .map(|m| (m.fragment_id.as_str(), m.label.as_str()))
        .collect();
    let mut rows = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut group_ids = Vec::with_capacity(records.len());
    let mut row_ids = Vec::with_capacity(records.len());
    for r in records {
        let label = label_by_fragment.get(r.fragment_id.as_str()).ok_or_else(|| {
            Error::data(format!(
                "break {}/{}: no metadata for fragment {}",
                r.fragment_id, r.break_id, r.fragment_id
            ))
        })?;
        rows.push(r.to_row().to_vec());
        labels.push(label.to_string());
        group_ids.push(r.fragment_id.clone());
        row_ids.push(format!("{}/{}", r.fragment_id, r.break_id));
    }
    FeatureTable::new(
        TableLevel::Break,
        BREAK_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
        labels,
        group_ids,
        row_ids,
    )
}

/// Build the fragment-level table: one row per fragment.
pub fn assemble_fragment_table(records: &[FragmentRecord]) -> Result<FeatureTable> {
    if records.is_empty() {
        return Err(Error::contract("no fragment records to assemble"));
    }
    let mut rows = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut ids = Vec::with_capacity(records.len());
    for r in records {
        if r.values.len() != FRAGMENT_COLUMN_COUNT {
            return Err(Error::contract(format!(
                "fragment {}: expected {FRAGMENT_COLUMN_COUNT} values, got {}",
                r.fragment_id,
                r.values.len()
            )));
        }
        rows.push(r.values.clone());
        labels.push(r.label.clone());
        ids.push(r.fragment_id.clone());
    }
    FeatureTable::new(
        TableLevel::Fragment,
        fragment_columns(),
        rows,
        labels,
        ids.clone(),
        ids,
    )
}

/// Write a feature table as CSV. Values print in shortest round-trip form, so
/// read-back is bit-exact.
pub fn write_features_csv(table: &FeatureTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_features_csv_to(table, file)
}

pub fn write_features_csv_to<W: Write>(table: &FeatureTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = match table.level {
        TableLevel::Fragment => vec!["fragment_id", "label"],
        TableLevel::Break => vec!["fragment_id", "break_id", "label"],
    };
    header.extend(table.columns.iter().map(|s| s.as_str()));
    w.write_record(&header)?;

    for i in 0..table.n_rows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        match table.level {
            TableLevel::Fragment => rec.push(table.row_ids[i].clone()),
            TableLevel::Break => {
                let group = &table.group_ids[i];
                let break_id = table.row_ids[i]
                    .strip_prefix(&format!("{group}/"))
                    .unwrap_or(&table.row_ids[i]);
                rec.push(group.clone());
                rec.push(break_id.to_string());
            }
        }
        rec.push(table.labels[i].clone());
        rec.extend(table.rows[i].iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<FeatureTable> {
    let file = std::fs::File::open(path)?;
    read_features_csv_from(file)
}

pub fn read_features_csv_from<R: Read>(input: R) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let fields: Vec<&str> = header.iter().collect();

    let (level, label_pos) = match (fields.first(), fields.get(1), fields.get(2)) {
        (Some(&"fragment_id"), Some(&"break_id"), Some(&"label")) => (TableLevel::Break, 2),
        (Some(&"fragment_id"), Some(&"label"), _) => (TableLevel::Fragment, 1),
        _ => {
            return Err(Error::data(
                "feature CSV must start with fragment_id[,break_id],label",
            ))
        }
    };
    let columns: Vec<String> = fields[label_pos + 1..].iter().map(|s| s.to_string()).collect();
    if columns.is_empty() {
        return Err(Error::data("feature CSV has no feature columns"));
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut group_ids = Vec::new();
    let mut row_ids = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != fields.len() {
            return Err(Error::data(format!(
                "feature CSV row {i}: expected {} fields, got {}",
                fields.len(),
                rec.len()
            )));
        }
        let frag = rec[0].to_string();
        let (row_id, group) = match level {
            TableLevel::Fragment => (frag.clone(), frag.clone()),
            TableLevel::Break => (format!("{frag}/{}", &rec[1]), frag.clone()),
        };
        labels.push(rec[label_pos].to_string());
        let mut row = Vec::with_capacity(columns.len());
        for (j, field) in rec.iter().enumerate().skip(label_pos + 1) {
            let v: f64 = field.parse().map_err(|_| {
                Error::data(format!(
                    "feature CSV row {i}, column '{}': cannot parse '{field}'",
                    fields[j]
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
        group_ids.push(group);
        row_ids.push(row_id);
    }
    FeatureTable::new(level, columns, rows, labels, group_ids, row_ids)
}

/// Read the per-fragment metadata CSV: `fragment_id,label,trabecula`.
pub fn read_fragment_meta_csv(path: &Path) -> Result<Vec<FragmentMeta>> {
    let file = std::fs::File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers()?.clone();
    let want = ["fragment_id", "label", "trabecula"];
    let got: Vec<&str> = header.iter().collect();
    if got != want {
        return Err(Error::data(format!(
            "fragment metadata CSV header must be {want:?}, got {got:?}"
        )));
    }
    let mut metas = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::data(format!(
                "fragment metadata CSV row {i}: duplicate fragment_id '{id}'"
            )));
        }
        let trabecula = match rec[2].to_ascii_lowercase().as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::data(format!(
                    "fragment metadata CSV row {i}: trabecula must be true or false, got '{other}'"
                )))
            }
        };
        metas.push(FragmentMeta {
            fragment_id: id,
            label: rec[1].to_string(),
            trabecula,
        });
    }
    if metas.is_empty() {
        return Err(Error::data("fragment metadata CSV has no rows"));
    }
    Ok(metas)
}
