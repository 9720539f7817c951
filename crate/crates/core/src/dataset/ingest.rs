//! Schema-driven ingestion of external tabular CSVs: role declarations per
//! column, boolean/categorical encoding, corrupted-column exclusion, and a
//! plain-text cleaning report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, TableLevel};
use crate::error::{Error, Result};

/// What to do with one declared CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    /// Parse as f64 and keep. Unparseable non-empty values are hard errors.
    Numeric,
    /// Accept exactly `present`/`absent` (case-insensitive) as 1/0. Any other
    /// non-empty token marks the whole column corrupted.
    Boolean,
    /// One-hot encode with the first (sorted) level dropped, so two levels
    /// collapse to a single indicator.
    Categorical,
    /// The class label. Exactly one column must carry this role.
    Label,
    /// Grouping id (e.g. parent fragment). At most one column.
    Group,
    /// Discard (redundant or unwanted).
    Drop,
}

/// Declares how to read one external CSV. Every header column must appear in
/// `columns`; undeclared columns are an error, not silently dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSchema {
    pub level: TableLevel,
    pub columns: BTreeMap<String, ColumnRole>,
    /// Corrupted boolean columns listed here are kept by reinterpreting them
    /// as categorical instead of being excluded.
    #[serde(default)]
    pub force_retain: Vec<String>,
}

impl IngestSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: IngestSchema = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("ingest schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let labels = self.count_role(ColumnRole::Label);
        if labels != 1 {
            return Err(Error::contract(format!(
                "ingest schema must declare exactly one label column, found {labels}"
            )));
        }
        let groups = self.count_role(ColumnRole::Group);
        if groups > 1 {
            return Err(Error::contract(format!(
                "ingest schema may declare at most one group column, found {groups}"
            )));
        }
        if self.level == TableLevel::Break && groups == 0 {
            return Err(Error::contract(
                "break-level ingest requires a group column naming the parent fragment",
            ));
        }
        for name in &self.force_retain {
            match self.columns.get(name) {
                Some(ColumnRole::Boolean) => {}
                Some(_) => {
                    return Err(Error::contract(format!(
                        "force_retain only applies to boolean columns: '{name}'"
                    )))
                }
                None => {
                    return Err(Error::contract(format!(
                        "force_retain names undeclared column '{name}'"
                    )))
                }
            }
        }
        Ok(())
    }

    fn count_role(&self, role: ColumnRole) -> usize {
        self.columns.values().filter(|&&r| r == role).count()
    }

    fn force_retained(&self, name: &str) -> bool {
        self.force_retain.iter().any(|n| n == name)
    }
}

/// Per-column outcome plus the row-level rejections, printable as the
/// plain-text cleaning report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleaningReport {
    /// (column name, human-readable disposition), in header order.
    pub columns: Vec<(String, String)>,
    /// 1-based data-row numbers rejected for missing (empty) fields.
    pub rejected_rows: Vec<usize>,
    pub input_rows: usize,
    pub kept_rows: usize,
}

impl fmt::Display for CleaningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "cleaning report: kept {} of {} rows",
            self.kept_rows, self.input_rows
        )?;
        for (name, disposition) in &self.columns {
            writeln!(f, "  {name}: {disposition}")?;
        }
        if !self.rejected_rows.is_empty() {
            let listed: Vec<String> = self
                .rejected_rows
                .iter()
                .take(20)
                .map(|r| r.to_string())
                .collect();
            let suffix = if self.rejected_rows.len() > 20 { ", ..." } else { "" };
            writeln!(
                f,
                "  rejected rows (missing fields): {}{suffix}",
                listed.join(", ")
            )?;
        }
        Ok(())
    }
}

fn boolean_value(token: &str) -> Option<f64> {
    if token.eq_ignore_ascii_case("present") {
        Some(1.0)
    } else if token.eq_ignore_ascii_case("absent") {
        Some(0.0)
    } else {
        None
    }
}

enum ColumnPlan {
    Numeric,
    Boolean,
    /// Sorted kept levels (first sorted level dropped); each becomes one
    /// indicator column.
    Categorical { levels: Vec<String> },
    Excluded,
}

pub fn ingest_tabular_csv(path: &Path, schema: &IngestSchema) -> Result<(FeatureTable, CleaningReport)> {
    let file = std::fs::File::open(path)?;
    ingest_tabular_csv_from(file, schema)
}

pub fn ingest_tabular_csv_from<R: Read>(
    reader: R,
    schema: &IngestSchema,
) -> Result<(FeatureTable, CleaningReport)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(Error::from)?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();

    let mut seen = BTreeSet::new();
    for name in &header {
        if !seen.insert(name.clone()) {
            return Err(Error::Ingest {
                row: 0,
                column: name.clone(),
                message: "duplicate column in header".into(),
            });
        }
        if !schema.columns.contains_key(name) {
            return Err(Error::Ingest {
                row: 0,
                column: name.clone(),
                message: "column not declared in ingest schema".into(),
            });
        }
    }
    for name in schema.columns.keys() {
        if !seen.contains(name) {
            return Err(Error::Ingest {
                row: 0,
                column: name.clone(),
                message: "declared column missing from header".into(),
            });
        }
    }
    let roles: Vec<ColumnRole> = header.iter().map(|n| schema.columns[n]).collect();

    let mut records: Vec<Vec<String>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        if rec.len() != header.len() {
            return Err(Error::Ingest {
                row: i + 1,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        records.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    let input_rows = records.len();
    if input_rows == 0 {
        return Err(Error::data("ingest: no data rows"));
    }

    // Rows with any empty field in a non-dropped column are rejected, not
    // imputed. Everything after this sees only surviving rows.
    let mut rejected_rows = Vec::new();
    let mut kept: Vec<(usize, &Vec<String>)> = Vec::new();
    'rows: for (i, rec) in records.iter().enumerate() {
        for (c, value) in rec.iter().enumerate() {
            if roles[c] != ColumnRole::Drop && value.is_empty() {
                rejected_rows.push(i + 1);
                continue 'rows;
            }
        }
        kept.push((i + 1, rec));
    }
    if kept.is_empty() {
        return Err(Error::data("ingest: every row was rejected for missing fields"));
    }

    // Decide each column's plan and disposition from the surviving rows.
    let mut plans: Vec<ColumnPlan> = Vec::with_capacity(header.len());
    let mut dispositions: Vec<(String, String)> = Vec::with_capacity(header.len());
    for (c, name) in header.iter().enumerate() {
        let (plan, note) = match roles[c] {
            ColumnRole::Numeric => {
                for (row_no, rec) in &kept {
                    let v: f64 = rec[c].parse().map_err(|_| Error::Ingest {
                        row: *row_no,
                        column: name.clone(),
                        message: format!("unparseable numeric value '{}'", rec[c]),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Ingest {
                            row: *row_no,
                            column: name.clone(),
                            message: format!("non-finite numeric value '{}'", rec[c]),
                        });
                    }
                }
                (ColumnPlan::Numeric, "kept (numeric)".to_string())
            }
            ColumnRole::Boolean => {
                let bad: BTreeSet<&str> = kept
                    .iter()
                    .map(|(_, rec)| rec[c].as_str())
                    .filter(|t| boolean_value(t).is_none())
                    .collect();
                if bad.is_empty() {
                    (ColumnPlan::Boolean, "kept (boolean -> 0/1)".to_string())
                } else {
                    let tokens = bad.into_iter().collect::<Vec<_>>().join(", ");
                    if schema.force_retained(name) {
                        let levels = categorical_levels(&kept, c);
                        let note = format!(
                            "retained as categorical despite out-of-domain tokens ({tokens}) -> {} columns",
                            levels.len()
                        );
                        (ColumnPlan::Categorical { levels }, note)
                    } else {
                        (
                            ColumnPlan::Excluded,
                            format!("dropped (corrupted boolean; offending tokens: {tokens})"),
                        )
                    }
                }
            }
            ColumnRole::Categorical => {
                let levels = categorical_levels(&kept, c);
                if levels.is_empty() {
                    (
                        ColumnPlan::Excluded,
                        "dropped (categorical with a single constant level)".to_string(),
                    )
                } else {
                    let note = format!(
                        "one-hot ({} levels -> {} columns)",
                        levels.len() + 1,
                        levels.len()
                    );
                    (ColumnPlan::Categorical { levels }, note)
                }
            }
            ColumnRole::Label => (ColumnPlan::Excluded, "label".to_string()),
            ColumnRole::Group => (ColumnPlan::Excluded, "group".to_string()),
            ColumnRole::Drop => (ColumnPlan::Excluded, "dropped (redundant)".to_string()),
        };
        plans.push(plan);
        dispositions.push((name.clone(), note));
    }

    let label_col = roles.iter().position(|&r| r == ColumnRole::Label).unwrap();
    let group_col = roles.iter().position(|&r| r == ColumnRole::Group);

    let mut columns: Vec<String> = Vec::new();
    for (c, plan) in plans.iter().enumerate() {
        match plan {
            ColumnPlan::Numeric | ColumnPlan::Boolean => columns.push(header[c].clone()),
            ColumnPlan::Categorical { levels } => {
                columns.extend(levels.iter().map(|l| format!("{}={l}", header[c])));
            }
            ColumnPlan::Excluded => {}
        }
    }
    if columns.is_empty() {
        return Err(Error::data("ingest: no feature columns survived cleaning"));
    }

    let mut rows = Vec::with_capacity(kept.len());
    let mut labels = Vec::with_capacity(kept.len());
    let mut groups = Vec::with_capacity(kept.len());
    let mut row_ids = Vec::with_capacity(kept.len());
    for (row_no, rec) in &kept {
        let mut row: Vec<f64> = Vec::with_capacity(columns.len());
        for (c, plan) in plans.iter().enumerate() {
            match plan {
                ColumnPlan::Numeric => row.push(rec[c].parse().expect("validated above")),
                ColumnPlan::Boolean => row.push(boolean_value(&rec[c]).expect("validated above")),
                ColumnPlan::Categorical { levels } => {
                    for level in levels {
                        row.push(if &rec[c] == level { 1.0 } else { 0.0 });
                    }
                }
                ColumnPlan::Excluded => {}
            }
        }
        rows.push(row);
        labels.push(rec[label_col].clone());
        let row_id = format!("row_{row_no:05}");
        groups.push(match group_col {
            Some(g) => rec[g].clone(),
            None => row_id.clone(),
        });
        row_ids.push(row_id);
    }

    let kept_rows = kept.len();
    let table = FeatureTable::new(schema.level, columns, rows, labels, groups, row_ids)?;
    let report = CleaningReport {
        columns: dispositions,
        rejected_rows,
        input_rows,
        kept_rows,
    };
    Ok((table, report))
}

/// Sorted distinct values with the first level dropped (the one-hot baseline).
fn categorical_levels(kept: &[(usize, &Vec<String>)], c: usize) -> Vec<String> {
    let set: BTreeSet<&str> = kept.iter().map(|(_, rec)| rec[c].as_str()).collect();
    set.into_iter().skip(1).map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(pairs: &[(&str, ColumnRole)]) -> IngestSchema {
        IngestSchema {
            level: TableLevel::Fragment,
            columns: pairs
                .iter()
                .map(|(n, r)| (n.to_string(), *r))
                .collect(),
            force_retain: Vec::new(),
        }
    }

    #[test]
    fn numeric_and_boolean_columns_pass_through() {
        let csv = "length,notch,agent\n40.5,Present,carnivore\n267.0,absent,hammerstone\n";
        let s = schema(&[
            ("length", ColumnRole::Numeric),
            ("notch", ColumnRole::Boolean),
            ("agent", ColumnRole::Label),
        ]);
        let (table, report) = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap();
        assert_eq!(table.columns(), &["length", "notch"]);
        assert_eq!(table.rows()[0], vec![40.5, 1.0]);
        assert_eq!(table.rows()[1], vec![267.0, 0.0]);
        assert_eq!(table.labels(), &["carnivore", "hammerstone"]);
        assert!(report.columns.iter().any(|(n, d)| n == "notch" && d.contains("boolean")));
    }

    #[test]
    fn two_level_categorical_becomes_single_indicator() {
        let csv = "plane,agent\nLongitudinal,a\nOblique,b\nLongitudinal,a\n";
        let s = schema(&[
            ("plane", ColumnRole::Categorical),
            ("agent", ColumnRole::Label),
        ]);
        let (table, _) = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap();
        assert_eq!(table.columns(), &["plane=Oblique"]);
        assert_eq!(
            table.rows().iter().map(|r| r[0]).collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn multi_level_categorical_drops_first_sorted_level() {
        let csv = "tier,x,agent\nlow,1,a\nmid,2,b\nhigh,3,a\nmid,4,b\n";
        let s = schema(&[
            ("tier", ColumnRole::Categorical),
            ("x", ColumnRole::Numeric),
            ("agent", ColumnRole::Label),
        ]);
        let (table, _) = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap();
        // Sorted levels: high, low, mid; "high" is the dropped baseline.
        assert_eq!(table.columns(), &["tier=low", "tier=mid", "x"]);
        assert_eq!(table.rows()[0][..2], [1.0, 0.0]);
        assert_eq!(table.rows()[1][..2], [0.0, 1.0]);
        assert_eq!(table.rows()[2][..2], [0.0, 0.0]);
    }

    #[test]
    fn corrupted_boolean_is_excluded_and_reported() {
        let csv = "notch,x,agent\nPresent,1,a\n2,2,b\nAbsent,3,a\n";
        let s = schema(&[
            ("notch", ColumnRole::Boolean),
            ("x", ColumnRole::Numeric),
            ("agent", ColumnRole::Label),
        ]);
        let (table, report) = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap();
        assert_eq!(table.columns(), &["x"]);
        let (_, note) = report.columns.iter().find(|(n, _)| n == "notch").unwrap();
        assert!(note.contains("corrupted"), "{note}");
        assert!(note.contains('2'), "offending token missing: {note}");
        let text = report.to_string();
        assert!(text.contains("notch"));
    }

    #[test]
    fn force_retain_reinterprets_corrupted_boolean_as_categorical() {
        let csv = "notch,agent\nPresent,a\n2,b\nAbsent,a\n2,b\n";
        let mut s = schema(&[
            ("notch", ColumnRole::Boolean),
            ("agent", ColumnRole::Label),
        ]);
        s.force_retain = vec!["notch".to_string()];
        let (table, report) = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap();
        // Sorted levels: 2, Absent, Present; "2" is the dropped baseline.
        assert_eq!(table.columns(), &["notch=Absent", "notch=Present"]);
        assert_eq!(table.rows()[1], vec![0.0, 0.0]);
        let (_, note) = report.columns.iter().find(|(n, _)| n == "notch").unwrap();
        assert!(note.contains("retained as categorical"), "{note}");
    }

    #[test]
    fn rows_with_missing_fields_are_rejected_not_imputed() {
        let csv = "x,y,agent\n1,2,a\n,3,b\n4,,a\n5,6,b\n";
        let s = schema(&[
            ("x", ColumnRole::Numeric),
            ("y", ColumnRole::Numeric),
            ("agent", ColumnRole::Label),
        ]);
        let (table, report) = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap();
        assert_eq!(table.n_rows(), 2);
        assert_eq!(report.rejected_rows, vec![2, 3]);
        assert_eq!(report.input_rows, 4);
        assert_eq!(report.kept_rows, 2);
        assert_eq!(table.row_ids(), &["row_00001", "row_00004"]);
    }

    #[test]
    fn missing_field_in_dropped_column_is_fine() {
        let csv = "x,junk,agent\n1,,a\n2,zzz,b\n";
        let s = schema(&[
            ("x", ColumnRole::Numeric),
            ("junk", ColumnRole::Drop),
            ("agent", ColumnRole::Label),
        ]);
        let (table, _) = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap();
        assert_eq!(table.n_rows(), 2);
        assert_eq!(table.columns(), &["x"]);
    }

    #[test]
    fn unparseable_numeric_is_a_hard_error_with_location() {
        let csv = "x,agent\n1.5,a\noops,b\n";
        let s = schema(&[("x", ColumnRole::Numeric), ("agent", ColumnRole::Label)]);
        let err = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap_err();
        match err {
            Error::Ingest { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "x");
            }
            other => panic!("expected ingest error, got {other}"),
        }
    }

    #[test]
    fn undeclared_and_missing_columns_error() {
        let s = schema(&[("x", ColumnRole::Numeric), ("agent", ColumnRole::Label)]);
        let err = ingest_tabular_csv_from("x,extra,agent\n1,2,a\n".as_bytes(), &s).unwrap_err();
        assert!(matches!(err, Error::Ingest { column, .. } if column == "extra"));
        let err = ingest_tabular_csv_from("x\n1\n".as_bytes(), &s).unwrap_err();
        assert!(matches!(err, Error::Ingest { column, .. } if column == "agent"));
    }

    #[test]
    fn group_column_feeds_table_groups() {
        let csv = "frag,angle,agent\nf1,30,a\nf1,40,a\nf2,55,b\n";
        let s = IngestSchema {
            level: TableLevel::Break,
            columns: [
                ("frag".to_string(), ColumnRole::Group),
                ("angle".to_string(), ColumnRole::Numeric),
                ("agent".to_string(), ColumnRole::Label),
            ]
            .into_iter()
            .collect(),
            force_retain: Vec::new(),
        };
        let (table, _) = ingest_tabular_csv_from(csv.as_bytes(), &s).unwrap();
        assert_eq!(table.level(), TableLevel::Break);
        assert_eq!(table.group_ids(), &["f1", "f1", "f2"]);
    }

    #[test]
    fn break_level_schema_requires_group() {
        let s = IngestSchema {
            level: TableLevel::Break,
            columns: [
                ("x".to_string(), ColumnRole::Numeric),
                ("agent".to_string(), ColumnRole::Label),
            ]
            .into_iter()
            .collect(),
            force_retain: Vec::new(),
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn schema_json_round_trip() {
        let text = r#"{
            "level": "break",
            "columns": {"frag": "group", "x": "numeric", "flag": "boolean", "agent": "label"},
            "force_retain": ["flag"]
        }"#;
        let s = IngestSchema::from_json(text).unwrap();
        assert_eq!(s.level, TableLevel::Break);
        assert_eq!(s.columns["x"], ColumnRole::Numeric);
        assert!(s.force_retained("flag"));
        let back: IngestSchema =
            serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back.columns, s.columns);
    }
}
