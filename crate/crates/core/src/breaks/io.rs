//! Reading annotated break curves from the two-file CSV format.
//!
//! Points file: `fragment_id,break_id,point_index,x,y,z,angle_deg,is_endpoint`
//! — one row per curve point, `angle_deg` filled only on interior rows.
//! Metadata file: `fragment_id,break_id,interior_edge,interrupted,ridge_notch,
//! interior_notch` — exactly one row per curve.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use nalgebra::Point3;

use crate::breaks::{BreakCurve, InteriorEdge};
use crate::error::{Error, Result};

#[derive(Debug)]
struct PointRow {
    index: usize,
    point: Point3<f64>,
    angle: Option<f64>,
    endpoint: bool,
}

#[derive(Debug)]
struct MetaRow {
    interior_edge: InteriorEdge,
    interrupted: bool,
    ridge_notch: bool,
    interior_notch: bool,
}

pub fn read_break_curves(points_csv: &Path, meta_csv: &Path) -> Result<Vec<BreakCurve>> {
    let points = std::fs::File::open(points_csv)?;
    let meta = std::fs::File::open(meta_csv)?;
    read_break_curves_from(points, meta)
}

pub fn read_break_curves_from<P: Read, M: Read>(points: P, meta: M) -> Result<Vec<BreakCurve>> {
    let point_groups = read_point_rows(points)?;
    let mut metas = read_meta_rows(meta)?;

    let mut curves = Vec::with_capacity(point_groups.len());
    for ((frag, brk), mut rows) in point_groups {
        let key = (frag.clone(), brk.clone());
        let meta = metas.remove(&key).ok_or_else(|| {
            Error::data(format!("break {frag}/{brk}: no metadata row"))
        })?;

        rows.sort_by_key(|r| r.index);
        for (want, row) in rows.iter().enumerate() {
            if row.index != want {
                return Err(Error::data(format!(
                    "break {frag}/{brk}: point indices must be 0..{} without gaps \
                     or duplicates (found {})",
                    rows.len() - 1,
                    row.index
                )));
            }
        }
        let n = rows.len();
        if n < 3 {
            return Err(Error::data(format!(
                "break {frag}/{brk}: needs two endpoints and at least one interior \
                 measurement point, got {n} points"
            )));
        }
        let mut angles = Vec::with_capacity(n - 2);
        for (i, row) in rows.iter().enumerate() {
            let is_end = i == 0 || i == n - 1;
            if row.endpoint != is_end {
                return Err(Error::data(format!(
                    "break {frag}/{brk}: point {i} has is_endpoint={} but sits {} the curve",
                    row.endpoint,
                    if is_end { "at the end of" } else { "inside" }
                )));
            }
            match (is_end, row.angle) {
                (true, Some(_)) => {
                    return Err(Error::data(format!(
                        "break {frag}/{brk}: endpoint {i} must not carry an angle"
                    )))
                }
                (false, None) => {
                    return Err(Error::data(format!(
                        "break {frag}/{brk}: interior point {i} is missing its angle"
                    )))
                }
                (false, Some(a)) => angles.push(a),
                (true, None) => {}
            }
        }

        let pts: Vec<Point3<f64>> = rows.iter().map(|r| r.point).collect();
        validate_ordering(&frag, &brk, &pts)?;

        curves.push(BreakCurve::new(
            frag,
            brk,
            pts,
            angles,
            meta.interior_edge,
            meta.interrupted,
            meta.ridge_notch,
            meta.interior_notch,
        )?);
    }

    if let Some((frag, brk)) = metas.keys().next() {
        return Err(Error::data(format!(
            "break {frag}/{brk}: metadata row without any curve points"
        )));
    }
    if curves.is_empty() {
        return Err(Error::data("no break curves in the points CSV"));
    }
    Ok(curves)
}

/// Reject implausible point orderings.
///
/// Two clauses: (a) no interior point may be farther from a list neighbour
/// than from its far endpoint, and (b) no contiguous segment reversal may
/// shorten the polyline — points laid down in order along a curve satisfy
/// both, a shuffled or swapped sequence breaks (b) even when (a) is too
/// forgiving to notice.
fn validate_ordering(frag: &str, brk: &str, pts: &[Point3<f64>]) -> Result<()> {
    let n = pts.len();
    let d = |a: usize, b: usize| (pts[a] - pts[b]).norm();
    let scale: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum::<f64>();
    let slack = 1e-9 * scale.max(1.0);

    for i in 1..n - 1 {
        let far = d(i, 0).max(d(i, n - 1));
        if d(i, i - 1) > far + slack || d(i, i + 1) > far + slack {
            return Err(Error::data(format!(
                "break {frag}/{brk}: point {i} is farther from a neighbour than from \
                 its far endpoint; the curve points are not in order"
            )));
        }
    }

    // Reversing pts[i..=j] replaces edges (i-1,i) and (j,j+1) with (i-1,j) and (i,j+1).
    for i in 1..n - 1 {
        for j in i..n - 1 {
            let before = d(i - 1, i) + d(j, j + 1);
            let after = d(i - 1, j) + d(i, j + 1);
            if after + slack < before {
                return Err(Error::data(format!(
                    "break {frag}/{brk}: reversing points {i}..={j} shortens the curve; \
                     the points are not in order"
                )));
            }
        }
    }
    Ok(())
}

type PointGroups = BTreeMap<(String, String), Vec<PointRow>>;

fn read_point_rows<R: Read>(input: R) -> Result<PointGroups> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let want = [
        "fragment_id",
        "break_id",
        "point_index",
        "x",
        "y",
        "z",
        "angle_deg",
        "is_endpoint",
    ];
    let got: Vec<&str> = rdr.headers()?.iter().collect();
    if got != want {
        return Err(Error::data(format!(
            "break points CSV header must be {want:?}, got {got:?}"
        )));
    }

    let mut groups: PointGroups = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2; // 1-based, after header
        let num = |j: usize, name: &str| -> Result<f64> {
            rec[j].parse::<f64>().map_err(|_| Error::Ingest {
                row,
                column: name.into(),
                message: format!("cannot parse '{}' as a number", &rec[j]),
            })
        };
        let index = rec[2].parse::<usize>().map_err(|_| Error::Ingest {
            row,
            column: "point_index".into(),
            message: format!("cannot parse '{}' as an index", &rec[2]),
        })?;
        let point = Point3::new(num(3, "x")?, num(4, "y")?, num(5, "z")?);
        let angle = if rec[6].is_empty() {
            None
        } else {
            Some(num(6, "angle_deg")?)
        };
        let endpoint = parse_bool(&rec[7], row, "is_endpoint")?;
        groups
            .entry((rec[0].to_string(), rec[1].to_string()))
            .or_default()
            .push(PointRow {
                index,
                point,
                angle,
                endpoint,
            });
    }
    Ok(groups)
}

fn read_meta_rows<R: Read>(input: R) -> Result<BTreeMap<(String, String), MetaRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let want = [
        "fragment_id",
        "break_id",
        "interior_edge",
        "interrupted",
        "ridge_notch",
        "interior_notch",
    ];
    let got: Vec<&str> = rdr.headers()?.iter().collect();
    if got != want {
        return Err(Error::data(format!(
            "break metadata CSV header must be {want:?}, got {got:?}"
        )));
    }

    let mut metas = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let key = (rec[0].to_string(), rec[1].to_string());
        let interior_edge = match rec[2].to_ascii_lowercase().as_str() {
            "break" => InteriorEdge::Break,
            "endosteal" => InteriorEdge::Endosteal,
            other => {
                return Err(Error::Ingest {
                    row,
                    column: "interior_edge".into(),
                    message: format!("expected 'break' or 'endosteal', got '{other}'"),
                })
            }
        };
        let meta = MetaRow {
            interior_edge,
            interrupted: parse_bool(&rec[3], row, "interrupted")?,
            ridge_notch: parse_bool(&rec[4], row, "ridge_notch")?,
            interior_notch: parse_bool(&rec[5], row, "interior_notch")?,
        };
        if metas.insert(key.clone(), meta).is_some() {
            return Err(Error::data(format!(
                "break {}/{}: duplicate metadata row",
                key.0, key.1
            )));
        }
    }
    Ok(metas)
}

fn parse_bool(tok: &str, row: usize, column: &str) -> Result<bool> {
    match tok.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Ingest {
            row,
            column: column.into(),
            message: format!("expected true or false, got '{other}'"),
        }),
    }
}
