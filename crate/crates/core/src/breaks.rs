//! Break curves: ordered fracture-edge point sequences with goniometer angle
//! measurements, and the per-break feature rows built from them.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::orient_axis;

pub mod io;

/// Six-number summary used everywhere features are aggregated.
/// `std` is the sample standard deviation (n-1), zero for singletons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub range: f64,
}

pub const SUMMARY_STAT_NAMES: [&str; 6] = ["min", "max", "mean", "median", "std", "range"];

impl SummaryStats {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.min, self.max, self.mean, self.median, self.std, self.range,
        ]
    }
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::contract("summary_stats of an empty slice"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("summary_stats requires finite values"));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = sorted[0];
    let max = sorted[n - 1];
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let std = if n == 1 {
        0.0
    } else {
        let ss: f64 = sorted.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(SummaryStats {
        min,
        max,
        mean,
        median,
        std,
        range: max - min,
    })
}

/// Which side of the fragment the edge interior to the break faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteriorEdge {
    /// Faces another break surface.
    Break,
    /// Faces the endosteal (marrow cavity) surface.
    Endosteal,
}

/// One annotated break: an ordered curve of 3-D points along the fracture
/// edge, with one angle measurement per interior point and shape flags.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakCurve {
    pub fragment_id: String,
    pub break_id: String,
    points: Vec<Point3<f64>>,
    angles_deg: Vec<f64>,
    pub interior_edge: InteriorEdge,
    pub interrupted: bool,
    pub ridge_notch: bool,
    pub interior_notch: bool,
}

impl BreakCurve {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fragment_id: impl Into<String>,
        break_id: impl Into<String>,
        points: Vec<Point3<f64>>,
        angles_deg: Vec<f64>,
        interior_edge: InteriorEdge,
        interrupted: bool,
        ridge_notch: bool,
        interior_notch: bool,
    ) -> Result<Self> {
        let fragment_id = fragment_id.into();
        let break_id = break_id.into();
        if points.len() < 2 {
            return Err(Error::data(format!(
                "break {fragment_id}/{break_id}: needs at least 2 curve points, got {}",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::data(format!(
                    "break {fragment_id}/{break_id}: point {i} has non-finite coordinates"
                )));
            }
        }
        if angles_deg.is_empty() {
            return Err(Error::data(format!(
                "break {fragment_id}/{break_id}: needs at least one angle measurement"
            )));
        }
        for &a in &angles_deg {
            if !a.is_finite() || a <= 0.0 || a >= 360.0 {
                return Err(Error::data(format!(
                    "break {fragment_id}/{break_id}: angle {a} outside the open interval (0, 360)"
                )));
            }
        }
        Ok(BreakCurve {
            fragment_id,
            break_id,
            points,
            angles_deg,
            interior_edge,
            interrupted,
            ridge_notch,
            interior_notch,
        })
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    /// Straight-line distance between the curve's endpoints.
    pub fn chord_length(&self) -> f64 {
        (self.points[self.points.len() - 1] - self.points[0]).norm()
    }

    /// Polyline length: sum of consecutive point distances.
    pub fn arc_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    /// Angle in degrees, in [0, 90], between this curve's best-fit line and
    /// the given reference axis. Unsigned: a line has no forward direction.
    pub fn arc_angle_deg(&self, axis: &Vector3<f64>) -> Result<f64> {
        let d = best_fit_direction(&self.points)?;
        let denom = axis.norm();
        if denom <= 0.0 {
            return Err(Error::contract("arc_angle_deg: zero reference axis"));
        }
        let cos = (d.dot(axis).abs() / denom).clamp(0.0, 1.0);
        Ok(cos.acos().to_degrees())
    }
}

/// First principal component of a point cloud, sign-fixed like mesh axes.
/// Errors when all points coincide (no direction is defined).
pub fn best_fit_direction(points: &[Point3<f64>]) -> Result<Vector3<f64>> {
    if points.len() < 2 {
        return Err(Error::contract(
            "best_fit_direction needs at least 2 points",
        ));
    }
    let n = points.len() as f64;
    let centroid = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords)
        / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for i in 0..3 {
        let val = eig.eigenvalues[i];
        let axis = orient_axis(eig.eigenvectors.column(i).into_owned());
        best = match best {
            None => Some((val, axis)),
            Some((bv, ba)) => {
                // Ties broken lexicographically, matching the frame convention.
                let replace = val > bv
                    || (val == bv
                        && matches!(
                            lex3(&axis, &ba),
                            std::cmp::Ordering::Less
                        ));
                if replace {
                    Some((val, axis))
                } else {
                    Some((bv, ba))
                }
            }
        };
    }
    let (top, axis) = best.unwrap();
    if top <= 0.0 {
        return Err(Error::Degenerate(
            "best_fit_direction: all points coincide".into(),
        ));
    }
    Ok(axis.normalize())
}

fn lex3(a: &Vector3<f64>, b: &Vector3<f64>) -> std::cmp::Ordering {
    for i in 0..3 {
        match a[i].partial_cmp(&b[i]).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// The 14 per-break feature columns, in frozen order.
pub const BREAK_COLUMNS: [&str; 14] = [
    "num_angles",
    "angle_min",
    "angle_max",
    "angle_mean",
    "angle_median",
    "angle_std",
    "angle_range",
    "interior_edge_is_break",
    "interrupted",
    "ridge_notch",
    "interior_notch",
    "chord_length",
    "arc_length",
    "arc_angle",
];

/// Feature row for one break, plus the pieces fragment-level aggregation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakRecord {
    pub fragment_id: String,
    pub break_id: String,
    pub num_angles: usize,
    pub angle_stats: SummaryStats,
    pub interior_edge: InteriorEdge,
    pub interrupted: bool,
    pub ridge_notch: bool,
    pub interior_notch: bool,
    pub chord_length: f64,
    pub arc_length: f64,
    pub arc_angle_deg: f64,
}

impl BreakRecord {
    pub fn to_row(&self) -> [f64; 14] {
        let a = self.angle_stats;
        [
            self.num_angles as f64,
            a.min,
            a.max,
            a.mean,
            a.median,
            a.std,
            a.range,
            matches!(self.interior_edge, InteriorEdge::Break) as u8 as f64,
            self.interrupted as u8 as f64,
            self.ridge_notch as u8 as f64,
            self.interior_notch as u8 as f64,
            self.chord_length,
            self.arc_length,
            self.arc_angle_deg,
        ]
    }
}

/// Compute the feature row for one break given the fragment's dominant
/// principal axis.
pub fn build_break_record(
    curve: &BreakCurve,
    principal_axis: &Vector3<f64>,
) -> Result<BreakRecord> {
    Ok(BreakRecord {
        fragment_id: curve.fragment_id.clone(),
        break_id: curve.break_id.clone(),
        num_angles: curve.angles_deg.len(),
        angle_stats: summary_stats(&curve.angles_deg)?,
        interior_edge: curve.interior_edge,
        interrupted: curve.interrupted,
        ridge_notch: curve.ridge_notch,
        interior_notch: curve.interior_notch,
        chord_length: curve.chord_length(),
        arc_length: curve.arc_length(),
        arc_angle_deg: curve.arc_angle_deg(principal_axis)?,
    })
}
