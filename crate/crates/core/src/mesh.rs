//! Triangle meshes and the geometric measurements taken from them.

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

pub mod ply;

/// An indexed triangle mesh, coordinates in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
}

/// Volume estimate plus the watertightness evidence backing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate {
    /// Absolute enclosed volume from the divergence theorem. Only trustworthy
    /// when `watertight` is true.
    pub volume: f64,
    pub watertight: bool,
}

/// Principal component frame of the vertex cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalFrame {
    pub centroid: Point3<f64>,
    /// Unit axes ordered by descending variance. Sign convention: each axis
    /// has its largest-magnitude component positive.
    pub axes: [Vector3<f64>; 3],
    /// Vertex-cloud variances along the axes, descending.
    pub variances: [f64; 3],
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Mesh("mesh has no vertices".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::Mesh(format!("vertex {i} has non-finite coordinates")));
            }
        }
        for (i, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx >= vertices.len() {
                    return Err(Error::Mesh(format!(
                        "face {i} references vertex {idx}, but the mesh has only {} vertices",
                        vertices.len()
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Mesh(format!(
                    "face {i} repeats a vertex index ({}, {}, {})",
                    f[0], f[1], f[2]
                )));
            }
        }
        Ok(TriangleMesh { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Sum of triangle areas via half cross-product norms.
    pub fn surface_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0]];
                let b = self.vertices[f[1]];
                let c = self.vertices[f[2]];
                (b - a).cross(&(c - a)).norm() * 0.5
            })
            .sum()
    }

    /// True when every undirected edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for (u, v) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (u.min(v), u.max(v));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        edge_count.values().all(|&c| c == 2)
    }

    /// Enclosed volume by the divergence theorem: |Σ det(v0, v1, v2) / 6|.
    /// Orientation-independent thanks to the absolute value.
    pub fn enclosed_volume(&self) -> VolumeEstimate {
        let signed: f64 = self
            .faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0]].coords;
                let b = self.vertices[f[1]].coords;
                let c = self.vertices[f[2]].coords;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        VolumeEstimate {
            volume: signed.abs(),
            watertight: self.is_watertight(),
        }
    }

    /// Principal axes of the vertex cloud (PCA about the vertex mean).
    ///
    /// Errors when the vertices are coincident or collinear, since no plane of
    /// the frame is then defined.
    pub fn principal_frame(&self) -> Result<PrincipalFrame> {
        if self.vertices.len() < 3 {
            return Err(Error::Degenerate(format!(
                "principal frame needs at least 3 vertices, got {}",
                self.vertices.len()
            )));
        }
        let n = self.vertices.len() as f64;
        let centroid = Point3::from(
            self.vertices
                .iter()
                .fold(Vector3::zeros(), |acc, p| acc + p.coords)
                / n,
        );
        let mut cov = Matrix3::zeros();
        for p in &self.vertices {
            let d = p - centroid;
            cov += d * d.transpose();
        }
        cov /= n;

        let (axes, variances) = principal_axes(&cov)?;
        Ok(PrincipalFrame {
            centroid,
            axes,
            variances,
        })
    }

    /// Extents of the vertex cloud along the principal axes, sorted descending.
    pub fn bounding_box_dims(&self, frame: &PrincipalFrame) -> [f64; 3] {
        let mut dims = [0.0f64; 3];
        for (k, axis) in frame.axes.iter().enumerate() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in &self.vertices {
                let t = (p - frame.centroid).dot(axis);
                lo = lo.min(t);
                hi = hi.max(t);
            }
            dims[k] = hi - lo;
        }
        dims.sort_by(|a, b| b.partial_cmp(a).unwrap());
        dims
    }
}

/// Sign-normalize an axis: largest-magnitude component positive; among
/// magnitude ties the lowest component index decides.
pub(crate) fn orient_axis(v: Vector3<f64>) -> Vector3<f64> {
    let mut best = 0;
    for i in 1..3 {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -v
    } else {
        v
    }
}

/// Eigendecompose a 3x3 covariance matrix into ordered, sign-fixed axes.
pub(crate) fn principal_axes(cov: &Matrix3<f64>) -> Result<([Vector3<f64>; 3], [f64; 3])> {
    let eig = nalgebra::SymmetricEigen::new(*cov);
    let mut pairs: Vec<(f64, Vector3<f64>)> = (0..3)
        .map(|i| {
            let axis = orient_axis(eig.eigenvectors.column(i).into_owned());
            (eig.eigenvalues[i], axis)
        })
        .collect();
    // Descending eigenvalue; exact ties resolved by lexicographic axis order.
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| lex_cmp(&a.1, &b.1))
    });

    let lead = pairs[0].0.max(0.0);
    if lead <= 0.0 {
        return Err(Error::Degenerate("all vertices coincide".into()));
    }
    if pairs[1].0 <= 1e-12 * lead {
        return Err(Error::Degenerate("vertices are collinear".into()));
    }
    Ok((
        [pairs[0].1, pairs[1].1, pairs[2].1],
        [pairs[0].0, pairs[1].0, pairs[2].0],
    ))
}

fn lex_cmp(a: &Vector3<f64>, b: &Vector3<f64>) -> std::cmp::Ordering {
    for i in 0..3 {
        match a[i].partial_cmp(&b[i]).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Canonical primitive meshes with known area and volume, used as oracles in
/// tests and examples.
pub mod shapes {
    use super::*;

    /// Axis-aligned unit cube, outward-oriented faces.
    pub fn unit_cube() -> TriangleMesh {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(1.0, 0.0, 1.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(0.0, 1.0, 1.0),
        ];
        let f = vec![
            [0, 2, 1],
            [0, 3, 2], // bottom (z=0), outward -z
            [4, 5, 6],
            [4, 6, 7], // top
            [0, 1, 5],
            [0, 5, 4], // y=0
            [1, 2, 6],
            [1, 6, 5], // x=1
            [2, 3, 7],
            [2, 7, 6], // y=1
            [3, 0, 4],
            [3, 4, 7], // x=0
        ];
        TriangleMesh::new(v, f).unwrap()
    }

    /// Corner tetrahedron with legs of length 1 along each axis.
    pub fn corner_tetrahedron() -> TriangleMesh {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let f = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriangleMesh::new(v, f).unwrap()
    }

    /// Axis-aligned box with the given side lengths, centred at the origin.
    pub fn boxy(lx: f64, ly: f64, lz: f64) -> TriangleMesh {
        let cube = unit_cube();
        let verts = cube
            .vertices()
            .iter()
            .map(|p| Point3::new((p.x - 0.5) * lx, (p.y - 0.5) * ly, (p.z - 0.5) * lz))
            .collect();
        TriangleMesh::new(verts, cube.faces().to_vec()).unwrap()
    }

    pub fn transformed(
        mesh: &TriangleMesh,
        rot: &nalgebra::Rotation3<f64>,
        shift: Vector3<f64>,
    ) -> TriangleMesh {
        let verts = mesh.vertices().iter().map(|p| rot * p + shift).collect();
        TriangleMesh::new(verts, mesh.faces().to_vec()).unwrap()
    }
}
