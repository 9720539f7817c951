//! PLY mesh loading: ASCII 1.0 and binary_little_endian 1.0.
//!
//! Only vertex positions and face index lists are consumed; every other
//! element and property is parsed (so sizes stay in sync) and discarded.
//! Polygons with more than three sides are fan-triangulated.

use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(tok: &str) -> Option<Scalar> {
        Some(match tok {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { ty: Scalar, name: String },
    List { count: Scalar, item: Scalar, name: String },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug)]
struct ElementDecl {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::PlyParse {
        location: location.into(),
        message: message.into(),
    }
}

pub fn load_ply(path: &Path) -> Result<TriangleMesh> {
    let bytes = fs::read(path)?;
    parse_ply(&bytes).map_err(|e| match e {
        Error::PlyParse { location, message } => Error::PlyParse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    let (format, elements, body_start) = parse_header(bytes)?;
    let body = &bytes[body_start..];
    let (vertices, polygons) = match format {
        Format::Ascii => read_body_ascii(body, &elements)?,
        Format::BinaryLe => read_body_binary(body, &elements, body_start)?,
    };

    let mut faces = Vec::new();
    for (row, poly) in polygons.iter().enumerate() {
        if poly.len() < 3 {
            return Err(err(
                format!("element face, row {row}"),
                format!("face with {} vertices cannot be triangulated", poly.len()),
            ));
        }
        for i in 0..poly.len() {
            for j in (i + 1)..poly.len() {
                if poly[i] == poly[j] {
                    return Err(err(
                        format!("element face, row {row}"),
                        format!("face repeats vertex index {}", poly[i]),
                    ));
                }
            }
        }
        for k in 1..poly.len() - 1 {
            faces.push([poly[0], poly[k], poly[k + 1]]);
        }
    }

    TriangleMesh::new(vertices, faces)
}

/// Returns (format, element declarations, offset of the first body byte).
fn parse_header(bytes: &[u8]) -> Result<(Format, Vec<ElementDecl>, usize)> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut format: Option<Format> = None;
    let mut elements: Vec<ElementDecl> = Vec::new();
    let mut saw_magic = false;

    loop {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err("header", "missing end_header"))?;
        let raw = &bytes[pos..pos + nl];
        pos += nl + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| err(format!("header line {line_no}"), "non-UTF-8 header line"))?
            .trim_end_matches('\r')
            .trim();
        let loc = format!("header line {line_no}");

        if line_no == 1 {
            if line != "ply" {
                return Err(err(loc, "file does not start with 'ply'"));
            }
            saw_magic = true;
            continue;
        }
        let mut toks = line.split_ascii_whitespace();
        match toks.next() {
            None => continue,
            Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                let kind = toks.next().ok_or_else(|| err(&loc, "format without kind"))?;
                let version = toks.next().unwrap_or("");
                if version != "1.0" {
                    return Err(err(&loc, format!("unsupported PLY version '{version}'")));
                }
                format = Some(match kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => return Err(err(&loc, format!("unsupported format '{other}'"))),
                });
            }
            Some("element") => {
                let name = toks
                    .next()
                    .ok_or_else(|| err(&loc, "element without name"))?;
                let count: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(&loc, "element without a valid count"))?;
                elements.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| err(&loc, "property before any element"))?;
                let t1 = toks
                    .next()
                    .ok_or_else(|| err(&loc, "property without type"))?;
                if t1 == "list" {
                    let count = toks
                        .next()
                        .and_then(Scalar::parse)
                        .ok_or_else(|| err(&loc, "bad list count type"))?;
                    let item = toks
                        .next()
                        .and_then(Scalar::parse)
                        .ok_or_else(|| err(&loc, "bad list item type"))?;
                    let name = toks
                        .next()
                        .ok_or_else(|| err(&loc, "list property without name"))?;
                    elem.props.push(Property::List {
                        count,
                        item,
                        name: name.to_string(),
                    });
                } else {
                    let ty = Scalar::parse(t1)
                        .ok_or_else(|| err(&loc, format!("unknown property type '{t1}'")))?;
                    let name = toks
                        .next()
                        .ok_or_else(|| err(&loc, "property without name"))?;
                    elem.props.push(Property::Scalar {
                        ty,
                        name: name.to_string(),
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(err(&loc, format!("unrecognized header keyword '{other}'")));
            }
        }
    }

    if !saw_magic {
        return Err(err("header", "file does not start with 'ply'"));
    }
    let format = format.ok_or_else(|| err("header", "missing format line"))?;
    Ok((format, elements, pos))
}

/// Positions of the x/y/z scalar properties in the vertex element.
fn vertex_coord_slots(decl: &ElementDecl) -> Result<[usize; 3]> {
    let mut slots = [usize::MAX; 3];
    for (i, p) in decl.props.iter().enumerate() {
        let slot = match p.name() {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => continue,
        };
        match p {
            Property::Scalar { ty, .. } if matches!(ty, Scalar::F32 | Scalar::F64) => {
                slots[slot] = i;
            }
            _ => {
                return Err(err(
                    "element vertex",
                    format!("coordinate '{}' must be float or double", p.name()),
                ));
            }
        }
    }
    if slots.contains(&usize::MAX) {
        return Err(err("element vertex", "missing x, y or z property"));
    }
    Ok(slots)
}

/// The face element's index list property, if the element exists.
fn face_list_slot(decl: &ElementDecl) -> Result<usize> {
    for (i, p) in decl.props.iter().enumerate() {
        if let Property::List { count, item, name } = p {
            if name == "vertex_indices" || name == "vertex_index" {
                if !count.is_integer() || !item.is_integer() {
                    return Err(err(
                        "element face",
                        "vertex index list must use integer types",
                    ));
                }
                return Ok(i);
            }
        }
    }
    Err(err("element face", "no vertex_indices list property"))
}

type Verts = Vec<Point3<f64>>;
type Polys = Vec<Vec<usize>>;

fn read_body_ascii(body: &[u8], elements: &[ElementDecl]) -> Result<(Verts, Polys)> {
    let text = std::str::from_utf8(body).map_err(|_| err("body", "non-UTF-8 ASCII body"))?;
    let mut toks = text.split_ascii_whitespace();
    let mut vertices: Verts = Vec::new();
    let mut polygons: Polys = Vec::new();

    for decl in elements {
        let coord_slots = (decl.name == "vertex").then(|| vertex_coord_slots(decl)).transpose()?;
        let face_slot = (decl.name == "face").then(|| face_list_slot(decl)).transpose()?;

        for row in 0..decl.count {
            let loc = || format!("element {}, row {row}", decl.name);
            let mut coords = [0.0f64; 3];
            let mut poly: Vec<usize> = Vec::new();
            for (pi, prop) in decl.props.iter().enumerate() {
                match prop {
                    Property::Scalar { .. } => {
                        let tok = toks.next().ok_or_else(|| err(loc(), "unexpected end of data"))?;
                        let want = coord_slots.map_or(false, |s| s.contains(&pi));
                        if want {
                            let v: f64 = tok.parse().map_err(|_| {
                                err(loc(), format!("cannot parse '{tok}' as a number"))
                            })?;
                            let slot = coord_slots.unwrap().iter().position(|&s| s == pi).unwrap();
                            coords[slot] = v;
                        }
                    }
                    Property::List { .. } => {
                        let tok = toks.next().ok_or_else(|| err(loc(), "unexpected end of data"))?;
                        let n: usize = tok.parse().map_err(|_| {
                            err(loc(), format!("cannot parse list count '{tok}'"))
                        })?;
                        let is_face_list = face_slot == Some(pi);
                        for _ in 0..n {
                            let tok =
                                toks.next().ok_or_else(|| err(loc(), "unexpected end of data"))?;
                            if is_face_list {
                                let idx: i64 = tok.parse().map_err(|_| {
                                    err(loc(), format!("cannot parse vertex index '{tok}'"))
                                })?;
                                if idx < 0 {
                                    return Err(err(loc(), format!("negative vertex index {idx}")));
                                }
                                poly.push(idx as usize);
                            }
                        }
                    }
                }
            }
            if coord_slots.is_some() {
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            if face_slot.is_some() {
                polygons.push(poly);
            }
        }
    }
    Ok((vertices, polygons))
}

struct BinCursor<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> BinCursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(err(
                format!("byte offset {}", self.base + self.pos),
                format!("unexpected end of file while reading {what}"),
            ));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_f64(&mut self, ty: Scalar, what: &str) -> Result<f64> {
        let b = self.take(ty.size(), what)?;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes([
                b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
            ]),
        })
    }

    fn read_int(&mut self, ty: Scalar, what: &str) -> Result<i64> {
        let b = self.take(ty.size(), what)?;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as i64,
            Scalar::U8 => b[0] as i64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as i64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as i64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as i64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as i64,
            _ => {
                return Err(err(
                    format!("byte offset {}", self.base + self.pos),
                    format!("{what}: expected an integer type"),
                ))
            }
        })
    }
}

fn read_body_binary(
    body: &[u8],
    elements: &[ElementDecl],
    base: usize,
) -> Result<(Verts, Polys)> {
    let mut cur = BinCursor {
        data: body,
        pos: 0,
        base,
    };
    let mut vertices: Verts = Vec::new();
    let mut polygons: Polys = Vec::new();

    for decl in elements {
        let coord_slots = (decl.name == "vertex").then(|| vertex_coord_slots(decl)).transpose()?;
        let face_slot = (decl.name == "face").then(|| face_list_slot(decl)).transpose()?;

        for _row in 0..decl.count {
            let mut coords = [0.0f64; 3];
            let mut poly: Vec<usize> = Vec::new();
            for (pi, prop) in decl.props.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, name } => {
                        let v = cur.read_f64(*ty, name)?;
                        if let Some(slots) = coord_slots {
                            if let Some(slot) = slots.iter().position(|&s| s == pi) {
                                coords[slot] = v;
                            }
                        }
                    }
                    Property::List { count, item, name } => {
                        let n = cur.read_int(*count, name)?;
                        if n < 0 {
                            return Err(err(
                                format!("byte offset {}", base + cur.pos),
                                format!("negative list count for '{name}'"),
                            ));
                        }
                        let is_face_list = face_slot == Some(pi);
                        for _ in 0..n {
                            if is_face_list {
                                let idx = cur.read_int(*item, name)?;
                                if idx < 0 {
                                    return Err(err(
                                        format!("byte offset {}", base + cur.pos),
                                        format!("negative vertex index {idx}"),
                                    ));
                                }
                                poly.push(idx as usize);
                            } else {
                                cur.read_f64(*item, name)?;
                            }
                        }
                    }
                }
            }
            if coord_slots.is_some() {
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            if face_slot.is_some() {
                polygons.push(poly);
            }
        }
    }
    Ok((vertices, polygons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const ASCII_CUBE: &str = "\
ply
format ascii 1.0
comment made by hand
element vertex 8
property float x
property float y
property float z
element face 12
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
3 0 2 1
3 0 3 2
3 4 5 6
3 4 6 7
3 0 1 5
3 0 5 4
3 1 2 6
3 1 6 5
3 2 3 7
3 2 7 6
3 3 0 4
3 3 4 7
";

    #[test]
    fn ascii_cube_loads_and_measures() {
        let mesh = parse_ply(ASCII_CUBE.as_bytes()).unwrap();
        assert_eq!(mesh.vertices().len(), 8);
        assert_eq!(mesh.faces().len(), 12);
        assert_relative_eq!(mesh.surface_area(), 6.0, max_relative = 1e-6);
        assert_relative_eq!(mesh.enclosed_volume().volume, 1.0, max_relative = 1e-6);
        assert!(mesh.is_watertight());
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let quad_cube = "\
ply
format ascii 1.0
element vertex 8
property float x
property float y
property float z
element face 6
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
4 0 3 2 1
4 4 5 6 7
4 0 1 5 4
4 1 2 6 5
4 2 3 7 6
4 3 0 4 7
";
        let mesh = parse_ply(quad_cube.as_bytes()).unwrap();
        assert_eq!(mesh.faces().len(), 12);
        assert_relative_eq!(mesh.surface_area(), 6.0, max_relative = 1e-6);
        assert_relative_eq!(mesh.enclosed_volume().volume, 1.0, max_relative = 1e-6);
        assert!(mesh.is_watertight());
    }

    #[test]
    fn unknown_properties_and_elements_are_skipped() {
        let fancy = "\
ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
property float confidence
property uchar red
element edge 2
property int vertex1
property int vertex2
element face 1
property list uchar int vertex_indices
end_header
0 0 0 0.5 255
1 0 0 0.5 255
0 1 0 0.9 12
0 1
1 2
3 0 1 2
";
        let mesh = parse_ply(fancy.as_bytes()).unwrap();
        assert_eq!(mesh.vertices().len(), 3);
        assert_eq!(mesh.faces().len(), 1);
        assert_relative_eq!(mesh.surface_area(), 0.5, max_relative = 1e-9);
    }

    fn binary_cube_bytes() -> Vec<u8> {
        let header = "ply\n\
format binary_little_endian 1.0\n\
element vertex 8\n\
property float x\n\
property float y\n\
property float z\n\
element face 12\n\
property list uchar int vertex_indices\n\
end_header\n";
        let verts: [[f32; 3]; 8] = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        let faces: [[i32; 3]; 12] = [
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        let mut bytes = header.as_bytes().to_vec();
        for v in verts {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        for f in faces {
            bytes.push(3u8);
            for idx in f {
                bytes.extend_from_slice(&idx.to_le_bytes());
            }
        }
        bytes
    }

    #[test]
    fn binary_little_endian_cube_loads() {
        let mesh = parse_ply(&binary_cube_bytes()).unwrap();
        assert_eq!(mesh.vertices().len(), 8);
        assert_eq!(mesh.faces().len(), 12);
        assert_relative_eq!(mesh.surface_area(), 6.0, max_relative = 1e-6);
        assert_relative_eq!(mesh.enclosed_volume().volume, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn truncated_binary_fails_with_offset() {
        let bytes = binary_cube_bytes();
        let cut = &bytes[..bytes.len() - 5];
        let e = parse_ply(cut).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("byte offset"), "got: {msg}");
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let bad = "\
ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
3 0 1 99
";
        let e = parse_ply(bad.as_bytes()).unwrap_err();
        assert!(e.to_string().contains("99"), "got: {e}");
    }

    #[test]
    fn degenerate_and_tiny_faces_are_rejected() {
        let repeated = "\
ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
3 0 1 1
";
        assert!(parse_ply(repeated.as_bytes()).is_err());

        let two_gon = repeated.replace("3 0 1 1", "2 0 1");
        assert!(parse_ply(two_gon.as_bytes()).is_err());
    }

    #[test]
    fn malformed_headers_are_rejected() {
        assert!(parse_ply(b"not a ply file\n").is_err());
        assert!(parse_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply(b"ply\nformat ascii 2.0\nend_header\n").is_err());
        assert!(parse_ply(b"ply\nformat ascii 1.0\nelement vertex abc\nend_header\n").is_err());
    }

    #[test]
    fn double_precision_coordinates_load() {
        let mut bytes = b"ply\n\
format binary_little_endian 1.0\n\
element vertex 3\n\
property double x\n\
property double y\n\
property double z\n\
element face 1\n\
property list uchar uint vertex_indices\n\
end_header\n"
            .to_vec();
        for v in [[0.0f64, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]] {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        bytes.push(3);
        for idx in [0u32, 1, 2] {
            bytes.extend_from_slice(&idx.to_le_bytes());
        }
        let mesh = parse_ply(&bytes).unwrap();
        assert_relative_eq!(mesh.surface_area(), 2.0, max_relative = 1e-12);
    }
}
