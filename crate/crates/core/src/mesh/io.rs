//! OBJ and PLY mesh readers/writers.
//!
//! OBJ vertex colors use the common `v x y z r g b` extension. PLY supports
//! `binary_little_endian` and `ascii` bodies with optional `red/green/blue`
//! vertex properties.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geom::Vec3;

pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let mut mesh = match ext.as_deref() {
        Some("obj") => read_obj(path)?,
        Some("ply") => read_ply(path)?,
        _ => return Err(Error::format(path, "unknown mesh extension (expected .obj or .ply)")),
    };
    mesh.validate().map_err(|e| Error::format(path, e.to_string()))?;
    let dropped = mesh.remove_degenerate();
    if dropped > 0 {
        log::info!("{}: removed {dropped} degenerate triangles", path.display());
    }
    if mesh.triangles.is_empty() {
        return Err(Error::format(path, "mesh has no triangles"));
    }
    Ok(mesh)
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text).map_err(|reason| Error::format(path, reason))
}

fn parse_obj(text: &str) -> std::result::Result<TriMesh, String> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let nums: Vec<f64> = it
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", lineno + 1))?;
                if nums.len() < 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", lineno + 1));
                }
                vertices.push(Vec3::new(nums[0], nums[1], nums[2]));
                if nums.len() >= 6 {
                    colors.push([nums[3] as f32, nums[4] as f32, nums[5] as f32]);
                }
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let idx: Vec<u32> = it
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|_| format!("line {}: bad face index `{tok}`", lineno + 1))?;
                        let resolved = if i < 0 { n + i } else { i - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(format!("line {}: face index {i} out of range", lineno + 1));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<std::result::Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(format!("line {}: face needs 3 vertices", lineno + 1));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mut mesh = TriMesh::new(vertices, triangles);
    if !colors.is_empty() {
        if colors.len() != mesh.vertices.len() {
            return Err("only some vertices carry colors".into());
        }
        mesh.colors = Some(colors);
    }
    Ok(mesh)
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = String::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        match &mesh.colors {
            Some(c) => out.push_str(&format!(
                "v {} {} {} {} {} {}\n",
                v.x, v.y, v.z, c[i][0], c[i][1], c[i][2]
            )),
            None => out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z)),
        }
    }
    for t in &mesh.triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

pub fn read_ply(path: &Path) -> Result<TriMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes).map_err(|reason| Error::format(path, reason))
}

fn parse_ply(bytes: &[u8]) -> std::result::Result<TriMesh, String> {
    const END: &[u8] = b"end_header";
    let pos = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or("missing end_header")?;
    let mut body = pos + END.len();
    while body < bytes.len() && bytes[body] != b'\n' {
        body += 1;
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|_| "header is not utf-8")?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing `ply` magic".into());
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", f, _] => format = Some(f.to_string()),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| "bad element count")?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                el.props.push(Property::List(
                    name.to_string(),
                    Scalar::parse(ct).ok_or("bad list count type")?,
                    Scalar::parse(it).ok_or("bad list item type")?,
                ));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                el.props.push(Property::Scalar(
                    name.to_string(),
                    Scalar::parse(ty).ok_or_else(|| format!("bad property type `{ty}`"))?,
                ));
            }
            _ => {}
        }
    }
    let ascii = match format.as_deref() {
        Some("binary_little_endian") => false,
        Some("ascii") => true,
        Some(f) => return Err(format!("unsupported PLY format `{f}`")),
        None => return Err("missing format line".into()),
    };

    let mut reader: Box<dyn FnMut(Scalar) -> std::result::Result<f64, String>> = if ascii {
        let text = std::str::from_utf8(&bytes[body.min(bytes.len())..])
            .map_err(|_| "ascii body is not utf-8")?
            .to_owned();
        let mut toks = text
            .split_whitespace()
            .map(str::to_owned)
            .collect::<Vec<_>>()
            .into_iter();
        Box::new(move |_| {
            toks.next()
                .ok_or_else(|| "unexpected end of data".to_string())?
                .parse::<f64>()
                .map_err(|e| e.to_string())
        })
    } else {
        let data = bytes[body.min(bytes.len())..].to_vec();
        let mut at = 0usize;
        Box::new(move |s: Scalar| {
            let n = s.size();
            if at + n > data.len() {
                return Err("unexpected end of data".into());
            }
            let v = s.read_le(&data[at..at + n]);
            at += n;
            Ok(v)
        })
    };

    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut pos = [0.0; 3];
            let mut rgb = [f32::NAN; 3];
            for prop in &el.props {
                match prop {
                    Property::Scalar(name, ty) => {
                        let v = reader(*ty)?;
                        let as_unit = |v: f64| {
                            if ty.is_integer() {
                                (v / 255.0) as f32
                            } else {
                                v as f32
                            }
                        };
                        match name.as_str() {
                            "x" => pos[0] = v,
                            "y" => pos[1] = v,
                            "z" => pos[2] = v,
                            "red" => rgb[0] = as_unit(v),
                            "green" => rgb[1] = as_unit(v),
                            "blue" => rgb[2] = as_unit(v),
                            _ => {}
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = reader(*ct)? as usize;
                        let items: Vec<f64> = (0..n).map(|_| reader(*it)).collect::<std::result::Result<_, _>>()?;
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            let idx: Vec<u32> = items.iter().map(|&v| v as u32).collect();
                            if idx.len() < 3 {
                                return Err("face with fewer than 3 vertices".into());
                            }
                            for k in 1..idx.len() - 1 {
                                triangles.push([idx[0], idx[k], idx[k + 1]]);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(Vec3::new(pos[0], pos[1], pos[2]));
                if rgb.iter().all(|c| !c.is_nan()) {
                    colors.push(rgb);
                }
            }
        }
    }
    let mut mesh = TriMesh::new(vertices, triangles);
    if !colors.is_empty() {
        if colors.len() != mesh.vertices.len() {
            return Err("only some vertices carry colors".into());
        }
        mesh.colors = Some(colors);
    }
    Ok(mesh)
}

/// Writes a binary little-endian PLY with float positions and, when present,
/// uchar vertex colors.
pub fn write_ply(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = Vec::new();
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        mesh.vertices.len()
    );
    if mesh.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str(&format!(
        "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.triangles.len()
    ));
    out.extend_from_slice(header.as_bytes());
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in v.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(colors) = &mesh.colors {
            for c in colors[i] {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    for t in &mesh.triangles {
        out.push(3);
        for i in t {
            out.extend_from_slice(&(*i as i32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_with_colors_and_quads() {
        let text =
            "# quad\nv 0 0 0 1 0 0\nv 1 0 0 1 0 0\nv 1 1 0 0 1 0\nv 0 1 0 0 0 1\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.colors.as_ref().unwrap()[3], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn obj_negative_indices() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_bad_index_is_an_error() {
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }

    #[test]
    fn ply_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mut mesh = TriMesh::icosphere(Vec3::zeros(), 1.0, 1);
        let n = mesh.vertices.len();
        mesh.colors = Some(vec![[1.0, 0.0, 1.0]; n]);
        write_ply(&path, &mesh).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.triangles, mesh.triangles);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert!((a - b).norm() < 1e-6);
        }
        assert_eq!(back.colors.unwrap()[5], [1.0, 0.0, 1.0]);
    }

    #[test]
    fn ply_ascii() {
        let text = b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let m = parse_ply(text).unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert!(m.colors.is_none());
    }
}
