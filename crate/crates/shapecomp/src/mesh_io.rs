//! ASCII OBJ and PLY reading and writing.

use std::fmt::Write as _;
use std::path::Path;

use shapecomp_core::mesh::Mesh;

use crate::error::{Error, Result};
use crate::fs::{read_text, write_text};

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(token: Option<&str>, path: &Path, line: usize) -> Result<f64> {
    let token = token.ok_or_else(|| parse_error(path, line, "missing coordinate"))?;
    token
        .parse()
        .map_err(|_| parse_error(path, line, format!("invalid number '{token}'")))
}

fn obj_index(token: &str, vertex_count: usize, path: &Path, line: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| parse_error(path, line, format!("invalid face index '{token}'")))?;
    let index = match raw {
        0 => return Err(parse_error(path, line, "face index 0 (OBJ indices are 1-based)")),
        r if r > 0 => r as usize - 1,
        r => vertex_count
            .checked_sub(r.unsigned_abs() as usize)
            .ok_or_else(|| parse_error(path, line, format!("relative index {r} before first vertex")))?,
    };
    Ok(index)
}

/// Parses OBJ text: `v x y z` and triangular `f` records; other records
/// are ignored.
pub fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let x = parse_f64(tokens.next(), path, line)?;
                let y = parse_f64(tokens.next(), path, line)?;
                let z = parse_f64(tokens.next(), path, line)?;
                vertices.push([x, y, z]);
            }
            Some("f") => {
                let idx: Vec<&str> = tokens.collect();
                if idx.len() != 3 {
                    return Err(parse_error(path, line, format!("non-triangular face at line {line}")));
                }
                let mut face = [0; 3];
                for (slot, t) in face.iter_mut().zip(idx) {
                    *slot = obj_index(t, vertices.len(), path, line)?;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok(Mesh::new(vertices, faces)?)
}

pub fn format_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    line: usize,
}

/// Vertex positions and faces from ASCII PLY text.
pub fn parse_ply(text: &str, path: &Path) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_error(path, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let (line, raw) = lines
            .next()
            .ok_or_else(|| parse_error(path, 0, "header ends without end_header"))?;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", "1.0"] => saw_format = true,
            ["format", other, ..] => {
                return Err(parse_error(path, line, format!("unsupported PLY format '{other}'")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_error(path, line, format!("invalid element count '{count}'")))?;
                elements.push(PlyElement {
                    name: (*name).to_string(),
                    count,
                    properties: Vec::new(),
                    line,
                });
            }
            ["property", rest @ ..] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(path, line, "property before any element"))?;
                let name = rest
                    .last()
                    .ok_or_else(|| parse_error(path, line, "property without name"))?;
                element.properties.push((*name).to_string());
            }
            ["end_header"] => break,
            _ => return Err(parse_error(path, line, format!("unexpected header line '{raw}'"))),
        }
    }
    if !saw_format {
        return Err(parse_error(path, 1, "missing 'format ascii 1.0'"));
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for element in &elements {
        let slot = |name: &str| element.properties.iter().position(|p| p == name);
        for _ in 0..element.count {
            let (line, raw) = lines.next().ok_or_else(|| {
                parse_error(
                    path,
                    element.line,
                    format!("file ends before {} '{}' records", element.count, element.name),
                )
            })?;
            let tokens: Vec<&str> = raw.split_whitespace().collect();
            match element.name.as_str() {
                "vertex" => {
                    let mut v = [0.0; 3];
                    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
                        let i = slot(name)
                            .ok_or_else(|| parse_error(path, element.line, format!("vertex has no '{name}'")))?;
                        v[axis] = parse_f64(tokens.get(i).copied(), path, line)?;
                    }
                    vertices.push(v);
                }
                "face" => {
                    let n: usize = tokens
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_error(path, line, "invalid face record"))?;
                    if n != 3 {
                        return Err(parse_error(path, line, format!("non-triangular face at line {line}")));
                    }
                    let mut face = [0; 3];
                    for (k, slot) in face.iter_mut().enumerate() {
                        let t = tokens
                            .get(k + 1)
                            .ok_or_else(|| parse_error(path, line, "short face record"))?;
                        *slot = t
                            .parse()
                            .map_err(|_| parse_error(path, line, format!("invalid face index '{t}'")))?;
                    }
                    faces.push(face);
                }
                _ => {}
            }
        }
    }
    Ok((vertices, faces))
}

pub fn format_ply(vertices: &[[f64; 3]], faces: &[[usize; 3]]) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", vertices.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if !faces.is_empty() {
        let _ = writeln!(out, "element face {}", faces.len());
        out.push_str("property list uchar int vertex_indices\n");
    }
    out.push_str("end_header\n");
    for v in vertices {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in faces {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

enum MeshFormat {
    Obj,
    Ply,
}

fn format_of(path: &Path) -> Result<MeshFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("obj") => Ok(MeshFormat::Obj),
        Some("ply") => Ok(MeshFormat::Ply),
        _ => Err(Error::format(path, "unknown mesh extension (expected .obj or .ply)")),
    }
}

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = read_text(path)?;
    match format_of(path)? {
        MeshFormat::Obj => parse_obj(&text, path),
        MeshFormat::Ply => {
            let (v, f) = parse_ply(&text, path)?;
            Ok(Mesh::new(v, f)?)
        }
    }
}

pub fn save_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    let text = match format_of(path)? {
        MeshFormat::Obj => format_obj(mesh),
        MeshFormat::Ply => format_ply(mesh.vertices(), mesh.faces()),
    };
    write_text(path, &text)
}

pub fn load_points(path: &Path) -> Result<Vec<[f64; 3]>> {
    Ok(parse_ply(&read_text(path)?, path)?.0)
}

pub fn save_points(points: &[[f64; 3]], path: &Path) -> Result<()> {
    write_text(path, &format_ply(points, &[]))
}
