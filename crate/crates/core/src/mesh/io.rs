//! OFF and ASCII PLY readers and writers.
//!
//! Coordinates are written with Rust's shortest round-trip float formatting,
//! so load → save → load reproduces vertex positions bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::Shape;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    PlyAscii,
}

impl MeshFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "ply" => Some(MeshFormat::PlyAscii),
            _ => None,
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Shape> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(path, &text)?,
        MeshFormat::PlyAscii => parse_ply(path, &text)?,
    };
    Shape::new(vertices, faces)
}

pub fn save_mesh(path: &Path, shape: &Shape, format: MeshFormat, colors: Option<&[[u8; 3]]>) -> Result<()> {
    if let Some(c) = colors {
        if c.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "{} colours for {} vertices",
                c.len(),
                shape.len()
            )));
        }
    }
    let text = match format {
        MeshFormat::Off => write_off(shape, colors),
        MeshFormat::PlyAscii => write_ply(shape, colors),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines paired with their 1-based line number.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {what} from {tok:?}")))
}

fn parse_face(path: &Path, line: usize, toks: &mut std::str::SplitWhitespace<'_>, n_vertices: usize) -> Result<[usize; 3]> {
    let count: usize = parse_num(path, line, toks.next(), "face vertex count")?;
    if count != 3 {
        return Err(Error::parse(path, line, format!("only triangles are supported, found a {count}-gon")));
    }
    let mut f = [0usize; 3];
    for slot in &mut f {
        let idx: usize = parse_num(path, line, toks.next(), "vertex index")?;
        if idx >= n_vertices {
            return Err(Error::parse(
                path,
                line,
                format!("vertex index {idx} out of range for {n_vertices} vertices"),
            ));
        }
        *slot = idx;
    }
    Ok(f)
}

fn parse_off(path: &Path, text: &str) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>)> {
    let mut lines = content_lines(text);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let rest = header
        .strip_prefix("COFF")
        .or_else(|| header.strip_prefix("OFF"))
        .ok_or_else(|| Error::parse(path, hl, "missing OFF header"))?
        .trim();
    let (cl, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(path, hl, "missing element counts"))?
    } else {
        (hl, rest)
    };
    let mut toks = counts.split_whitespace();
    let nv: usize = parse_num(path, cl, toks.next(), "vertex count")?;
    let nf: usize = parse_num(path, cl, toks.next(), "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, cl, format!("expected {nv} vertices")))?;
        let mut t = l.split_whitespace();
        let x = parse_num(path, ln, t.next(), "x")?;
        let y = parse_num(path, ln, t.next(), "y")?;
        let z = parse_num(path, ln, t.next(), "z")?;
        vertices.push(Point3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, cl, format!("expected {nf} faces")))?;
        faces.push(parse_face(path, ln, &mut l.split_whitespace(), nv)?);
    }
    Ok((vertices, faces))
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

fn parse_ply(path: &Path, text: &str) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "missing ply magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_end = None;
    for (ln, l) in lines.by_ref() {
        let mut t = l.split_whitespace();
        match t.next() {
            Some("format") => {
                if t.next() != Some("ascii") {
                    return Err(Error::parse(path, ln, "only ascii PLY is supported"));
                }
            }
            Some("element") => {
                let name = t.next().unwrap_or("").to_string();
                let count = parse_num(path, ln, t.next(), "element count")?;
                elements.push(PlyElement { name, count, properties: Vec::new() });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, ln, "property before element"))?;
                let name = t.last().unwrap_or("").to_string();
                el.properties.push(name);
            }
            Some("end_header") => {
                header_end = Some(ln);
                break;
            }
            _ => {}
        }
    }
    let header_end = header_end.ok_or_else(|| Error::parse(path, 1, "missing end_header"))?;

    let nv = elements
        .iter()
        .find(|e| e.name == "vertex")
        .map(|e| e.count)
        .ok_or_else(|| Error::parse(path, header_end, "no vertex element"))?;
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut vertices = Vec::with_capacity(nv);
    let mut faces = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |n: &str| {
                    el.properties
                        .iter()
                        .position(|p| p == n)
                        .ok_or_else(|| Error::parse(path, header_end, format!("vertex has no {n} property")))
                };
                let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
                for _ in 0..el.count {
                    let (ln, l) = body
                        .next()
                        .ok_or_else(|| Error::parse(path, header_end, "truncated vertex list"))?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    let get = |i: usize, what| parse_num::<f64>(path, ln, toks.get(i).copied(), what);
                    vertices.push(Point3::new(get(ix, "x")?, get(iy, "y")?, get(iz, "z")?));
                }
            }
            "face" => {
                for _ in 0..el.count {
                    let (ln, l) = body
                        .next()
                        .ok_or_else(|| Error::parse(path, header_end, "truncated face list"))?;
                    faces.push(parse_face(path, ln, &mut l.split_whitespace(), nv)?);
                }
            }
            _ => {
                for _ in 0..el.count {
                    body.next();
                }
            }
        }
    }
    Ok((vertices, faces))
}

fn write_off(shape: &Shape, colors: Option<&[[u8; 3]]>) -> String {
    let mut s = String::new();
    s.push_str(if colors.is_some() { "COFF\n" } else { "OFF\n" });
    let _ = writeln!(s, "{} {} 0", shape.len(), shape.faces().len());
    for (i, p) in shape.vertices().iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {} 255", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    for f in shape.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

fn write_ply(shape: &Shape, colors: Option<&[[u8; 3]]>) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", shape.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    let _ = writeln!(s, "element face {}", shape.faces().len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, p) in shape.vertices().iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    for f in shape.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}
