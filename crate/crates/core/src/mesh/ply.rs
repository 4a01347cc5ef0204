//! ASCII PLY with `x y z red green blue` vertices and triangle faces.

use std::fmt::Write as _;
use std::path::Path;

use super::TriangleMesh;
use crate::geometry::Vec3;
use crate::{Error, Result};

pub fn format_ply(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices().len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    let _ = writeln!(s, "element face {}", mesh.faces().len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (v, c) in mesh.vertices().iter().zip(mesh.colors()) {
        let q = |x: f32| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            v.x as f32,
            v.y as f32,
            v.z as f32,
            q(c[0]),
            q(c[1]),
            q(c[2])
        );
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    crate::image::write_file(path, format_ply(mesh).as_bytes())
}

pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text)
}

struct VertexLayout {
    count: usize,
    props: Vec<String>,
}

/// Parses ASCII PLY. Polygonal faces are fan-triangulated; colors may be uchar
/// (0–255) or float (0–1) and are optional.
pub fn parse_ply(text: &str) -> Result<TriangleMesh> {
    let fmt = |m: &str| Error::Format(format!("PLY: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(fmt("missing magic"));
    }
    let mut vertex = VertexLayout {
        count: 0,
        props: Vec::new(),
    };
    let mut face_count = 0usize;
    let mut float_color = false;
    let mut current = "";
    let mut ascii = false;
    for line in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, ..] => {
                if *f != "ascii" {
                    return Err(fmt(&format!("unsupported format {f}")));
                }
                ascii = true;
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, n] => {
                let n: usize = n.parse().map_err(|_| fmt("bad element count"))?;
                current = match *name {
                    "vertex" => {
                        vertex.count = n;
                        "vertex"
                    }
                    "face" => {
                        face_count = n;
                        "face"
                    }
                    _ if n == 0 => "other",
                    other => return Err(fmt(&format!("unsupported element {other}"))),
                };
            }
            ["property", "list", ..] => {
                if current != "face" {
                    return Err(fmt("list property outside face element"));
                }
            }
            ["property", ty, name] => {
                if current == "vertex" {
                    if *name == "red" && matches!(*ty, "float" | "float32" | "double") {
                        float_color = true;
                    }
                    vertex.props.push(name.to_string());
                }
            }
            ["end_header"] => break,
            _ => return Err(fmt(&format!("unexpected header line '{line}'"))),
        }
    }
    if !ascii {
        return Err(fmt("missing format line"));
    }
    let pos = |name: &str| vertex.props.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (pos("x"), pos("y"), pos("z")) else {
        return Err(fmt("vertex element lacks x/y/z"));
    };
    let rgb = match (pos("red"), pos("green"), pos("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };

    let mut body = lines.filter(|l| !l.trim().is_empty());
    let mut vertices = Vec::with_capacity(vertex.count);
    let mut colors = Vec::with_capacity(if rgb.is_some() { vertex.count } else { 0 });
    for n in 0..vertex.count {
        let line = body.next().ok_or_else(|| fmt(&format!("truncated at vertex {n}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| fmt(&format!("bad number in vertex {n}")))?;
        if vals.len() < vertex.props.len() {
            return Err(fmt(&format!("vertex {n} has {} values", vals.len())));
        }
        vertices.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        if let Some(c) = rgb {
            let scale = if float_color { 1.0 } else { 1.0 / 255.0 };
            colors.push(c.map(|i| (vals[i] * scale) as f32));
        }
    }
    let mut faces = Vec::with_capacity(face_count);
    for n in 0..face_count {
        let line = body.next().ok_or_else(|| fmt(&format!("truncated at face {n}")))?;
        let vals: Vec<u32> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| fmt(&format!("bad index in face {n}")))?;
        let k = *vals.first().ok_or_else(|| fmt("empty face"))? as usize;
        if k < 3 || vals.len() < k + 1 {
            return Err(fmt(&format!("face {n} is not a polygon")));
        }
        for m in 1..k - 1 {
            faces.push([vals[1], vals[1 + m], vals[2 + m]]);
        }
    }
    TriangleMesh::new(vertices, faces, colors)
}
