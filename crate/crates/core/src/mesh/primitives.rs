//! Procedural watertight meshes, centered on the origin, outward-facing CCW winding.

use std::collections::HashMap;

use super::TriangleMesh;
use crate::geometry::{Vec2, Vec3};
use crate::{Error, Result};

fn finish(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> TriangleMesh {
    let mut m = TriangleMesh::new(vertices, faces, Vec::new()).expect("primitive mesh is valid");
    m.paint_by_coordinates();
    m
}

/// Axis-aligned box with side lengths `sx × sy × sz`.
pub fn box_mesh(sx: f64, sy: f64, sz: f64) -> TriangleMesh {
    let h = Vec3::new(sx, sy, sz) * 0.5;
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 != 0 { h.x } else { -h.x },
                if i & 2 != 0 { h.y } else { -h.y },
                if i & 4 != 0 { h.z } else { -h.z },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    finish(vertices, faces)
}

/// Subdivided icosahedron projected onto a sphere of `radius`.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vs: &mut Vec<Vec3>| -> u32 {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vs.push(((vs[a as usize] + vs[b as usize]) * 0.5).normalize());
                (vs.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    finish(vertices, faces)
}

/// Closed cylinder along z with `segments` sides.
pub fn cylinder(radius: f64, height: f64, segments: u32) -> TriangleMesh {
    let n = segments.max(3);
    let hz = height * 0.5;
    let mut vertices = Vec::with_capacity(2 * n as usize + 2);
    for z in [-hz, hz] {
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom = 2 * n;
    let top = 2 * n + 1;
    vertices.push(Vec3::new(0.0, 0.0, -hz));
    vertices.push(Vec3::new(0.0, 0.0, hz));
    let mut faces = Vec::with_capacity(4 * n as usize);
    for k in 0..n {
        let k1 = (k + 1) % n;
        faces.push([k, k1, n + k1]);
        faces.push([k, n + k1, n + k]);
        faces.push([bottom, k1, k]);
        faces.push([top, n + k, n + k1]);
    }
    finish(vertices, faces)
}

/// Prism over a simple polygon in the xy-plane (any winding), extruded along z and
/// centered on its bounding box.
pub fn extruded_polygon(polygon: &[Vec2], height: f64) -> Result<TriangleMesh> {
    let n = polygon.len();
    if n < 3 {
        return Err(Error::InvalidMesh("polygon needs at least 3 vertices".into()));
    }
    let mut poly = polygon.to_vec();
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    let caps = ear_clip(&poly)?;
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for p in &poly {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let c = (lo + hi) * 0.5;
    let hz = height * 0.5;
    let mut vertices = Vec::with_capacity(2 * n);
    for z in [-hz, hz] {
        vertices.extend(poly.iter().map(|p| Vec3::new(p.x - c.x, p.y - c.y, z)));
    }
    let n32 = n as u32;
    let mut faces = Vec::with_capacity(2 * caps.len() + 2 * n);
    for [a, b, d] in &caps {
        faces.push([*a, *d, *b]);
        faces.push([n32 + a, n32 + b, n32 + d]);
    }
    for k in 0..n32 {
        let k1 = (k + 1) % n32;
        faces.push([k, k1, n32 + k1]);
        faces.push([k, n32 + k1, n32 + k]);
    }
    let mut m = TriangleMesh::new(vertices, faces, Vec::new())?;
    m.paint_by_coordinates();
    Ok(m)
}

/// L-shaped prism with unequal arms: no proper rotational symmetry.
pub fn l_prism() -> TriangleMesh {
    let outline = [
        Vec2::new(0.0, 0.0),
        Vec2::new(120.0, 0.0),
        Vec2::new(120.0, 35.0),
        Vec2::new(40.0, 35.0),
        Vec2::new(40.0, 80.0),
        Vec2::new(0.0, 80.0),
    ];
    extruded_polygon(&outline, 50.0).expect("L outline is simple")
}

fn signed_area(p: &[Vec2]) -> f64 {
    let n = p.len();
    0.5 * (0..n).map(|i| p[i].x * p[(i + 1) % n].y - p[(i + 1) % n].x * p[i].y).sum::<f64>()
}

fn cross2(o: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Ear clipping of a CCW simple polygon.
fn ear_clip(poly: &[Vec2]) -> Result<Vec<[u32; 3]>> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::with_capacity(poly.len() - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&i| {
            let (a, b, c) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            if cross2(&poly[a], &poly[b], &poly[c]) <= 0.0 {
                return false;
            }
            idx.iter().all(|&q| {
                q == a || q == b || q == c || {
                    let p = &poly[q];
                    !(cross2(&poly[a], &poly[b], p) >= 0.0 && cross2(&poly[b], &poly[c], p) >= 0.0 && cross2(&poly[c], &poly[a], p) >= 0.0)
                }
            })
        });
        let Some(i) = ear else {
            return Err(Error::InvalidMesh("polygon is not simple".into()));
        };
        out.push([idx[(i + m - 1) % m] as u32, idx[i] as u32, idx[(i + 1) % m] as u32]);
        idx.remove(i);
    }
    out.push([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
    Ok(out)
}
