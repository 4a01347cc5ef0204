use std::collections::HashMap;

use super::mc_tables::{CORNERS, EDGES, EDGE_MASKS, TRIANGLES};
use super::TriangleMesh;
use crate::geometry::Vec3;
use crate::{Error, Result};

const NODE_AXIS: u8 = 3;

/// Regular scalar grid; sample `(i, j, k)` sits at `origin + step·(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub step: f64,
    /// Indexed `i + nx·(j + ny·k)`.
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: [usize; 3], origin: Vec3, step: f64, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Config(format!("grid dims must be at least 2 per axis, got {dims:?}")));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Config(format!("{} values for grid {dims:?}", values.len())));
        }
        if !(step > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        Ok(ScalarGrid {
            dims,
            origin,
            step,
            values,
        })
    }

    /// Samples `f` at every grid node.
    pub fn from_fn(dims: [usize; 3], origin: Vec3, step: f64, f: impl Fn(&Vec3) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(&(origin + Vec3::new(i as f64, j as f64, k as f64) * step)));
                }
            }
        }
        Self::new(dims, origin, step, values)
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.step
    }
}

/// Per-vertex color callback.
pub type VertexColor<'a> = &'a dyn Fn(&Vec3) -> [f32; 3];

/// Extracts the `iso` level set. Vertices on shared cell edges are merged; output
/// triangles face toward increasing values. Non-finite samples count as above `iso`.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64, color: Option<VertexColor>) -> Result<TriangleMesh> {
    let [nx, ny, nz] = grid.dims;
    let below = |v: f64| v < iso;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    // Key: (grid index of the lower corner, axis).
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut corner_vals = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let v = grid.value(i + off[0], j + off[1], k + off[2]);
                    corner_vals[c] = v;
                    if below(v) {
                        case |= 1 << c;
                    }
                }
                let mask = EDGE_MASKS[case];
                if mask == 0 {
                    continue;
                }
                let mut ids = [u32::MAX; 12];
                for (e, [a, b]) in EDGES.iter().enumerate() {
                    if mask & (1 << e) == 0 {
                        continue;
                    }
                    let (oa, ob) = (CORNERS[*a], CORNERS[*b]);
                    let (lo, hi) = if oa <= ob { (oa, ob) } else { (ob, oa) };
                    let axis = (0..3).find(|&d| lo[d] != hi[d]).expect("edge spans one axis") as u8;
                    let (va, vb) = (corner_vals[*a], corner_vals[*b]);
                    let t = if va.is_finite() && vb.is_finite() && va != vb {
                        ((iso - va) / (vb - va)).clamp(0.0, 1.0)
                    } else {
                        0.5
                    };
                    // Vertices that land on a grid node are shared by every edge there.
                    let node = |o: [usize; 3]| grid.index(i + o[0], j + o[1], k + o[2]);
                    let key = if t == 0.0 {
                        (node(oa), NODE_AXIS)
                    } else if t == 1.0 {
                        (node(ob), NODE_AXIS)
                    } else {
                        (node(lo), axis)
                    };
                    let id = *edge_vertex.entry(key).or_insert_with(|| {
                        let pa = grid.position(i + oa[0], j + oa[1], k + oa[2]);
                        let pb = grid.position(i + ob[0], j + ob[1], k + ob[2]);
                        vertices.push(pa + (pb - pa) * t);
                        (vertices.len() - 1) as u32
                    });
                    ids[e] = id;
                }
                for tri in TRIANGLES[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let f = [ids[tri[0] as usize], ids[tri[2] as usize], ids[tri[1] as usize]];
                    faces.push(f);
                }
            }
        }
    }

    // Drop triangles collapsed by vertices that landed on grid nodes.
    faces.retain(|f| {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        f[0] != f[1] && f[1] != f[2] && f[0] != f[2] && 0.5 * (b - a).cross(&(c - a)).norm() > super::MIN_FACE_AREA
    });
    let colors = match color {
        Some(cb) => vertices.iter().map(cb).collect(),
        None => Vec::new(),
    };
    TriangleMesh::new(vertices, faces, colors)
}
