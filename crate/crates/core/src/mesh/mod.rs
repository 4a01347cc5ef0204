//! Triangle meshes and the queries built on them.

mod bvh;
mod marching_cubes;
mod mc_tables;
mod ply;
mod primitives;
mod sdf;
mod symmetry;

pub use bvh::{closest_point_on_triangle, ray_triangle_intersection, Aabb, Bvh, RayHit};
pub use marching_cubes::{marching_cubes, ScalarGrid};
pub use ply::{format_ply, parse_ply, read_ply, write_ply};
pub use primitives::{box_mesh, cylinder, extruded_polygon, icosphere, l_prism};
pub use sdf::{MeshSdf, SdfMode, SurfaceSampler};
pub use symmetry::{discretize_symmetry, SymmetrySet, SymmetrySpec, DEFAULT_SYMMETRY_TOLERANCE};

use std::collections::HashMap;

use crate::geometry::Vec3;
use crate::{Error, Result};

/// Faces with a smaller area (mm²) are rejected as degenerate.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with per-vertex colors, model frame, millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    colors: Vec<[f32; 3]>,
}

impl TriangleMesh {
    /// Checked constructor. `colors` may be empty (all vertices mid-gray).
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, colors: Vec<[f32; 3]>) -> Result<Self> {
        let colors = if colors.is_empty() {
            vec![[0.5; 3]; vertices.len()]
        } else {
            colors
        };
        if colors.len() != vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} colors for {} vertices",
                colors.len(),
                vertices.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len() as u32;
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("face {fi} index out of range ({f:?}, {n} vertices)")));
            }
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if !(area > MIN_FACE_AREA) {
                return Err(Error::InvalidMesh(format!("face {fi} has zero area")));
            }
        }
        Ok(TriangleMesh { vertices, faces, colors })
    }

    pub fn empty() -> Self {
        TriangleMesh {
            vertices: Vec::new(),
            faces: Vec::new(),
            colors: Vec::new(),
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn colors(&self) -> &[[f32; 3]] {
        &self.colors
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Every undirected edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut edges: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.faces.len() * 3);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges.values().all(|&c| c == 2)
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    /// Sphere centered on the bounding-box center that encloses every vertex.
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let center = self.bounding_box().center();
        let radius = self.vertices.iter().map(|v| (v - center).norm()).fold(0.0, f64::max);
        (center, radius)
    }

    /// Largest absolute model coordinate over all axes.
    pub fn half_extent(&self) -> f64 {
        self.vertices.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Maximum pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut best = 0.0f64;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                best = best.max((v[i] - v[j]).norm_squared());
            }
        }
        best.sqrt()
    }

    /// Colors each vertex by its normalized model coordinates (bounding box → unit cube).
    pub fn paint_by_coordinates(&mut self) {
        let bb = self.bounding_box();
        let ext = bb.max - bb.min;
        for (c, v) in self.colors.iter_mut().zip(&self.vertices) {
            for k in 0..3 {
                c[k] = if ext[k] > 0.0 { ((v[k] - bb.min[k]) / ext[k]) as f32 } else { 0.5 };
            }
        }
    }

    pub fn set_colors(&mut self, colors: Vec<[f32; 3]>) -> Result<()> {
        if colors.len() != self.vertices.len() {
            return Err(Error::InvalidMesh("color count mismatch".into()));
        }
        self.colors = colors;
        Ok(())
    }
}
