use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bvh::{Bvh, RayHit};
use super::TriangleMesh;
use crate::geometry::{Pose, Vec3};
use crate::{Error, Result};

/// Intersection tolerance for the parity rays.
const RAY_EPS: f64 = 1e-9;
/// Hits this close to a triangle edge (in barycentric units) trigger a recast.
const EDGE_EPS: f64 = 1e-7;

/// Fixed, non-axis-aligned parity directions. The first clean one decides.
#[allow(clippy::approx_constant)]
const PARITY_DIRS: [[f64; 3]; 5] = [
    [0.5773, 0.5917, 0.5627],
    [-0.3219, 0.8561, 0.4044],
    [0.7071, -0.1137, -0.6979],
    [-0.6124, -0.4473, 0.6518],
    [0.1903, -0.9311, -0.3111],
];

/// How training targets measure distance to the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdfMode {
    /// Euclidean distance to the closest surface point.
    #[default]
    ClosestPoint,
    /// Distance to the nearest surface crossing along the camera ray.
    AlongRay,
}

/// Signed distance queries on a watertight mesh (negative inside).
#[derive(Debug, Clone)]
pub struct MeshSdf {
    mesh: TriangleMesh,
    bvh: Bvh,
}

impl MeshSdf {
    pub fn new(mesh: TriangleMesh) -> Result<Self> {
        if !mesh.is_watertight() {
            return Err(Error::SignUndefined("mesh is not watertight".into()));
        }
        let tris: Vec<[Vec3; 3]> = (0..mesh.faces().len()).map(|f| mesh.triangle(f)).collect();
        let bvh = Bvh::new(&tris);
        Ok(MeshSdf { mesh, bvh })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Closest surface point to `p` (model frame).
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        self.bvh.closest_point(p).expect("non-empty mesh").0
    }

    pub fn unsigned_distance(&self, p: &Vec3) -> f64 {
        self.bvh.closest_point(p).expect("non-empty mesh").1.sqrt()
    }

    /// Ray-parity containment test.
    pub fn contains(&self, p: &Vec3) -> bool {
        let mut hits = Vec::new();
        let mut votes = 0usize;
        for d in &PARITY_DIRS {
            let dir = Vec3::new(d[0], d[1], d[2]);
            self.bvh.intersect_all(p, &dir, f64::INFINITY, RAY_EPS, &mut hits);
            let inside = hits.len() % 2 == 1;
            if hits.iter().all(|h| !near_edge(h)) {
                return inside;
            }
            votes += inside as usize;
        }
        2 * votes > PARITY_DIRS.len()
    }

    /// Closest-point signed distance (mm), negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let d = self.unsigned_distance(p);
        if d == 0.0 {
            return 0.0;
        }
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    /// Signed distance along the camera ray through camera-frame point `x`.
    ///
    /// The magnitude is the distance from `x` to the nearest surface crossing on the
    /// ray from the camera center through `x`; the sign is containment of `x`.
    /// Returns `+∞` when the ray misses the object.
    pub fn signed_distance_along_ray(&self, x: &Vec3, pose: &Pose) -> Result<f64> {
        if !(x.z > 0.0) {
            return Err(Error::BehindCamera(x.z));
        }
        let origin = pose.inverse_transform(&Vec3::zeros());
        let p = pose.inverse_transform(x);
        let range = (p - origin).norm();
        let dir = (p - origin) / range;
        let mut hits = Vec::new();
        self.bvh.intersect_all(&origin, &dir, f64::INFINITY, RAY_EPS, &mut hits);
        let Some(d) = hits.iter().map(|h| (h.t - range).abs()).min_by(f64::total_cmp) else {
            return Ok(f64::INFINITY);
        };
        Ok(if self.contains(&p) { -d } else { d })
    }

    /// Target SDF of camera-frame point `x` under `pose` for the given mode.
    pub fn target(&self, x: &Vec3, pose: &Pose, mode: SdfMode) -> Result<f64> {
        match mode {
            SdfMode::ClosestPoint => Ok(self.signed_distance(&pose.inverse_transform(x))),
            SdfMode::AlongRay => self.signed_distance_along_ray(x, pose),
        }
    }
}

fn near_edge(h: &RayHit) -> bool {
    h.u < EDGE_EPS || h.v < EDGE_EPS || 1.0 - h.u - h.v < EDGE_EPS
}

/// Area-weighted uniform sampler over the mesh surface.
#[derive(Debug, Clone)]
pub struct SurfaceSampler {
    cumulative: Vec<f64>,
}

impl SurfaceSampler {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let mut acc = 0.0;
        let cumulative = (0..mesh.faces().len())
            .map(|f| {
                acc += mesh.face_area(f);
                acc
            })
            .collect();
        SurfaceSampler { cumulative }
    }

    /// Draws a surface point and its face index.
    pub fn sample<R: Rng + ?Sized>(&self, mesh: &TriangleMesh, rng: &mut R) -> (Vec3, usize) {
        let total = *self.cumulative.last().expect("non-empty mesh");
        let r = rng.random::<f64>() * total;
        let face = self.cumulative.partition_point(|&c| c <= r).min(self.cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        (a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2), face)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_mesh, icosphere};
    use crate::rng::stream_rng;

    #[test]
    fn cube_examples() {
        let s = MeshSdf::new(box_mesh(100.0, 100.0, 100.0)).unwrap();
        assert!((s.signed_distance(&Vec3::zeros()) + 50.0).abs() < 1e-12);
        assert!((s.signed_distance(&Vec3::new(100.0, 0.0, 0.0)) - 50.0).abs() < 1e-12);
        // Points whose parity rays would graze edges or vertices.
        assert!(s.signed_distance(&Vec3::new(10.0, 10.0, 10.0)) < 0.0);
        assert_eq!(s.signed_distance(&Vec3::new(50.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn open_mesh_rejected() {
        let m = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]], vec![]).unwrap();
        assert!(matches!(MeshSdf::new(m), Err(Error::SignUndefined(_))));
    }

    #[test]
    fn along_ray_examples() {
        let s = MeshSdf::new(icosphere(60.0, 4)).unwrap();
        let pose = Pose::from_translation(Vec3::new(0.0, 0.0, 1000.0));
        let center = Vec3::new(0.0, 0.0, 1000.0);
        let d = s.signed_distance_along_ray(&center, &pose).unwrap();
        // Icosphere vertices lie on the sphere; the ray through the center crosses a face
        // slightly inside it.
        assert!(d < -59.0 && d > -60.0 - 1e-9, "{d}");
        let miss = Vec3::new(300.0, 0.0, 1000.0);
        assert_eq!(s.signed_distance_along_ray(&miss, &pose).unwrap(), f64::INFINITY);
        assert!(s.signed_distance_along_ray(&Vec3::new(0.0, 0.0, -1.0), &pose).is_err());
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        let m = box_mesh(40.0, 60.0, 80.0);
        let sampler = SurfaceSampler::new(&m);
        let mut rng = stream_rng(0, 0);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            let (p, _) = sampler.sample(&m, &mut rng);
            let on: Vec<bool> = (0..3).map(|k| (p[k].abs() - [20.0, 30.0, 40.0][k]).abs() < 1e-9).collect();
            assert!(on.iter().any(|&b| b));
            for k in 0..3 {
                counts[k] += on[k] as usize;
            }
        }
        // Face pairs normal to x, y, z have areas 4800, 3200, 2400 (ratio 6:4:3).
        let f = |k: usize| counts[k] as f64 / 3000.0;
        assert!((f(0) - 6.0 / 13.0).abs() < 0.04 && (f(2) - 3.0 / 13.0).abs() < 0.04);
    }
}
