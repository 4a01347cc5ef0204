//! Z-buffered triangle rasterization with perspective-correct interpolation.
//!
//! Pixel `(i, j)` is sampled at its center `(i + 0.5, j + 0.5)`. Depth is the
//! camera-frame `z` of the surface point hit by the ray through that center.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{PinholeCamera, Pose, Vec2, Vec3};
use crate::image::{DepthMap, RgbImage};
use crate::mesh::TriangleMesh;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Triangles are clipped against this camera-frame depth (mm).
pub const NEAR_PLANE_MM: f64 = 1.0;

/// Share of the vertex color that is lit independently of the surface orientation.
pub const AMBIENT: f32 = 0.3;

/// Barycentric slack so that pixel centers on a shared edge are never missed.
const EDGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    Solid {
        color: [f32; 3],
    },
    /// Vertical blend from `top` (row 0) to `bottom`.
    Gradient {
        top: [f32; 3],
        bottom: [f32; 3],
    },
    /// `base` plus independent uniform noise in `±amplitude/2` per channel.
    Noise {
        base: [f32; 3],
        amplitude: f32,
    },
}

impl Default for Background {
    fn default() -> Self {
        Background::Solid { color: [0.0; 3] }
    }
}

impl Background {
    fn paint(&self, img: &mut RgbImage, seed: u64) {
        let h = img.height().max(2) - 1;
        match *self {
            Background::Solid { color } => img.pixels_mut().fill(color),
            Background::Gradient { top, bottom } => {
                let w = img.width() as usize;
                for (k, px) in img.pixels_mut().iter_mut().enumerate() {
                    let a = (k / w) as f32 / h as f32;
                    *px = std::array::from_fn(|c| top[c] + (bottom[c] - top[c]) * a);
                }
            }
            Background::Noise { base, amplitude } => {
                let mut rng = stream_rng(seed, 0);
                for px in img.pixels_mut() {
                    *px = std::array::from_fn(|c| (base[c] + amplitude * (rng.random::<f32>() - 0.5)).clamp(0.0, 1.0));
                }
            }
        }
    }
}

/// Geometry that hides the target but is not part of its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Occluder {
    pub mesh: TriangleMesh,
    pub pose: Pose,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub rgb: RgbImage,
    /// Scene depth including occluders; 0 where nothing was hit.
    pub depth: DepthMap,
    /// Pixels where the target is the front-most surface.
    pub mask: Vec<bool>,
    /// Target silhouette ignoring occluders.
    pub silhouette: Vec<bool>,
    /// Depth of the target alone; 0 off the silhouette.
    pub target_depth: DepthMap,
    /// Model-frame surface point per pixel, meaningful on `silhouette`.
    pub objcoord: Vec<Vec3>,
    pub visib_fraction: f64,
}

impl RenderOutput {
    pub fn visible_pixels(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn silhouette_pixels(&self) -> usize {
        self.silhouette.iter().filter(|m| **m).count()
    }
}

#[derive(Clone, Copy)]
struct Vertex {
    p: Vec3,
    m: Vec3,
    c: [f32; 3],
}

impl Vertex {
    fn lerp(&self, o: &Vertex, t: f64) -> Vertex {
        let tf = t as f32;
        Vertex {
            p: self.p + (o.p - self.p) * t,
            m: self.m + (o.m - self.m) * t,
            c: std::array::from_fn(|k| self.c[k] + (o.c[k] - self.c[k]) * tf),
        }
    }
}

struct Frame {
    width: usize,
    height: usize,
    z: Vec<f64>,
    rgb: Vec<[f32; 3]>,
    objcoord: Vec<Vec3>,
    target: Vec<bool>,
}

impl Frame {
    fn new(cam: &PinholeCamera) -> Self {
        let n = cam.pixel_count();
        Frame {
            width: cam.width as usize,
            height: cam.height as usize,
            z: vec![f64::INFINITY; n],
            rgb: vec![[0.0; 3]; n],
            objcoord: vec![Vec3::zeros(); n],
            target: vec![false; n],
        }
    }
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Sutherland-Hodgman clip of a triangle against `z ≥ NEAR_PLANE_MM`.
fn clip_near(tri: [Vertex; 3]) -> Vec<Vertex> {
    let mut out = Vec::with_capacity(4);
    for k in 0..3 {
        let a = &tri[k];
        let b = &tri[(k + 1) % 3];
        let ina = a.p.z >= NEAR_PLANE_MM;
        let inb = b.p.z >= NEAR_PLANE_MM;
        if ina {
            out.push(*a);
        }
        if ina != inb {
            out.push(a.lerp(b, (NEAR_PLANE_MM - a.p.z) / (b.p.z - a.p.z)));
        }
    }
    out
}

fn draw_triangle(frame: &mut Frame, cam: &PinholeCamera, v: [&Vertex; 3], shade: f32, is_target: bool) {
    let s = v.map(|x| cam.project_unchecked(&x.p));
    let area = edge(&s[0], &s[1], &s[2]);
    if !(area.abs() > 1e-12) {
        return;
    }
    let lo_u = s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let hi_u = s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let lo_v = s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let hi_v = s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let (w, h) = (frame.width as f64, frame.height as f64);
    if hi_u < 0.0 || hi_v < 0.0 || lo_u >= w || lo_v >= h {
        return;
    }
    let i0 = (lo_u - 0.5).ceil().max(0.0) as usize;
    let i1 = ((hi_u - 0.5).floor().min(w - 1.0)) as isize;
    let j0 = (lo_v - 0.5).ceil().max(0.0) as usize;
    let j1 = ((hi_v - 0.5).floor().min(h - 1.0)) as isize;
    if i1 < i0 as isize || j1 < j0 as isize {
        return;
    }
    let inv_z = v.map(|x| 1.0 / x.p.z);
    for j in j0..=j1 as usize {
        for i in i0..=i1 as usize {
            let c = PinholeCamera::pixel_center(i as u32, j as u32);
            let b = [
                edge(&s[1], &s[2], &c) / area,
                edge(&s[2], &s[0], &c) / area,
                edge(&s[0], &s[1], &c) / area,
            ];
            if b.iter().any(|x| *x < -EDGE_SLACK) {
                continue;
            }
            let iz = b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2];
            let z = 1.0 / iz;
            let idx = j * frame.width + i;
            if !(z < frame.z[idx]) {
                continue;
            }
            let beta = [b[0] * inv_z[0] * z, b[1] * inv_z[1] * z, b[2] * inv_z[2] * z];
            frame.z[idx] = z;
            frame.target[idx] = is_target;
            frame.rgb[idx] = std::array::from_fn(|k| {
                let col = beta[0] as f32 * v[0].c[k] + beta[1] as f32 * v[1].c[k] + beta[2] as f32 * v[2].c[k];
                (col * shade).clamp(0.0, 1.0)
            });
            if is_target {
                frame.objcoord[idx] = v[0].m * beta[0] + v[1].m * beta[1] + v[2].m * beta[2];
            }
        }
    }
}

fn draw_mesh(frame: &mut Frame, cam: &PinholeCamera, mesh: &TriangleMesh, pose: &Pose, is_target: bool) {
    let cam_pts: Vec<Vec3> = mesh.vertices().iter().map(|v| pose.transform(v)).collect();
    for f in mesh.faces() {
        let tri = f.map(|k| Vertex {
            p: cam_pts[k as usize],
            m: mesh.vertices()[k as usize],
            c: mesh.colors()[k as usize],
        });
        if tri.iter().all(|x| x.p.z < NEAR_PLANE_MM) {
            continue;
        }
        // Flat headlight shading from the original (unclipped) face.
        let n = (tri[1].p - tri[0].p).cross(&(tri[2].p - tri[0].p));
        let centroid = (tri[0].p + tri[1].p + tri[2].p) / 3.0;
        let cos = (n.dot(&centroid) / (n.norm() * centroid.norm())).abs();
        let shade = AMBIENT + (1.0 - AMBIENT) * if cos.is_finite() { cos as f32 } else { 0.0 };
        let poly = clip_near(tri);
        for k in 1..poly.len().saturating_sub(1) {
            draw_triangle(frame, cam, [&poly[0], &poly[k], &poly[k + 1]], shade, is_target);
        }
    }
}

/// Renders `mesh` under `pose` with optional occluders over a background.
///
/// `seed` only drives the noise background.
pub fn rasterize(
    mesh: &TriangleMesh,
    pose: &Pose,
    cam: &PinholeCamera,
    occluders: &[Occluder],
    background: &Background,
    seed: u64,
) -> Result<RenderOutput> {
    cam.validate()?;
    pose.validate()?;
    if !mesh.is_empty() {
        let max_z = mesh
            .vertices()
            .iter()
            .map(|v| pose.transform(v).z)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_z <= 0.0 {
            return Err(Error::BehindCamera(max_z));
        }
    }
    let mut frame = Frame::new(cam);
    draw_mesh(&mut frame, cam, mesh, pose, true);
    let silhouette = frame.target.clone();
    let target_z: Vec<f32> = frame.z.iter().map(|z| if z.is_finite() { *z as f32 } else { 0.0 }).collect();
    for o in occluders {
        o.pose.validate()?;
        draw_mesh(&mut frame, cam, &o.mesh, &o.pose, false);
    }

    let mut rgb = RgbImage::new(cam.width, cam.height);
    background.paint(&mut rgb, seed);
    for (px, (z, c)) in rgb.pixels_mut().iter_mut().zip(frame.z.iter().zip(&frame.rgb)) {
        if z.is_finite() {
            *px = *c;
        }
    }
    let depth: Vec<f32> = frame.z.iter().map(|z| if z.is_finite() { *z as f32 } else { 0.0 }).collect();
    let full = silhouette.iter().filter(|m| **m).count();
    let visible = frame.target.iter().filter(|m| **m).count();
    Ok(RenderOutput {
        rgb,
        depth: DepthMap::from_vec(cam.width, cam.height, depth)?,
        mask: frame.target,
        silhouette,
        target_depth: DepthMap::from_vec(cam.width, cam.height, target_z)?,
        objcoord: frame.objcoord,
        visib_fraction: if full == 0 { 0.0 } else { visible as f64 / full as f64 },
    })
}

/// Depth of `mesh` alone under `pose`; 0 where it is not hit.
pub fn render_depth(mesh: &TriangleMesh, pose: &Pose, cam: &PinholeCamera) -> Result<DepthMap> {
    Ok(rasterize(mesh, pose, cam, &[], &Background::default(), 0)?.depth)
}

/// Flat convex polygon facing the camera at depth `z`, covering the image points
/// `q` with `dir·q < offset` (pixel units) plus a margin around the image.
pub fn half_plane_occluder(cam: &PinholeCamera, dir: Vec2, offset: f64, z: f64, color: [f32; 3]) -> Result<Option<Occluder>> {
    if !(z >= NEAR_PLANE_MM) {
        return Err(Error::Config(format!("occluder depth {z} is in front of the near plane")));
    }
    let m = 4.0;
    let (w, h) = (cam.width as f64, cam.height as f64);
    let rect = [
        Vec2::new(-m, -m),
        Vec2::new(w + m, -m),
        Vec2::new(w + m, h + m),
        Vec2::new(-m, h + m),
    ];
    let side = |q: &Vec2| offset - dir.dot(q);
    let mut poly: Vec<Vec2> = Vec::with_capacity(5);
    for k in 0..4 {
        let (a, b) = (rect[k], rect[(k + 1) % 4]);
        let (sa, sb) = (side(&a), side(&b));
        if sa > 0.0 {
            poly.push(a);
        }
        if (sa > 0.0) != (sb > 0.0) {
            poly.push(a + (b - a) * (sa / (sa - sb)));
        }
    }
    poly.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    if poly.len() < 3 {
        return Ok(None);
    }
    let vertices: Vec<Vec3> = poly.iter().map(|q| cam.backproject(q.x, q.y, z)).collect();
    let faces: Vec<[u32; 3]> = (1..poly.len() as u32 - 1)
        .map(|k| [0, k, k + 1])
        .filter(|f| {
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            (b - a).cross(&(c - a)).norm() > 1e-9
        })
        .collect();
    if faces.is_empty() {
        return Ok(None);
    }
    let colors = vec![color; vertices.len()];
    Ok(Some(Occluder {
        mesh: TriangleMesh::new(vertices, faces, colors)?,
        pose: Pose::identity(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::box_mesh;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(600.0, 600.0, 160.0, 120.0, 320, 240).unwrap()
    }

    #[test]
    fn cube_front_face_depth() {
        let pose = Pose::from_translation(Vec3::new(0.0, 0.0, 1000.0));
        let r = rasterize(&box_mesh(100.0, 100.0, 100.0), &pose, &cam(), &[], &Background::default(), 0).unwrap();
        assert!((r.depth.get(160, 120) - 950.0).abs() < 1e-3);
        // The front face spans 63.2 px, i.e. 64 pixel centers per axis.
        let n = r.visible_pixels();
        assert_eq!(n, 64 * 64);
        assert_eq!(r.visib_fraction, 1.0);
        for (k, m) in r.mask.iter().enumerate() {
            assert_eq!(*m, r.depth.values()[k] > 0.0);
        }
    }

    #[test]
    fn nothing_in_view() {
        let pose = Pose::from_translation(Vec3::new(5000.0, 0.0, 1000.0));
        let r = rasterize(&box_mesh(100.0, 100.0, 100.0), &pose, &cam(), &[], &Background::default(), 0).unwrap();
        assert!(r.mask.iter().all(|m| !m));
        assert!(r.depth.values().iter().all(|d| *d == 0.0));
        assert_eq!(r.visib_fraction, 0.0);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let pose = Pose::from_translation(Vec3::new(0.0, 0.0, -500.0));
        let r = rasterize(&box_mesh(100.0, 100.0, 100.0), &pose, &cam(), &[], &Background::default(), 0);
        assert!(matches!(r, Err(Error::BehindCamera(_))));
    }

    #[test]
    fn straddling_the_camera_is_clipped() {
        let pose = Pose::from_translation(Vec3::new(0.0, 0.0, 20.0));
        let r = rasterize(&box_mesh(100.0, 100.0, 100.0), &pose, &cam(), &[], &Background::default(), 0).unwrap();
        // The camera sits inside the box; the back face fills the view at z = 70.
        assert!(r.depth.values().iter().all(|d| (*d - 70.0).abs() < 1e-3));
    }

    #[test]
    fn half_occluder_halves_visibility() {
        let c = cam();
        let pose = Pose::from_translation(Vec3::new(0.0, 0.0, 1000.0));
        let occ = half_plane_occluder(&c, Vec2::new(1.0, 0.0), 160.0, 800.0, [0.2, 0.9, 0.1])
            .unwrap()
            .unwrap();
        let r = rasterize(&box_mesh(100.0, 100.0, 100.0), &pose, &c, &[occ], &Background::default(), 0).unwrap();
        assert!((r.visib_fraction - 0.5).abs() < 0.05, "{}", r.visib_fraction);
        assert!((r.depth.get(10, 120) - 800.0).abs() < 1e-3);
        assert!(!r.mask[120 * 320 + 150] && r.mask[120 * 320 + 170]);
        assert!(r.silhouette[120 * 320 + 150]);
    }

    #[test]
    fn backgrounds() {
        let mut img = RgbImage::new(4, 3);
        Background::Gradient {
            top: [0.0; 3],
            bottom: [1.0; 3],
        }
        .paint(&mut img, 0);
        assert_eq!(img.get(0, 0), [0.0; 3]);
        assert_eq!(img.get(3, 2), [1.0; 3]);
        let mut a = RgbImage::new(4, 3);
        let noise = Background::Noise {
            base: [0.5; 3],
            amplitude: 0.2,
        };
        noise.paint(&mut a, 9);
        let mut b = RgbImage::new(4, 3);
        noise.paint(&mut b, 9);
        assert_eq!(a, b);
        assert!(a.pixels().iter().flatten().all(|c| (c - 0.5).abs() <= 0.1));
    }
}
