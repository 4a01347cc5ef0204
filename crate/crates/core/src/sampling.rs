//! Query points: pose-aware training samples and the test-time frustum grid.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{PinholeCamera, Pose, Vec3};
use crate::mesh::{MeshSdf, SdfMode, SurfaceSampler};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Query points in the camera frame, with ground truth when sampled for training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryBatch {
    pub points: Vec<Vec3>,
    /// Model-frame points `R̄ᵀ(x − t̄)`; empty for test grids.
    pub gt_y: Vec<Vec3>,
    /// Signed distances of `gt_y`; empty for test grids.
    pub gt_sdf: Vec<f64>,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Writes the points as little-endian `f32` triplets.
    pub fn write_points_f32(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.points.len() * 12);
        for p in &self.points {
            for c in p.iter() {
                bytes.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        crate::image::write_file(path, &bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Multiplier on the candidate pool sizes (12500 near-surface, 1000 ball, 1000 frustum).
    pub pool_scale: f64,
    /// Points selected on each side of the surface.
    pub points_per_side: usize,
    /// Standard deviation of the near-surface offsets (mm).
    pub surface_sigma: f64,
    /// Depth range of the camera frustum (mm).
    pub z_near: f64,
    pub z_far: f64,
    pub sdf_mode: SdfMode,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            pool_scale: 1.0,
            points_per_side: 2500,
            surface_sigma: 5.0,
            z_near: 700.0,
            z_far: 1300.0,
            sdf_mode: SdfMode::ClosestPoint,
        }
    }
}

pub const NEAR_SURFACE_POOL: usize = 12500;
pub const BALL_POOL: usize = 1000;
pub const FRUSTUM_POOL: usize = 1000;

/// Rounds of fresh near-surface draws allowed when one side underfills.
const TOP_UP_ROUNDS: usize = 8;

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pool_scale > 0.0) || self.points_per_side == 0 || !(self.surface_sigma > 0.0) {
            return Err(Error::Config(
                "sampling pool_scale, points_per_side and surface_sigma must be positive".into(),
            ));
        }
        if !(self.z_near > 0.0 && self.z_near < self.z_far) {
            return Err(Error::Config(format!(
                "need 0 < z_near < z_far, got [{}, {}]",
                self.z_near, self.z_far
            )));
        }
        Ok(())
    }

    fn pool(&self, n: usize) -> usize {
        ((n as f64 * self.pool_scale).round() as usize).max(1)
    }

    fn in_frustum(&self, cam: &PinholeCamera, x: &Vec3) -> bool {
        x.z >= self.z_near && x.z <= self.z_far && cam.project(x).is_ok_and(|uv| cam.contains(&uv))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplingStats {
    pub candidates: usize,
    /// Extra near-surface rounds drawn because a side underfilled.
    pub top_up_rounds: usize,
}

/// Near-surface candidates: area-uniform surface points plus isotropic Gaussian
/// offsets, mapped to the camera frame and clipped to the frustum.
pub fn near_surface_pool<R: Rng + ?Sized>(
    sdf: &MeshSdf,
    sampler: &SurfaceSampler,
    pose: &Pose,
    cam: &PinholeCamera,
    cfg: &SamplingConfig,
    count: usize,
    rng: &mut R,
) -> Vec<Vec3> {
    let noise = Normal::new(0.0, cfg.surface_sigma).expect("positive sigma");
    (0..count)
        .map(|_| {
            let (v, _) = sampler.sample(sdf.mesh(), rng);
            let off = Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
            pose.transform(&(v + off))
        })
        .filter(|x| cfg.in_frustum(cam, x))
        .collect()
}

/// Training query points for one image.
///
/// Candidates come from three pools (near the surface, the model's bounding sphere,
/// and the camera frustum). Visiting them in random order, the first
/// `points_per_side` inside (ψ < 0) and outside (ψ ≥ 0) points are kept, which is a
/// uniform draw without replacement per side. Occlusion is ignored.
pub fn sample_training_points(
    sdf: &MeshSdf,
    pose: &Pose,
    cam: &PinholeCamera,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<(QueryBatch, SamplingStats)> {
    cfg.validate()?;
    let mut rng = stream_rng(seed, 1);
    let sampler = SurfaceSampler::new(sdf.mesh());
    let (center, radius) = sdf.mesh().bounding_sphere();

    let mut pool = near_surface_pool(sdf, &sampler, pose, cam, cfg, cfg.pool(NEAR_SURFACE_POOL), &mut rng);
    for _ in 0..cfg.pool(BALL_POOL) {
        let y = center + random_in_ball(&mut rng) * radius;
        let x = pose.transform(&y);
        if cfg.in_frustum(cam, &x) {
            pool.push(x);
        }
    }
    for _ in 0..cfg.pool(FRUSTUM_POOL) {
        pool.push(random_in_frustum(cam, cfg.z_near, cfg.z_far, &mut rng));
    }
    pool.shuffle(&mut rng);

    let n = cfg.points_per_side;
    let mut stats = SamplingStats::default();
    let mut inside: Vec<(Vec3, Vec3, f64)> = Vec::with_capacity(n);
    let mut outside: Vec<(Vec3, Vec3, f64)> = Vec::with_capacity(n);
    let classify = |pool: &[Vec3], inside: &mut Vec<_>, outside: &mut Vec<_>| -> Result<()> {
        for x in pool {
            if inside.len() >= n && outside.len() >= n {
                break;
            }
            let y = pose.inverse_transform(x);
            let s = sdf.target(x, pose, cfg.sdf_mode)?;
            let side: &mut Vec<_> = if s < 0.0 { inside } else { outside };
            if side.len() < n {
                side.push((*x, y, s));
            }
        }
        Ok(())
    };
    stats.candidates = pool.len();
    classify(&pool, &mut inside, &mut outside)?;
    while inside.len() < n || outside.len() < n {
        if stats.top_up_rounds == TOP_UP_ROUNDS {
            return Err(Error::Sampling(format!(
                "{} inside / {} outside points after {} top-up rounds, need {n} each",
                inside.len(),
                outside.len(),
                TOP_UP_ROUNDS
            )));
        }
        stats.top_up_rounds += 1;
        let extra = near_surface_pool(sdf, &sampler, pose, cam, cfg, cfg.pool(NEAR_SURFACE_POOL), &mut rng);
        stats.candidates += extra.len();
        classify(&extra, &mut inside, &mut outside)?;
    }
    if stats.top_up_rounds > 0 {
        log::warn!("training sampler topped up {} time(s)", stats.top_up_rounds);
    }

    let mut batch = QueryBatch::default();
    for (x, y, s) in inside.into_iter().chain(outside) {
        batch.points.push(x);
        batch.gt_y.push(y);
        batch.gt_sdf.push(s);
    }
    Ok((batch, stats))
}

fn random_in_ball<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let p = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.norm_squared() <= 1.0 {
            return p;
        }
    }
}

/// Uniform in the frustum volume: depth density ∝ z², then a uniform image position.
fn random_in_frustum<R: Rng + ?Sized>(cam: &PinholeCamera, z_near: f64, z_far: f64, rng: &mut R) -> Vec3 {
    let (a, b) = (z_near.powi(3), z_far.powi(3));
    let z = (a + rng.random::<f64>() * (b - a)).cbrt();
    let u = rng.random::<f64>() * cam.width as f64;
    let v = rng.random::<f64>() * cam.height as f64;
    cam.backproject(u, v, z)
}

/// Number of slabs and the depth of the first slab center for a depth range.
pub fn grid_slabs(z_near: f64, z_far: f64, step: f64) -> (usize, f64) {
    let nz = (((z_far - z_near) / step) + 1e-9).floor().max(1.0) as usize;
    let z_mid = 0.5 * (z_near + z_far);
    (nz, z_mid - 0.5 * (nz as f64 - 1.0) * step)
}

/// Voxel centers of a `step`-sized lattice filling the frustum between `z_near` and
/// `z_far`. Lateral centers sit at `(i + ½)·step`; slabs are centered in the depth
/// range. Points are ordered by depth slab, then row, then column.
pub fn sample_test_grid(cam: &PinholeCamera, z_near: f64, z_far: f64, step: f64) -> Result<QueryBatch> {
    if !(z_near > 0.0 && z_near < z_far) {
        return Err(Error::Config(format!("need 0 < z_near < z_far, got [{z_near}, {z_far}]")));
    }
    if !(step > 0.0) {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    let (nz, z0) = grid_slabs(z_near, z_far, step);
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut points = Vec::new();
    for k in 0..nz {
        let z = z0 + k as f64 * step;
        let x_lo = -cam.cx / cam.fx * z;
        let x_hi = (w - cam.cx) / cam.fx * z;
        let y_lo = -cam.cy / cam.fy * z;
        let y_hi = (h - cam.cy) / cam.fy * z;
        let (i0, i1) = ((x_lo / step - 0.5).floor() as i64, (x_hi / step - 0.5).ceil() as i64);
        let (j0, j1) = ((y_lo / step - 0.5).floor() as i64, (y_hi / step - 0.5).ceil() as i64);
        for j in j0..=j1 {
            let y = (j as f64 + 0.5) * step;
            for i in i0..=i1 {
                let x = Vec3::new((i as f64 + 0.5) * step, y, z);
                if cam.project(&x).is_ok_and(|uv| cam.contains(&uv)) {
                    points.push(x);
                }
            }
        }
    }
    Ok(QueryBatch {
        points,
        ..Default::default()
    })
}
