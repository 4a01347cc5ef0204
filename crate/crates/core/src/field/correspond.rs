use std::path::Path;

use super::model::NcfModel;
use crate::geometry::{ransac_fit, Correspondence, CorrespondenceSet, PinholeCamera, Pose, RansacOutcome, Vec3};
use crate::image::RgbImage;
use crate::mesh::{MeshSdf, SdfMode};
use crate::{Error, Result};

/// Share of δ below which a prediction counts as near the surface. Network outputs
/// are `tanh`-bounded by δ, so saturated predictions are excluded.
pub const DEFAULT_KEEP_FRACTION: f64 = 0.999;

/// Anything that maps camera-frame query points to `(y, s)` predictions.
pub trait CorrespondenceField: Sync {
    fn predict(&self, image: &RgbImage, cam: &PinholeCamera, points: &[Vec3]) -> Result<Vec<(Vec3, f64)>>;
}

impl CorrespondenceField for NcfModel {
    fn predict(&self, image: &RgbImage, cam: &PinholeCamera, points: &[Vec3]) -> Result<Vec<(Vec3, f64)>> {
        NcfModel::predict(self, image, cam, points)
    }
}

/// Ground-truth field: `y = R̄ᵀ(x − t̄)` and `s = ψ(y)`. Ignores the image.
#[derive(Debug, Clone, Copy)]
pub struct OracleField<'a> {
    pub sdf: &'a MeshSdf,
    pub pose: Pose,
    pub mode: SdfMode,
}

impl CorrespondenceField for OracleField<'_> {
    fn predict(&self, _image: &RgbImage, _cam: &PinholeCamera, points: &[Vec3]) -> Result<Vec<(Vec3, f64)>> {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|x| Ok((self.pose.inverse_transform(x), self.sdf.target(x, &self.pose, self.mode)?)))
            .collect()
    }
}

/// Links every grid point whose predicted `|s|` is below `keep_fraction·δ` with its
/// predicted object coordinates, in grid order.
pub fn extract_correspondences(
    field: &dyn CorrespondenceField,
    image: &RgbImage,
    cam: &PinholeCamera,
    grid: &[Vec3],
    delta: f64,
    keep_fraction: f64,
) -> Result<CorrespondenceSet> {
    let pred = field.predict(image, cam, grid)?;
    let pairs = grid.iter().zip(pred).map(|(x, (y, s))| Correspondence { x: *x, y, s });
    let set = CorrespondenceSet::new(pairs, delta * keep_fraction);
    if set.is_empty() {
        return Err(Error::NoNearSurface);
    }
    Ok(set)
}

/// Settings of the correspondence-to-pose stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateParams {
    pub delta: f64,
    pub keep_fraction: f64,
    pub iterations: usize,
    pub tau3d: f64,
    pub seed: u64,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams {
            delta: crate::DEFAULT_DELTA_MM,
            keep_fraction: DEFAULT_KEEP_FRACTION,
            iterations: crate::DEFAULT_RANSAC_ITERS,
            tau3d: crate::DEFAULT_TAU_3D_MM,
            seed: 0,
        }
    }
}

/// Correspondences on `grid` followed by Kabsch-RANSAC.
pub fn estimate_pose(
    field: &dyn CorrespondenceField,
    image: &RgbImage,
    cam: &PinholeCamera,
    grid: &[Vec3],
    p: &EstimateParams,
) -> Result<(RansacOutcome, CorrespondenceSet)> {
    let c = extract_correspondences(field, image, cam, grid, p.delta, p.keep_fraction)?;
    let fit = ransac_fit(&c, p.iterations, p.tau3d, p.seed)?;
    Ok((fit, c))
}

pub const CORR_MAGIC: &[u8; 4] = b"NCFC";
pub const CORR_VERSION: u32 = 1;

/// Correspondence dump: magic `NCFC`, `u32` version, `u32` values per record (7),
/// `u64` record count, then per record `x₀ x₁ x₂ y₀ y₁ y₂ s` as `f64`, all
/// little-endian.
pub fn correspondences_to_bytes(c: &CorrespondenceSet) -> Vec<u8> {
    let mut b = Vec::with_capacity(20 + c.len() * 56);
    b.extend_from_slice(CORR_MAGIC);
    b.extend_from_slice(&CORR_VERSION.to_le_bytes());
    b.extend_from_slice(&7u32.to_le_bytes());
    b.extend_from_slice(&(c.len() as u64).to_le_bytes());
    for p in c.pairs() {
        for v in [p.x.x, p.x.y, p.x.z, p.y.x, p.y.y, p.y.z, p.s] {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

pub fn correspondences_from_bytes(b: &[u8]) -> Result<CorrespondenceSet> {
    let bad = |m: &str| Error::Format(format!("correspondence dump: {m}"));
    if b.len() < 20 || &b[..4] != CORR_MAGIC {
        return Err(bad("bad header"));
    }
    let u32_at = |k: usize| u32::from_le_bytes(b[k..k + 4].try_into().expect("4 bytes"));
    if u32_at(4) != CORR_VERSION || u32_at(8) != 7 {
        return Err(bad("unsupported version or record size"));
    }
    let n = u64::from_le_bytes(b[12..20].try_into().expect("8 bytes")) as usize;
    if n.checked_mul(56).and_then(|v| v.checked_add(20)) != Some(b.len()) {
        return Err(bad("length does not match the record count"));
    }
    let vals: Vec<f64> = b[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let pairs = vals.chunks_exact(7).map(|r| Correspondence {
        x: Vec3::new(r[0], r[1], r[2]),
        y: Vec3::new(r[3], r[4], r[5]),
        s: r[6],
    });
    Ok(CorrespondenceSet::new(pairs, f64::INFINITY))
}

pub fn write_correspondences(path: &Path, c: &CorrespondenceSet) -> Result<()> {
    crate::image::write_file(path, &correspondences_to_bytes(c))
}

pub fn read_correspondences(path: &Path) -> Result<CorrespondenceSet> {
    let b = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    correspondences_from_bytes(&b)
}
