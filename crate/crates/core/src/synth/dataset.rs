//! Synthetic training and test sets: random poses, random backgrounds, optional
//! half-plane occluders and photometric jitter, written as PPM + raw depth + JSON.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{half_plane_occluder, rasterize, Background, Occluder, RenderOutput};
use crate::geometry::{PinholeCamera, Pose, Vec2, Vec3};
use crate::image::{DepthMap, RgbImage};
use crate::mesh::TriangleMesh;
use crate::rng::{derive_seed, stream_rng};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Gap between the occluder plane and the nearest visible target point (mm).
pub const OCCLUDER_GAP_MM: f64 = 10.0;

/// Pose redraws allowed per record before giving up.
const MAX_POSE_DRAWS: usize = 100;

/// Fewest silhouette pixels a record may have.
const MIN_SILHOUETTE_PIXELS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseDistribution {
    /// Rotations are uniform on SO(3) restricted to angles up to this bound.
    pub max_rotation_deg: f64,
    pub t_min: [f64; 3],
    pub t_max: [f64; 3],
}

impl Default for PoseDistribution {
    fn default() -> Self {
        PoseDistribution {
            max_rotation_deg: 180.0,
            t_min: [-60.0, -40.0, 800.0],
            t_max: [60.0, 40.0, 1200.0],
        }
    }
}

impl PoseDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok_box = (0..3).all(|k| self.t_min[k] <= self.t_max[k] && self.t_min[k].is_finite() && self.t_max[k].is_finite());
        if !ok_box || self.t_min[2] <= 0.0 || !(self.max_rotation_deg > 0.0 && self.max_rotation_deg <= 180.0) {
            return Err(Error::Config(format!("invalid pose distribution {self:?}")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Pose {
        let max = self.max_rotation_deg.to_radians();
        // Angle density of the Haar measure is ∝ 1 − cos θ.
        let angle = loop {
            let a = rng.random::<f64>() * max;
            if rng.random::<f64>() * (1.0 - max.cos()) <= 1.0 - a.cos() {
                break a;
            }
        };
        let axis = loop {
            let v = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
            if v.norm() > 1e-9 {
                break v;
            }
        };
        let t = Vec3::from_fn(|k, _| self.t_min[k] + (self.t_max[k] - self.t_min[k]) * rng.random::<f64>());
        Pose::from_axis_angle(axis, angle, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum OcclusionConfig {
    #[default]
    None,
    /// One half-plane occluder per image whose target visibility is uniform in `[min, max]`.
    Visibility { min: f64, max: f64 },
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if let OcclusionConfig::Visibility { min, max } = *self {
            if !(0.0 <= min && min <= max && max <= 1.0) {
                return Err(Error::Config(format!("invalid visibility range [{min}, {max}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    Solid,
    Gradient,
    Noise,
    /// One of the above, drawn per image.
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Brightness offset drawn from `±brightness`.
    pub brightness: f64,
    /// Contrast factor drawn from `[contrast_min, contrast_max]`.
    pub contrast_min: f64,
    pub contrast_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            brightness: 0.1,
            contrast_min: 0.8,
            contrast_max: 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub count: usize,
    pub poses: PoseDistribution,
    pub occlusion: OcclusionConfig,
    pub background: BackgroundMode,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            count: 200,
            poses: PoseDistribution::default(),
            occlusion: OcclusionConfig::None,
            background: BackgroundMode::Random,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.poses.validate()?;
        self.occlusion.validate()?;
        let a = &self.augment;
        if !(a.brightness >= 0.0 && a.contrast_min > 0.0 && a.contrast_min <= a.contrast_max) {
            return Err(Error::Config(format!("invalid augmentation {a:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    /// Paths are relative to the manifest's directory.
    pub image: String,
    pub depth: String,
    pub pose: Pose,
    pub visib_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub camera: PinholeCamera,
    pub records: Vec<DatasetRecord>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(camera: PinholeCamera, records: Vec<DatasetRecord>, root: impl Into<PathBuf>) -> Self {
        DatasetManifest {
            camera,
            records,
            root: root.into(),
        }
    }

    /// Directory the record paths are relative to.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_path(&self, k: usize) -> PathBuf {
        self.root.join(&self.records[k].image)
    }

    pub fn depth_path(&self, k: usize) -> PathBuf {
        self.root.join(&self.records[k].depth)
    }

    pub fn load_image(&self, k: usize) -> Result<RgbImage> {
        RgbImage::read_ppm(self.image_path(k))
    }

    pub fn load_depth(&self, k: usize) -> Result<DepthMap> {
        DepthMap::read(self.depth_path(k))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::image::write_file(path, text.as_bytes())
    }

    /// Reads a manifest and checks that every referenced file exists with the
    /// declared camera size.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.camera.validate()?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for k in 0..m.records.len() {
            let img = m.load_image(k)?;
            let depth = m.load_depth(k)?;
            let (w, h) = (m.camera.width, m.camera.height);
            if (img.width(), img.height()) != (w, h) || (depth.width(), depth.height()) != (w, h) {
                return Err(Error::Format(format!("record {k}: image size does not match the {w}×{h} camera")));
            }
        }
        Ok(m)
    }
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> [f32; 3] {
    std::array::from_fn(|_| rng.random::<f32>())
}

fn draw_background<R: Rng + ?Sized>(mode: BackgroundMode, rng: &mut R) -> Background {
    let mode = match mode {
        BackgroundMode::Random => [BackgroundMode::Solid, BackgroundMode::Gradient, BackgroundMode::Noise][rng.random_range(0..3)],
        m => m,
    };
    match mode {
        BackgroundMode::Solid | BackgroundMode::Random => Background::Solid { color: random_color(rng) },
        BackgroundMode::Gradient => Background::Gradient {
            top: random_color(rng),
            bottom: random_color(rng),
        },
        BackgroundMode::Noise => Background::Noise {
            base: random_color(rng),
            amplitude: rng.random_range(0.1..0.5),
        },
    }
}

/// Half-plane occluder in a random image direction that hides a `1 − visibility`
/// share of the unoccluded silhouette of `clean`. `None` if nothing needs hiding.
pub fn place_occluder<R: Rng + ?Sized>(
    clean: &RenderOutput,
    cam: &PinholeCamera,
    visibility: f64,
    rng: &mut R,
) -> Result<Option<Occluder>> {
    let theta = rng.random::<f64>() * 2.0 * PI;
    let color = random_color(rng);
    let dir = Vec2::new(theta.cos(), theta.sin());
    let w = cam.width as usize;
    let mut proj = Vec::new();
    let mut z_min = f64::INFINITY;
    for (k, m) in clean.silhouette.iter().enumerate() {
        if *m {
            let c = PinholeCamera::pixel_center((k % w) as u32, (k / w) as u32);
            proj.push(dir.dot(&c));
            z_min = z_min.min(clean.target_depth.values()[k] as f64);
        }
    }
    let n = proj.len();
    let hide = ((1.0 - visibility).clamp(0.0, 1.0) * n as f64).round() as usize;
    if hide == 0 {
        return Ok(None);
    }
    proj.sort_by(f64::total_cmp);
    let offset = if hide >= n {
        proj[n - 1] + 1.0
    } else {
        0.5 * (proj[hide - 1] + proj[hide])
    };
    half_plane_occluder(cam, dir, offset, (z_min - OCCLUDER_GAP_MM).max(super::raster::NEAR_PLANE_MM), color)
}

/// Renders record `index` of a dataset: the image after augmentation and its render.
pub fn render_record(mesh: &TriangleMesh, cam: &PinholeCamera, cfg: &DatasetConfig, index: usize) -> Result<(u64, Pose, RenderOutput)> {
    let seed = derive_seed(cfg.seed, &[index as u64]);
    let mut rng = stream_rng(seed, 0);
    let mut attempt = 0;
    let (pose, clean) = loop {
        let pose = cfg.poses.sample(&mut rng);
        let background = draw_background(cfg.background, &mut rng);
        let r = rasterize(mesh, &pose, cam, &[], &background, rng.random())?;
        if r.silhouette_pixels() >= MIN_SILHOUETTE_PIXELS {
            break (pose, (r, background));
        }
        attempt += 1;
        if attempt >= MAX_POSE_DRAWS {
            return Err(Error::Sampling(format!(
                "record {index}: no pose with a visible object after {attempt} draws"
            )));
        }
    };
    let (clean, background) = clean;
    let mut out = match cfg.occlusion {
        OcclusionConfig::None => clean,
        OcclusionConfig::Visibility { min, max } => {
            let v = min + (max - min) * rng.random::<f64>();
            match place_occluder(&clean, cam, v, &mut rng)? {
                Some(occ) => rasterize(mesh, &pose, cam, &[occ], &background, rng.random())?,
                None => clean,
            }
        }
    };
    let a = &cfg.augment;
    let (bmax, cmin, cmax) = (a.brightness as f32, a.contrast_min as f32, a.contrast_max as f32);
    let b = bmax * (2.0 * rng.random::<f32>() - 1.0);
    let c = cmin + (cmax - cmin) * rng.random::<f32>();
    out.rgb.adjust_brightness_contrast(b, c);
    out.rgb.quantize();
    Ok((seed, pose, out))
}

/// Generates `cfg.count` records into `out_dir` and writes the manifest there.
pub fn generate_dataset(mesh: &TriangleMesh, cam: &PinholeCamera, cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    cam.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records: Result<Vec<DatasetRecord>> = (0..cfg.count)
        .into_par_iter()
        .map(|k| {
            let (seed, pose, r) = render_record(mesh, cam, cfg, k)?;
            let image = format!("rgb_{k:05}.ppm");
            let depth = format!("depth_{k:05}.f32");
            r.rgb.write_ppm(out_dir.join(&image))?;
            r.depth.write(out_dir.join(&depth))?;
            Ok(DatasetRecord {
                image,
                depth,
                pose,
                visib_fraction: r.visib_fraction,
                seed,
            })
        })
        .collect();
    let manifest = DatasetManifest::new(*cam, records?, out_dir);
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::l_prism;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(600.0, 600.0, 160.0, 120.0, 320, 240).unwrap()
    }

    #[test]
    fn pose_sampler_respects_bounds() {
        let d = PoseDistribution {
            max_rotation_deg: 30.0,
            ..Default::default()
        };
        let mut rng = stream_rng(5, 0);
        for _ in 0..200 {
            let p = d.sample(&mut rng);
            assert!(p.rotation_angle_to(&Pose::identity()) <= 30f64.to_radians() + 1e-9);
            assert!((0..3).all(|k| p.translation[k] >= d.t_min[k] && p.translation[k] <= d.t_max[k]));
        }
    }

    #[test]
    fn rotation_angles_follow_haar_measure() {
        // Uniform SO(3): P(θ ≤ π/2) = (π/2 − 1)/π.
        let d = PoseDistribution::default();
        let mut rng = stream_rng(6, 0);
        let n = 20000;
        let below = (0..n)
            .filter(|_| d.sample(&mut rng).rotation_angle_to(&Pose::identity()) <= PI / 2.0)
            .count();
        let expected = (PI / 2.0 - 1.0) / PI;
        assert!((below as f64 / n as f64 - expected).abs() < 0.015);
    }

    #[test]
    fn occlusion_hits_requested_visibility() {
        let cfg = DatasetConfig {
            occlusion: OcclusionConfig::Visibility { min: 0.4, max: 0.6 },
            ..Default::default()
        };
        let mesh = l_prism();
        let inside = (0..20)
            .filter(|&k| {
                let v = render_record(&mesh, &cam(), &cfg, k).unwrap().2.visib_fraction;
                (0.3..=0.7).contains(&v)
            })
            .count();
        assert!(inside >= 16, "{inside}");
    }

    #[test]
    fn no_occlusion_means_full_visibility() {
        let mesh = l_prism();
        for k in 0..5 {
            let r = render_record(&mesh, &cam(), &DatasetConfig::default(), k).unwrap().2;
            assert_eq!(r.visib_fraction, 1.0);
        }
    }
}
