//! Run configuration: one TOML file, every key optional, unknown keys rejected.

use std::path::{Path, PathBuf};

use ncf_core::eval::{EvalThresholds, DEFAULT_VISIBILITY_BINS};
use ncf_core::field::{FeatureProvider, LossConfig, RmsPropConfig, TrainConfig, DEFAULT_KEEP_FRACTION, DESK_HIDDEN};
use ncf_core::mesh::{SdfMode, SymmetrySet, SymmetrySpec};
use ncf_core::rng::derive_seed;
use ncf_core::sampling::SamplingConfig;
use ncf_core::synth::{AugmentConfig, BackgroundMode, DatasetConfig, OcclusionConfig, PoseDistribution};
use ncf_core::PinholeCamera;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Seed-path tags under the root seed.
pub const SEED_DATASET: u64 = 1;
pub const SEED_TRAINING: u64 = 2;
pub const SEED_RANSAC: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub camera: PinholeCamera,
    pub mesh: Option<PathBuf>,
    pub symmetry: Option<SymmetrySpec>,
    pub dataset: DatasetSection,
    pub sampling: SamplingSection,
    pub field: FieldSection,
    pub training: TrainingSection,
    pub ransac: RansacSection,
    pub eval: EvalSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            camera: desk_camera(),
            mesh: None,
            symmetry: None,
            dataset: DatasetSection::default(),
            sampling: SamplingSection::default(),
            field: FieldSection::default(),
            training: TrainingSection::default(),
            ransac: RansacSection::default(),
            eval: EvalSection::default(),
            output: OutputSection::default(),
        }
    }
}

pub fn desk_camera() -> PinholeCamera {
    PinholeCamera {
        fx: 600.0,
        fy: 600.0,
        cx: 160.0,
        cy: 120.0,
        width: 320,
        height: 240,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub count: usize,
    pub poses: PoseDistribution,
    pub occlusion: OcclusionConfig,
    pub background: BackgroundMode,
    pub augment: AugmentConfig,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        DatasetSection {
            count: d.count,
            poses: d.poses,
            occlusion: d.occlusion,
            background: d.background,
            augment: d.augment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    /// Clamping distance and near-surface threshold (mm).
    pub delta: f64,
    /// Test-time grid step (mm).
    pub grid_step: f64,
    pub z_near: f64,
    pub z_far: f64,
    pub pool_scale: f64,
    pub points_per_side: usize,
    pub surface_sigma: f64,
    pub sdf_mode: SdfMode,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let s = SamplingConfig::default();
        SamplingSection {
            delta: ncf_core::DEFAULT_DELTA_MM,
            grid_step: ncf_core::DEFAULT_GRID_STEP_MM,
            z_near: s.z_near,
            z_far: s.z_far,
            pool_scale: s.pool_scale,
            points_per_side: s.points_per_side,
            surface_sigma: s.surface_sigma,
            sdf_mode: s.sdf_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub hidden: Vec<usize>,
    /// Patch side `P` of the pixel-aligned feature.
    pub patch: u32,
    /// Pixel spacing of the patch samples.
    pub stride: f32,
}

impl Default for FieldSection {
    fn default() -> Self {
        let f = FeatureProvider::default();
        FieldSection {
            hidden: DESK_HIDDEN.to_vec(),
            patch: f.patch,
            stride: f.stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_images: usize,
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub lambda: f64,
    pub huber: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let o = RmsPropConfig::default();
        let l = LossConfig::default();
        TrainingSection {
            epochs: t.epochs,
            batch_images: t.batch_images,
            lr: o.lr,
            rho: o.rho,
            eps: o.eps,
            lambda: l.lambda,
            huber: l.huber,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacSection {
    pub iterations: usize,
    pub tau3d: f64,
    /// Predictions with `|s|` below this share of δ become correspondences.
    pub keep_fraction: f64,
}

impl Default for RansacSection {
    fn default() -> Self {
        RansacSection {
            iterations: ncf_core::DEFAULT_RANSAC_ITERS,
            tau3d: ncf_core::DEFAULT_TAU_3D_MM,
            keep_fraction: DEFAULT_KEEP_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub vsd_tau_fractions: Vec<f64>,
    pub vsd_thresholds: Vec<f64>,
    pub mssd_fractions: Vec<f64>,
    pub mspd_px: Vec<f64>,
    pub vsd_delta: f64,
    pub bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let t = EvalThresholds::default();
        EvalSection {
            vsd_tau_fractions: t.vsd_tau_fractions,
            vsd_thresholds: t.vsd_thresholds,
            mssd_fractions: t.mssd_fractions,
            mspd_px: t.mspd_px,
            vsd_delta: t.vsd_delta,
            bins: DEFAULT_VISIBILITY_BINS,
        }
    }
}

impl EvalSection {
    pub fn thresholds(&self) -> EvalThresholds {
        EvalThresholds {
            vsd_tau_fractions: self.vsd_tau_fractions.clone(),
            vsd_thresholds: self.vsd_thresholds.clone(),
            mssd_fractions: self.mssd_fractions.clone(),
            mspd_px: self.mspd_px.clone(),
            vsd_delta: self.vsd_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.camera.validate()?;
        self.dataset_config().validate()?;
        self.train_config().validate()?;
        self.eval.thresholds().validate()?;
        if !(self.sampling.grid_step > 0.0) || self.ransac.iterations == 0 || !(self.ransac.tau3d > 0.0) || self.eval.bins == 0 {
            return Err(CliError::Usage(
                "grid_step, ransac.iterations, ransac.tau3d and eval.bins must be positive".into(),
            ));
        }
        if !(self.ransac.keep_fraction > 0.0 && self.ransac.keep_fraction <= 1.0) {
            return Err(CliError::Usage("ransac.keep_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn mesh_path(&self) -> Result<&Path, CliError> {
        self.mesh
            .as_deref()
            .ok_or_else(|| CliError::Usage("no mesh configured (set `mesh` or pass --mesh)".into()))
    }

    pub fn symmetry_set(&self) -> Result<SymmetrySet, CliError> {
        match &self.symmetry {
            None => Ok(SymmetrySet::identity()),
            Some(spec) => Ok(SymmetrySet::from_spec(spec)?),
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            count: self.dataset.count,
            poses: self.dataset.poses,
            occlusion: self.dataset.occlusion,
            background: self.dataset.background,
            augment: self.dataset.augment,
            seed: derive_seed(self.seed, &[SEED_DATASET]),
        }
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        SamplingConfig {
            pool_scale: self.sampling.pool_scale,
            points_per_side: self.sampling.points_per_side,
            surface_sigma: self.sampling.surface_sigma,
            z_near: self.sampling.z_near,
            z_far: self.sampling.z_far,
            sdf_mode: self.sampling.sdf_mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_images: t.batch_images,
            hidden: self.field.hidden.clone(),
            features: FeatureProvider {
                patch: self.field.patch,
                stride: self.field.stride,
            },
            optimizer: RmsPropConfig {
                lr: t.lr,
                rho: t.rho,
                eps: t.eps,
            },
            loss: LossConfig {
                lambda: t.lambda,
                delta: self.sampling.delta,
                huber: t.huber,
            },
            sampling: self.sampling_config(),
            seed: derive_seed(self.seed, &[SEED_TRAINING]),
        }
    }

    pub fn estimate_params(&self) -> ncf_core::field::EstimateParams {
        ncf_core::field::EstimateParams {
            delta: self.sampling.delta,
            keep_fraction: self.ransac.keep_fraction,
            iterations: self.ransac.iterations,
            tau3d: self.ransac.tau3d,
            seed: derive_seed(self.seed, &[SEED_RANSAC]),
        }
    }
}

/// Description of each leaf key; keys missing here are listed without one.
const KEY_DOCS: &[(&str, &str)] = &[
    ("seed", "root seed; every random stream is derived from it"),
    ("camera.fx", "focal length x (px)"),
    ("camera.fy", "focal length y (px)"),
    ("camera.cx", "principal point x (px)"),
    ("camera.cy", "principal point y (px)"),
    ("camera.width", "image width (px)"),
    ("camera.height", "image height (px)"),
    ("mesh", "object model, ASCII PLY in millimeters (no default)"),
    (
        "symmetry",
        "symmetry spec: {axis = [x, y, z], steps = n} or a list of {R, t} poses; identity if unset",
    ),
    ("dataset.count", "images per generated dataset"),
    (
        "dataset.poses.max_rotation_deg",
        "largest rotation angle of sampled poses (180 = all of SO(3))",
    ),
    ("dataset.poses.t_min", "lower corner of the translation box (mm)"),
    ("dataset.poses.t_max", "upper corner of the translation box (mm)"),
    ("dataset.occlusion.mode", "\"none\" or \"visibility\" (then also min, max)"),
    ("dataset.background", "solid | gradient | noise | random"),
    ("dataset.augment.brightness", "largest brightness offset"),
    ("dataset.augment.contrast_min", "smallest contrast factor"),
    ("dataset.augment.contrast_max", "largest contrast factor"),
    (
        "sampling.delta",
        "SDF clamping distance and near-surface threshold δ (mm); reference value 5",
    ),
    ("sampling.grid_step", "test-time grid step (mm); reference value 10"),
    ("sampling.z_near", "near bound of the query frustum (mm)"),
    ("sampling.z_far", "far bound of the query frustum (mm)"),
    ("sampling.pool_scale", "scale of the 12500/1000/1000 candidate pools"),
    (
        "sampling.points_per_side",
        "training points inside and outside per image; reference value 2500",
    ),
    ("sampling.surface_sigma", "std-dev of near-surface jitter (mm)"),
    ("sampling.sdf_mode", "closest_point | along_ray"),
    ("field.hidden", "hidden layer widths"),
    ("field.patch", "patch side P of the pixel-aligned feature"),
    ("field.stride", "pixel spacing between patch samples"),
    ("training.epochs", "training epochs"),
    ("training.batch_images", "images per optimizer step; reference value 4"),
    ("training.lr", "RMSProp learning rate; reference value 1e-4"),
    ("training.rho", "RMSProp decay"),
    ("training.eps", "RMSProp epsilon"),
    ("training.lambda", "weight of the SDF loss term λ; reference value 1"),
    ("training.huber", "Huber transition of the coordinate loss (mm)"),
    ("ransac.iterations", "pose hypotheses; reference value 200"),
    ("ransac.tau3d", "3D inlier threshold τ (mm); reference value 20"),
    (
        "ransac.keep_fraction",
        "predictions with |s| < keep_fraction·δ become correspondences",
    ),
    ("eval.vsd_tau_fractions", "VSD misalignment tolerances, fractions of the diameter"),
    ("eval.vsd_thresholds", "VSD correctness thresholds"),
    ("eval.mssd_fractions", "MSSD thresholds, fractions of the diameter"),
    ("eval.mspd_px", "MSPD thresholds in units of width/640 px"),
    ("eval.vsd_delta", "VSD visibility tolerance (mm)"),
    ("eval.bins", "visibility bins of the inlier-fraction analysis"),
    ("output.dir", "default output directory"),
];

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(map) if !map.is_empty() => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        _ => out.push((prefix.to_string(), if v.is_null() { "unset".to_string() } else { v.to_string() })),
    }
}

/// Every leaf key of the configuration with its default value.
pub fn default_keys() -> Vec<(String, String)> {
    let v = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let mut out = Vec::new();
    flatten("", &v, &mut out);
    out
}

pub fn config_help() -> String {
    let keys = default_keys();
    let width = keys.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (TOML; dotted names are tables) and defaults:\n");
    for (k, v) in &keys {
        let doc = KEY_DOCS.iter().find(|(name, _)| name == k).map(|(_, d)| *d).unwrap_or("");
        s.push_str(&format!("  {k:width$}  = {v}\n      {doc}\n"));
    }
    s
}
