//! Per-instance error records and Average Recall over threshold grids.

use serde::{Deserialize, Serialize};

use super::metrics::{mspd, mssd, vsd, DEFAULT_VSD_DELTA_MM};
use crate::geometry::{PinholeCamera, Pose};
use crate::image::DepthMap;
use crate::mesh::{SymmetrySet, TriangleMesh};
use crate::{Error, Result};

/// Image width the projection thresholds are defined for.
pub const REFERENCE_WIDTH_PX: f64 = 640.0;

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalThresholds {
    /// VSD misalignment tolerances as fractions of the object diameter.
    pub vsd_tau_fractions: Vec<f64>,
    /// VSD correctness thresholds (error values in [0, 1]).
    pub vsd_thresholds: Vec<f64>,
    /// MSSD thresholds as fractions of the object diameter.
    pub mssd_fractions: Vec<f64>,
    /// MSPD thresholds in units of `r = width / 640` pixels.
    pub mspd_px: Vec<f64>,
    /// Visibility tolerance of VSD (mm).
    pub vsd_delta: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        EvalThresholds {
            vsd_tau_fractions: steps(0.05, 0.5, 0.05),
            vsd_thresholds: steps(0.05, 0.5, 0.05),
            mssd_fractions: steps(0.05, 0.5, 0.05),
            mspd_px: steps(5.0, 50.0, 5.0),
            vsd_delta: DEFAULT_VSD_DELTA_MM,
        }
    }
}

impl EvalThresholds {
    pub fn validate(&self) -> Result<()> {
        let lists = [&self.vsd_tau_fractions, &self.vsd_thresholds, &self.mssd_fractions, &self.mspd_px];
        if lists.iter().any(|l| l.is_empty() || l.iter().any(|v| !(*v > 0.0))) || !(self.vsd_delta > 0.0) {
            return Err(Error::Config("evaluation thresholds must be non-empty and positive".into()));
        }
        Ok(())
    }

    pub fn vsd_taus_mm(&self, diameter: f64) -> Vec<f64> {
        self.vsd_tau_fractions.iter().map(|f| f * diameter).collect()
    }
}

/// Errors of one test instance. `None` marks a failure (no estimate, or an error
/// that could not be evaluated); it counts as incorrect at every threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceErrors {
    pub name: String,
    pub visib_fraction: f64,
    /// One value per VSD tolerance.
    pub e_vsd: Option<Vec<f64>>,
    pub e_mssd: Option<f64>,
    pub e_mspd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl InstanceErrors {
    pub fn failure(name: impl Into<String>, visib_fraction: f64, note: impl Into<String>) -> Self {
        InstanceErrors {
            name: name.into(),
            visib_fraction,
            e_vsd: None,
            e_mssd: None,
            e_mspd: None,
            note: Some(note.into()),
        }
    }
}

/// All three errors of `est` against `gt`; metrics that cannot be evaluated are
/// recorded as failures with a note.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_instance(
    name: &str,
    est: Option<&Pose>,
    gt: &Pose,
    visib_fraction: f64,
    mesh: &TriangleMesh,
    sym: &SymmetrySet,
    cam: &PinholeCamera,
    scene_depth: &DepthMap,
    diameter: f64,
    th: &EvalThresholds,
) -> InstanceErrors {
    let Some(est) = est else {
        return InstanceErrors::failure(name, visib_fraction, "missing estimate");
    };
    let mut notes = Vec::new();
    let e_mspd = mspd(est, gt, mesh, sym, cam).map_err(|e| notes.push(format!("mspd: {e}"))).ok();
    let e_vsd = vsd(est, gt, mesh, cam, scene_depth, &th.vsd_taus_mm(diameter), th.vsd_delta)
        .map_err(|e| notes.push(format!("vsd: {e}")))
        .ok();
    InstanceErrors {
        name: name.to_string(),
        visib_fraction,
        e_vsd,
        e_mssd: Some(mssd(est, gt, mesh, sym)),
        e_mspd,
        note: (!notes.is_empty()).then(|| notes.join("; ")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageRecall {
    pub ar_vsd: f64,
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    pub ar: f64,
}

/// Share of `errors` strictly below `theta`; failures count as incorrect.
pub fn recall(errors: &[Option<f64>], theta: f64) -> f64 {
    errors.iter().filter(|e| e.is_some_and(|e| e < theta)).count() as f64 / errors.len() as f64
}

pub fn average_recall(instances: &[InstanceErrors], diameter: f64, image_width: u32, th: &EvalThresholds) -> Result<AverageRecall> {
    if instances.is_empty() {
        return Err(Error::Config("average recall of an empty instance list".into()));
    }
    th.validate()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mut vsd_recalls = Vec::new();
    for t in 0..th.vsd_tau_fractions.len() {
        let e: Vec<Option<f64>> = instances.iter().map(|i| i.e_vsd.as_ref().and_then(|v| v.get(t).copied())).collect();
        vsd_recalls.extend(th.vsd_thresholds.iter().map(|&theta| recall(&e, theta)));
    }
    let e_mssd: Vec<Option<f64>> = instances.iter().map(|i| i.e_mssd).collect();
    let mssd_recalls: Vec<f64> = th.mssd_fractions.iter().map(|f| recall(&e_mssd, f * diameter)).collect();
    let r = image_width as f64 / REFERENCE_WIDTH_PX;
    let e_mspd: Vec<Option<f64>> = instances.iter().map(|i| i.e_mspd).collect();
    let mspd_recalls: Vec<f64> = th.mspd_px.iter().map(|p| recall(&e_mspd, p * r)).collect();

    let (ar_vsd, ar_mssd, ar_mspd) = (mean(&vsd_recalls), mean(&mssd_recalls), mean(&mspd_recalls));
    Ok(AverageRecall {
        ar_vsd,
        ar_mssd,
        ar_mspd,
        ar: (ar_vsd + ar_mssd + ar_mspd) / 3.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    pub diameter: f64,
    pub thresholds: EvalThresholds,
    pub instances: Vec<InstanceErrors>,
    pub aggregate: AverageRecall,
}

impl PoseErrorReport {
    pub fn new(instances: Vec<InstanceErrors>, diameter: f64, image_width: u32, thresholds: EvalThresholds) -> Result<Self> {
        let aggregate = average_recall(&instances, diameter, image_width, &thresholds)?;
        Ok(PoseErrorReport {
            diameter,
            thresholds,
            instances,
            aggregate,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
