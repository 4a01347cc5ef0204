//! Training objective `L_y + λ·L_s` with its gradient w.r.t. the network outputs.

use serde::{Deserialize, Serialize};

use super::network::{Real, OUTPUT_DIM};
use crate::geometry::{Pose, Vec3};
use crate::mesh::SymmetrySet;
use crate::sampling::QueryBatch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight of the signed-distance term.
    pub lambda: f64,
    /// Clamping distance (mm).
    pub delta: f64,
    /// Huber transition (mm).
    pub huber: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 1.0,
            delta: crate::DEFAULT_DELTA_MM,
            huber: 10.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.delta > 0.0) || !(self.huber > 0.0) {
            return Err(Error::Config(format!("invalid loss config {self:?}")));
        }
        Ok(())
    }
}

/// Maps `tanh` outputs to millimeters: `y = o₁..₃·y_scale`, `s = o₄·δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub y_scale: f64,
    pub delta: f64,
}

impl OutputScaling {
    #[inline]
    pub fn decode<T: Real>(&self, o: &[T]) -> (Vec3, f64) {
        (
            Vec3::new(o[0].as_f64(), o[1].as_f64(), o[2].as_f64()) * self.y_scale,
            o[3].as_f64() * self.delta,
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub loss_y: f64,
    pub loss_s: f64,
    pub total: f64,
    /// Points with `|ψ| < δ` that enter `L_y`.
    pub near_count: usize,
    /// Index into the symmetry set of the minimizing ground-truth pose.
    pub symmetry: usize,
}

/// Huber penalty on a residual vector's length and its gradient w.r.t. the vector.
#[inline]
pub fn huber(r: &Vec3, c: f64) -> (f64, Vec3) {
    let n = r.norm();
    if n <= c {
        (0.5 * n * n, *r)
    } else {
        (c * (n - 0.5 * c), r * (c / n))
    }
}

#[inline]
fn clamp(v: f64, delta: f64) -> f64 {
    v.clamp(-delta, delta)
}

/// Loss of one image's outputs (`n × 4` tanh values) and `∂L/∂outputs`.
///
/// `L_y = min over S of (1/N)·Σ_{|ψᵢ|<δ} H(‖gt∘S(yᵢ) − xᵢ‖)` with the gradient taken
/// through the minimizing `S` only; `L_s = (1/N)·Σ |clamp(ψᵢ) − clamp(sᵢ)|` with a
/// zero subgradient where the clamp is active or the two sides are equal.
pub fn loss_from_outputs<T: Real>(
    outputs: &[T],
    batch: &QueryBatch,
    sym: &SymmetrySet,
    gt: &Pose,
    scaling: &OutputScaling,
    cfg: &LossConfig,
) -> Result<(LossTerms, Vec<T>)> {
    let n = batch.len();
    if outputs.len() != n * OUTPUT_DIM || batch.gt_y.len() != n || batch.gt_sdf.len() != n {
        return Err(Error::Config("loss: outputs and batch sizes differ".into()));
    }
    if n == 0 {
        return Err(Error::Config("loss: empty batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let decoded: Vec<(Vec3, f64)> = outputs.chunks_exact(OUTPUT_DIM).map(|o| scaling.decode(o)).collect();
    let near: Vec<usize> = (0..n).filter(|&i| batch.gt_sdf[i].abs() < cfg.delta).collect();

    let mut d_out = vec![T::zero(); outputs.len()];
    let mut terms = LossTerms {
        near_count: near.len(),
        ..Default::default()
    };

    if near.is_empty() {
        log::warn!("no query points within δ of the surface; L_y is zero for this image");
    } else {
        let candidates: Vec<Pose> = sym.transforms().iter().map(|s| gt.compose(s)).collect();
        let mut best = (f64::INFINITY, 0usize);
        for (k, pose) in candidates.iter().enumerate() {
            let l: f64 = near
                .iter()
                .map(|&i| huber(&(pose.transform(&decoded[i].0) - batch.points[i]), cfg.huber).0)
                .sum::<f64>()
                * inv_n;
            if l < best.0 {
                best = (l, k);
            }
        }
        terms.loss_y = best.0;
        terms.symmetry = best.1;
        let pose = &candidates[best.1];
        let rt = pose.rotation.transpose();
        for &i in &near {
            let (_, g) = huber(&(pose.transform(&decoded[i].0) - batch.points[i]), cfg.huber);
            let gy = rt * g * (inv_n * scaling.y_scale);
            for k in 0..3 {
                d_out[i * OUTPUT_DIM + k] = T::from_f64(gy[k]);
            }
        }
    }

    let mut ls = 0.0;
    for i in 0..n {
        let s = decoded[i].1;
        let diff = clamp(batch.gt_sdf[i], cfg.delta) - clamp(s, cfg.delta);
        ls += diff.abs();
        if s.abs() < cfg.delta && diff != 0.0 {
            // ∂|ψ̂ − ŝ|/∂s = −sign(ψ̂ − ŝ), then ∂s/∂o = δ_out.
            let g = -diff.signum() * inv_n * cfg.lambda * scaling.delta;
            d_out[i * OUTPUT_DIM + 3] = T::from_f64(g);
        }
    }
    terms.loss_s = ls * inv_n;
    terms.total = terms.loss_y + cfg.lambda * terms.loss_s;
    if !terms.total.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {terms:?}")));
    }
    Ok((terms, d_out))
}
