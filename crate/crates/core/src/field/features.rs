use serde::{Deserialize, Serialize};

use crate::geometry::{PinholeCamera, Vec2, Vec3};
use crate::image::RgbImage;
use crate::{Error, Result};

/// Pixel-aligned features: a bilinearly sampled `P×P` RGB patch centered on the
/// projection, with taps `stride` pixels apart, mapped from `[0, 1]` to `[−1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureProvider {
    pub patch: u32,
    pub stride: f32,
}

impl Default for FeatureProvider {
    fn default() -> Self {
        FeatureProvider { patch: 8, stride: 1.0 }
    }
}

/// Affine map from channel values to feature values.
pub const FEATURE_SCALE: f32 = 2.0;
pub const FEATURE_OFFSET: f32 = -1.0;

impl FeatureProvider {
    pub fn new(patch: u32, stride: f32) -> Result<Self> {
        let p = FeatureProvider { patch, stride };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || !(self.stride > 0.0) || !self.stride.is_finite() {
            return Err(Error::Config(format!(
                "feature patch must be ≥ 1 and stride > 0 (got {}, {})",
                self.patch, self.stride
            )));
        }
        Ok(())
    }

    /// Feature length `K = 3·P²`.
    pub fn dim(&self) -> usize {
        3 * (self.patch * self.patch) as usize
    }

    /// Writes the feature at `uv` into `out` (length `K`), row by row, RGB interleaved.
    pub fn pixel_feature_into(&self, image: &RgbImage, uv: &Vec2, out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.dim());
        let p = self.patch as usize;
        let half = (p as f64 - 1.0) * 0.5;
        let stride = self.stride as f64;
        for b in 0..p {
            let v = uv.y + (b as f64 - half) * stride;
            for a in 0..p {
                let u = uv.x + (a as f64 - half) * stride;
                let base = 3 * (b * p + a);
                match image.sample_bilinear(u, v) {
                    Some(c) => {
                        for k in 0..3 {
                            out[base + k] = c[k] * FEATURE_SCALE + FEATURE_OFFSET;
                        }
                    }
                    None => out[base..base + 3].fill(0.0),
                }
            }
        }
    }

    pub fn pixel_feature(&self, image: &RgbImage, uv: &Vec2) -> Vec<f32> {
        let mut out = vec![0.0; self.dim()];
        self.pixel_feature_into(image, uv, &mut out);
        out
    }
}

/// Maps query depth to the network's depth input, `(z − z_mid) / z_half`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNormalization {
    pub z_mid: f32,
    pub z_half: f32,
}

impl DepthNormalization {
    pub fn from_range(z_near: f64, z_far: f64) -> Self {
        DepthNormalization {
            z_mid: (0.5 * (z_near + z_far)) as f32,
            z_half: (0.5 * (z_far - z_near)) as f32,
        }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f32 {
        ((z - self.z_mid as f64) / self.z_half as f64) as f32
    }
}

/// Network input rows `[F(π(x)), x̃_z]` for each point, row-major `N × (K + 1)`.
pub fn build_inputs(
    provider: &FeatureProvider,
    depth: &DepthNormalization,
    image: &RgbImage,
    cam: &PinholeCamera,
    points: &[Vec3],
) -> Result<Vec<f32>> {
    let k = provider.dim();
    let mut out = vec![0.0f32; points.len() * (k + 1)];
    for (x, row) in points.iter().zip(out.chunks_exact_mut(k + 1)) {
        let uv = cam.project(x)?;
        provider.pixel_feature_into(image, &uv, &mut row[..k]);
        row[k] = depth.apply(x.z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_gray_is_zero() {
        let img = RgbImage::filled(20, 20, [0.5; 3]);
        let f = FeatureProvider::default().pixel_feature(&img, &Vec2::new(10.0, 10.0));
        assert_eq!(f.len(), 192);
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_tap_examples() {
        let mut img = RgbImage::new(4, 4);
        img.set(2, 1, [1.0; 3]);
        let p = FeatureProvider::new(1, 1.0).unwrap();
        assert_eq!(p.pixel_feature(&img, &Vec2::new(2.5, 1.5)), vec![1.0; 3]);
        // Halfway between the white pixel and its black left neighbor.
        assert_eq!(p.pixel_feature(&img, &Vec2::new(2.0, 1.5)), vec![0.0; 3]);
        // Outside the image.
        assert_eq!(p.pixel_feature(&img, &Vec2::new(-3.0, 1.5)), vec![0.0; 3]);
    }

    #[test]
    fn features_bounded() {
        let img = RgbImage::from_fn(16, 16, |i, j| [i as f32 / 15.0, j as f32 / 15.0, 1.0]);
        let p = FeatureProvider::new(5, 2.5).unwrap();
        for uv in [Vec2::new(0.1, 0.1), Vec2::new(8.0, 8.0), Vec2::new(15.9, 3.0)] {
            assert!(p.pixel_feature(&img, &uv).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn depth_normalization_maps_range_to_unit_interval() {
        let d = DepthNormalization::from_range(700.0, 1300.0);
        assert_eq!(d.apply(700.0), -1.0);
        assert_eq!(d.apply(1000.0), 0.0);
        assert_eq!(d.apply(1300.0), 1.0);
    }
}
