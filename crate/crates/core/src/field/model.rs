//! A trained field: network plus the feature, depth and output conventions it was
//! trained with, and its binary weight file.
//!
//! Weight file layout (little-endian): magic `NCF1`; `u32` layer count; per layer
//! `u32 rows`, `u32 cols`, `rows·cols` `f32` weights (row-major), `rows` `f32`
//! biases; then `u32 P` followed by the `f32` constants `stride, feature_scale,
//! feature_offset, z_mid, z_half, y_scale, delta`.

use std::path::Path;

use rayon::prelude::*;

use super::features::{build_inputs, DepthNormalization, FeatureProvider, FEATURE_OFFSET, FEATURE_SCALE};
use super::loss::OutputScaling;
use super::network::{FieldNetwork, OUTPUT_DIM};
use crate::geometry::{PinholeCamera, Vec3};
use crate::image::RgbImage;
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"NCF1";

/// Points per forward chunk at inference. Fixed so results do not depend on the
/// number of worker threads.
pub const PREDICT_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct NcfModel {
    pub net: FieldNetwork<f32>,
    pub features: FeatureProvider,
    pub depth: DepthNormalization,
    pub scaling: OutputScaling,
}

impl NcfModel {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if self.net.input_dim() != self.features.dim() + 1 {
            return Err(Error::Config(format!(
                "network input width {} does not match feature length {} + 1",
                self.net.input_dim(),
                self.features.dim()
            )));
        }
        if !(self.depth.z_half > 0.0) || !(self.scaling.y_scale > 0.0) || !(self.scaling.delta > 0.0) {
            return Err(Error::Config("non-positive normalization constant in model".into()));
        }
        Ok(())
    }

    /// Predicted `(y, s)` in millimeters for each camera-frame point.
    pub fn predict(&self, image: &RgbImage, cam: &PinholeCamera, points: &[Vec3]) -> Result<Vec<(Vec3, f64)>> {
        let chunks: Vec<Result<Vec<(Vec3, f64)>>> = points
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| {
                let x = build_inputs(&self.features, &self.depth, image, cam, chunk)?;
                let out = self.net.predict(&x)?;
                Ok(out.chunks_exact(OUTPUT_DIM).map(|o| self.scaling.decode(o)).collect())
            })
            .collect();
        let mut all = Vec::with_capacity(points.len());
        for c in chunks {
            all.extend(c?);
        }
        Ok(all)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(16 + 4 * self.net.param_count() + 64);
        b.extend_from_slice(WEIGHTS_MAGIC);
        let put_u32 = |b: &mut Vec<u8>, v: u32| b.extend_from_slice(&v.to_le_bytes());
        let put_f32 = |b: &mut Vec<u8>, v: f32| b.extend_from_slice(&v.to_le_bytes());
        put_u32(&mut b, self.net.layers().len() as u32);
        for (i, l) in self.net.layers().iter().enumerate() {
            put_u32(&mut b, l.rows as u32);
            put_u32(&mut b, l.cols as u32);
            for w in self.net.weights(i) {
                put_f32(&mut b, *w);
            }
            for v in self.net.biases(i) {
                put_f32(&mut b, *v);
            }
        }
        put_u32(&mut b, self.features.patch);
        for c in [
            self.features.stride,
            FEATURE_SCALE,
            FEATURE_OFFSET,
            self.depth.z_mid,
            self.depth.z_half,
            self.scaling.y_scale as f32,
            self.scaling.delta as f32,
        ] {
            put_f32(&mut b, c);
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHTS_MAGIC {
            return Err(Error::Format("weights: bad magic".into()));
        }
        let count = r.u32()? as usize;
        if count > 64 {
            return Err(Error::Format(format!("weights: implausible layer count {count}")));
        }
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let w = r.f32s(
                rows.checked_mul(cols)
                    .ok_or_else(|| Error::Format("weights: layer too large".into()))?,
            )?;
            let b = r.f32s(rows)?;
            layers.push((rows, cols, w, b));
        }
        let net = FieldNetwork::from_layers(layers)?;
        let patch = r.u32()?;
        let rest = r.f32s((bytes.len() - r.pos) / 4)?;
        if rest.len() < 7 || r.pos != bytes.len() {
            return Err(Error::Format("weights: truncated provider block".into()));
        }
        if rest[1] != FEATURE_SCALE || rest[2] != FEATURE_OFFSET {
            return Err(Error::Format(format!(
                "weights: unsupported feature scaling {} / {}",
                rest[1], rest[2]
            )));
        }
        let model = NcfModel {
            net,
            features: FeatureProvider { patch, stride: rest[0] },
            depth: DepthNormalization {
                z_mid: rest[3],
                z_half: rest[4],
            },
            scaling: OutputScaling {
                y_scale: rest[5] as f64,
                delta: rest[6] as f64,
            },
        };
        model.validate().map_err(|e| Error::Format(format!("weights: {e}")))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::image::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("weights: unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("weights: size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
