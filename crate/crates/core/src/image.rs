//! RGB images and depth maps with their on-disk formats.
//!
//! RGB images are binary PPM (`P6`, maxval 255). Depth maps are raw little-endian
//! `f32` arrays in row-major order with a JSON sidecar
//! `{"width": W, "height": H, "unit": "mm"}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: u32, height: u32, color: [f32; 3]) -> Self {
        RgbImage {
            width,
            height,
            data: vec![color; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j));
            }
        }
        RgbImage { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: u32, j: u32) -> [f32; 3] {
        self.data[j as usize * self.width as usize + i as usize]
    }

    #[inline]
    pub fn set(&mut self, i: u32, j: u32, c: [f32; 3]) {
        let w = self.width as usize;
        self.data[j as usize * w + i as usize] = c;
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.data
    }

    /// Bilinear sample at continuous pixel coordinates; pixel `(i, j)` has its
    /// center at `(i + 0.5, j + 0.5)`. `None` outside `[0, W) × [0, H)`.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<[f32; 3]> {
        if !(u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64) {
            return None;
        }
        let fx = u - 0.5;
        let fy = v - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = (fx - x0) as f32;
        let ay = (fy - y0) as f32;
        let wmax = self.width as i64 - 1;
        let hmax = self.height as i64 - 1;
        let xi0 = (x0 as i64).clamp(0, wmax) as u32;
        let xi1 = (x0 as i64 + 1).clamp(0, wmax) as u32;
        let yi0 = (y0 as i64).clamp(0, hmax) as u32;
        let yi1 = (y0 as i64 + 1).clamp(0, hmax) as u32;
        let (c00, c10, c01, c11) = (self.get(xi0, yi0), self.get(xi1, yi0), self.get(xi0, yi1), self.get(xi1, yi1));
        let mut out = [0.0f32; 3];
        for k in 0..3 {
            let top = c00[k] + (c10[k] - c00[k]) * ax;
            let bottom = c01[k] + (c11[k] - c01[k]) * ax;
            out[k] = top + (bottom - top) * ay;
        }
        Some(out)
    }

    /// Contrast about mid-gray followed by a brightness offset, clamped to `[0, 1]`.
    pub fn adjust_brightness_contrast(&mut self, brightness: f32, contrast: f32) {
        for px in &mut self.data {
            for c in px.iter_mut() {
                *c = ((*c - 0.5) * contrast + 0.5 + brightness).clamp(0.0, 1.0);
            }
        }
    }

    /// Channels quantized to 8 bits, the precision of the on-disk format.
    pub fn quantize(&mut self) {
        for px in &mut self.data {
            for c in px.iter_mut() {
                *c = to_u8(*c) as f32 / 255.0;
            }
        }
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 3);
        for px in &self.data {
            out.extend(px.iter().map(|&c| to_u8(c)));
        }
        out
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PPM header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        if tokens[0] != "P6" {
            return Err(Error::Format(format!("unsupported PPM magic {:?}", tokens[0])));
        }
        let parse = |s: &str| s.parse::<u32>().map_err(|_| Error::Format(format!("bad PPM header value {s:?}")));
        let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
        }
        let n = width as usize * height as usize;
        let raster = bytes
            .get(pos..pos + 3 * n)
            .ok_or_else(|| Error::Format("truncated PPM raster".into()))?;
        let data = raster
            .chunks_exact(3)
            .map(|p| [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
            .collect();
        Ok(RgbImage { width, height, data })
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_ppm_bytes())
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_ppm_bytes(&bytes)
    }
}

#[inline]
fn to_u8(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major depth map in millimeters; 0 marks pixels without geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthSidecar {
    width: u32,
    height: u32,
    unit: String,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        DepthMap {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::Format(format!(
                "depth buffer has {} values, expected {width}×{height}",
                data.len()
            )));
        }
        Ok(DepthMap { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, i: u32, j: u32) -> f32 {
        self.data[j as usize * self.width as usize + i as usize]
    }

    #[inline]
    pub fn set(&mut self, i: u32, j: u32, d: f32) {
        let w = self.width as usize;
        self.data[j as usize * w + i as usize] = d;
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    /// Path of the JSON sidecar belonging to a raw depth file.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut raw = Vec::with_capacity(self.data.len() * 4);
        for d in &self.data {
            raw.extend_from_slice(&d.to_le_bytes());
        }
        write_file(path, &raw)?;
        let sidecar = DepthSidecar {
            width: self.width,
            height: self.height,
            unit: "mm".into(),
        };
        write_file(&Self::sidecar_path(path), serde_json::to_string_pretty(&sidecar)?.as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side_path = Self::sidecar_path(path);
        let side = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: DepthSidecar = serde_json::from_str(&side)?;
        if side.unit != "mm" {
            return Err(Error::Format(format!("unsupported depth unit {:?}", side.unit)));
        }
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        if raw.len() % 4 != 0 {
            return Err(Error::Format("depth file length is not a multiple of 4".into()));
        }
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Self::from_vec(side.width, side.height, data)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_of_quantized_image() {
        let mut img = RgbImage::from_fn(5, 3, |i, j| [i as f32 / 4.0, j as f32 / 2.0, 0.3]);
        img.quantize();
        let back = RgbImage::from_ppm_bytes(&img.to_ppm_bytes()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn ppm_header_with_comment() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 0, 255]);
        let img = RgbImage::from_ppm_bytes(&bytes).unwrap();
        assert_eq!(img.get(0, 0), [1.0, 0.0, 0.0]);
        assert_eq!(img.get(1, 0), [0.0, 0.0, 1.0]);
        assert!(RgbImage::from_ppm_bytes(b"P5\n1 1\n255\n\0").is_err());
        assert!(RgbImage::from_ppm_bytes(b"P6\n2 2\n255\n\0\0\0").is_err());
    }

    #[test]
    fn bilinear_at_centers_and_midpoints() {
        let img = RgbImage::from_fn(2, 1, |i, _| if i == 0 { [0.0; 3] } else { [1.0; 3] });
        assert_eq!(img.sample_bilinear(0.5, 0.5), Some([0.0; 3]));
        assert_eq!(img.sample_bilinear(1.5, 0.5), Some([1.0; 3]));
        assert_eq!(img.sample_bilinear(1.0, 0.5), Some([0.5; 3]));
        assert_eq!(img.sample_bilinear(-0.1, 0.5), None);
        assert_eq!(img.sample_bilinear(2.0, 0.5), None);
    }

    #[test]
    fn depth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.f32");
        let d = DepthMap::from_vec(3, 2, vec![0.0, 1.5, 2.0, 1000.25, 0.0, 7.0]).unwrap();
        d.write(&p).unwrap();
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
        assert_eq!(side["unit"], "mm");
        assert_eq!(DepthMap::read(&p).unwrap(), d);
    }
}
