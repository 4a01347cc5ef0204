//! Rigid poses, pinhole cameras, camera remapping and robust pose fitting.

mod kabsch;
mod ransac;
mod remap;
pub mod svd;

pub use kabsch::{kabsch, kabsch_residual};
pub use ransac::{ransac_fit, Correspondence, CorrespondenceSet, RansacOutcome};
pub use remap::remap_to_reference;

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance of the rotation validity checks (orthonormality, determinant).
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rigid transform from the model frame to the camera frame, in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Checked constructor; the rotation must be orthonormal with det = +1.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let pose = Pose { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner();
        Pose { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose {
            rotation: Mat3::identity(),
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entry".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let ortho = (gram - Mat3::identity()).abs().max();
        if ortho > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!("rotation not orthonormal (max |RᵀR - I| = {ortho:e})")));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!("det(R) = {det}")));
        }
        Ok(())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Maps a camera-frame point back to the model frame.
    #[inline]
    pub fn inverse_transform(&self, x: &Vec3) -> Vec3 {
        self.rotation.transpose() * (x - self.translation)
    }

    /// Angle (radians) of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[3 * i + j] = self.rotation[(i, j)];
            }
        }
        PoseJson {
            r,
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = PoseJson::deserialize(deserializer)?;
        let pose = Pose {
            rotation: Mat3::from_row_slice(&raw.r),
            translation: Vec3::from_column_slice(&raw.t),
        };
        // Rotations written with limited precision are re-orthonormalized on load;
        // anything farther from SO(3) than that is rejected.
        let r = &pose.rotation;
        let drift = (r.transpose() * r - Mat3::identity()).abs().max();
        if !(r.determinant() > 0.0) || !(drift < 1e-3) {
            return Err(serde::de::Error::custom(format!(
                "R is not a rotation (det {:.6}, orthogonality error {drift:.2e})",
                r.determinant()
            )));
        }
        let pose = Pose {
            rotation: orthonormalize(&pose.rotation),
            ..pose
        };
        pose.validate().map_err(serde::de::Error::custom)?;
        Ok(pose)
    }
}

/// Closest rotation to `m` (polar factor via SVD with det correction).
pub fn orthonormalize(m: &Mat3) -> Mat3 {
    let svd = svd::svd3(m);
    let mut r = svd.u * svd.v.transpose();
    if r.determinant() < 0.0 {
        let mut u = svd.u;
        let c = -u.column(2);
        u.set_column(2, &c);
        r = u * svd.v.transpose();
    }
    r
}

/// Pinhole intrinsics plus image size. Pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let cam = PinholeCamera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidCamera("non-finite principal point".into()));
        }
        Ok(())
    }

    /// Perspective projection of a camera-frame point to pixel coordinates.
    pub fn project(&self, x: &Vec3) -> Result<Vec2> {
        if x.z <= 0.0 {
            return Err(Error::BehindCamera(x.z));
        }
        Ok(self.project_unchecked(x))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, x: &Vec3) -> Vec2 {
        Vec2::new(x.x * self.fx / x.z + self.cx, x.y * self.fy / x.z + self.cy)
    }

    /// Camera-frame point at depth `z` on the ray through pixel `(u, v)`.
    #[inline]
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// True if `(u, v)` lies within the image rectangle `[0, W) × [0, H)`.
    #[inline]
    pub fn contains(&self, uv: &Vec2) -> bool {
        uv.x >= 0.0 && uv.y >= 0.0 && uv.x < self.width as f64 && uv.y < self.height as f64
    }

    /// Center of pixel `(i, j)`.
    #[inline]
    pub fn pixel_center(i: u32, j: u32) -> Vec2 {
        Vec2::new(i as f64 + 0.5, j as f64 + 0.5)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}
