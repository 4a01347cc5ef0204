use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::sdf::{MeshSdf, SurfaceSampler};
use crate::geometry::{Pose, Vec3};
use crate::rng::Rng;
use crate::{Error, Result};

/// Surface tolerance (mm) for accepting a symmetry transform.
pub const DEFAULT_SYMMETRY_TOLERANCE: f64 = 0.5;

/// On-disk symmetry description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SymmetrySpec {
    Discrete { axis: [f64; 3], steps: u32 },
    Transforms(Vec<Pose>),
}

/// Model-frame transforms under which the object looks the same. Identity comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySet {
    transforms: Vec<Pose>,
}

impl Default for SymmetrySet {
    fn default() -> Self {
        Self::identity()
    }
}

/// Identity plus rotations by `2πk/steps` about `axis`, `k = 1..steps`.
pub fn discretize_symmetry(axis: Vec3, steps: u32) -> Result<SymmetrySet> {
    if steps == 0 {
        return Err(Error::Config("symmetry steps must be at least 1".into()));
    }
    if !(axis.norm() > 0.0) || !axis.iter().all(|c| c.is_finite()) {
        return Err(Error::Config("symmetry axis must be a finite nonzero vector".into()));
    }
    let mut transforms = vec![Pose::identity()];
    for k in 1..steps {
        let angle = std::f64::consts::TAU * k as f64 / steps as f64;
        transforms.push(Pose::from_axis_angle(axis, angle, Vec3::zeros()));
    }
    Ok(SymmetrySet { transforms })
}

impl SymmetrySet {
    pub fn identity() -> Self {
        SymmetrySet {
            transforms: vec![Pose::identity()],
        }
    }

    /// Builds a set from arbitrary transforms; identity is prepended when missing.
    pub fn from_transforms(transforms: Vec<Pose>) -> Result<Self> {
        for t in &transforms {
            t.validate()?;
        }
        let is_identity = |p: &Pose| (p.rotation - crate::Mat3::identity()).abs().max() < 1e-9 && p.translation.norm() < 1e-9;
        let mut out = vec![Pose::identity()];
        out.extend(transforms.into_iter().filter(|p| !is_identity(p)));
        Ok(SymmetrySet { transforms: out })
    }

    pub fn from_spec(spec: &SymmetrySpec) -> Result<Self> {
        match spec {
            SymmetrySpec::Discrete { axis, steps } => discretize_symmetry(Vec3::from(*axis), *steps),
            SymmetrySpec::Transforms(t) => Self::from_transforms(t.clone()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SymmetrySpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SymmetrySpec::Transforms(self.transforms.clone())).expect("poses serialize")
    }

    pub fn transforms(&self) -> &[Pose] {
        &self.transforms
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    /// Largest `|ψ(S·v)|` over `samples` surface points `v` and all transforms.
    pub fn max_surface_deviation(&self, sdf: &MeshSdf, samples: usize, seed: u64) -> f64 {
        let mesh = sdf.mesh();
        let sampler = SurfaceSampler::new(mesh);
        let mut rng = Rng::seed_from_u64(seed);
        let points: Vec<Vec3> = (0..samples).map(|_| sampler.sample(mesh, &mut rng).0).collect();
        self.transforms
            .iter()
            .flat_map(|s| points.iter().map(move |v| s.transform(v)))
            .map(|p| sdf.unsigned_distance(&p))
            .fold(0.0, f64::max)
    }

    /// Fails if any transform moves sampled surface points off the surface by more than `tolerance`.
    pub fn validate(&self, sdf: &MeshSdf, tolerance: f64, samples: usize, seed: u64) -> Result<()> {
        for (k, s) in self.transforms.iter().enumerate() {
            let single = SymmetrySet { transforms: vec![*s] };
            let dev = single.max_surface_deviation(sdf, samples, seed);
            if dev > tolerance {
                return Err(Error::InvalidMesh(format!(
                    "symmetry transform {k} moves the surface by {dev:.3} mm (tolerance {tolerance} mm)"
                )));
            }
        }
        Ok(())
    }
}
