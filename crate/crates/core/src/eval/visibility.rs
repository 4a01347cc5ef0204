//! Inlier fraction of established correspondences as a function of object visibility,
//! split by whether the correspondence sits on the visible or the hidden surface.

use serde::{Deserialize, Serialize};

use crate::geometry::{CorrespondenceSet, PinholeCamera, Pose};
use crate::image::DepthMap;
use crate::mesh::{MeshSdf, TriangleMesh};
use crate::synth::render_depth;
use crate::{Error, Result};

/// Depth slack (mm) when deciding whether a surface point is the front-most one.
pub const VISIBLE_DEPTH_TOLERANCE_MM: f64 = 2.0;

/// Depth slack (mm) between the object's own render and the scene depth.
const MASK_DEPTH_TOLERANCE_MM: f32 = 1.0;

pub const DEFAULT_VISIBILITY_BINS: usize = 5;

/// Pixels where the object under `gt` is the front-most surface of the scene.
pub fn visible_mask(mesh: &TriangleMesh, gt: &Pose, cam: &PinholeCamera, scene_depth: &DepthMap) -> Result<Vec<bool>> {
    let own = render_depth(mesh, gt, cam)?;
    if (scene_depth.width(), scene_depth.height()) != (cam.width, cam.height) {
        return Err(Error::Config("scene depth size differs from the camera".into()));
    }
    Ok(own
        .values()
        .iter()
        .zip(scene_depth.values())
        .map(|(&o, &s)| o > 0.0 && s > 0.0 && (o - s).abs() <= MASK_DEPTH_TOLERANCE_MM)
        .collect())
}

/// Inlier fractions of one correspondence set. Fractions over empty subsets are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InlierFractions {
    /// Over all established correspondences.
    pub all: Option<f64>,
    /// Over correspondences whose query point lies within δ of the true surface.
    pub near: Option<f64>,
    /// Near-surface correspondences whose closest surface point is visible.
    pub visible: Option<f64>,
    /// Near-surface correspondences on self-occluded or occluded surface.
    pub invisible: Option<f64>,
    pub count: usize,
    pub near_count: usize,
}

pub struct VisibilityInstance<'a> {
    pub correspondences: &'a CorrespondenceSet,
    pub gt: Pose,
    pub visib_fraction: f64,
    /// Output of [`visible_mask`] for this image.
    pub mask: &'a [bool],
    /// Scene depth of this image.
    pub depth: &'a DepthMap,
}

fn ratio(hit: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hit as f64 / n as f64)
}

pub fn instance_inlier_fractions(inst: &VisibilityInstance, sdf: &MeshSdf, cam: &PinholeCamera, tau3d: f64, delta: f64) -> InlierFractions {
    let w = cam.width as usize;
    let mut counts = [[0usize; 2]; 4];
    for c in inst.correspondences.pairs() {
        let inlier = (inst.gt.transform(&c.y) - c.x).norm() < tau3d;
        let mut bump = |k: usize| {
            counts[k][0] += inlier as usize;
            counts[k][1] += 1;
        };
        bump(0);
        let y_true = inst.gt.inverse_transform(&c.x);
        let surface = sdf.closest_point(&y_true);
        if (surface - y_true).norm() >= delta {
            continue;
        }
        bump(1);
        let p = inst.gt.transform(&surface);
        let visible = match cam.project(&p) {
            Ok(uv) if cam.contains(&uv) => {
                let k = uv.y as usize * w + uv.x as usize;
                inst.mask[k] && p.z <= inst.depth.values()[k] as f64 + VISIBLE_DEPTH_TOLERANCE_MM
            }
            _ => false,
        };
        bump(if visible { 2 } else { 3 });
    }
    InlierFractions {
        all: ratio(counts[0][0], counts[0][1]),
        near: ratio(counts[1][0], counts[1][1]),
        visible: ratio(counts[2][0], counts[2][1]),
        invisible: ratio(counts[3][0], counts[3][1]),
        count: counts[0][1],
        near_count: counts[1][1],
    }
}

/// Per-bin means of the instance fractions. A bin without instances, or without
/// any instance that has the subset, reports `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityBin {
    pub lo: f64,
    pub hi: f64,
    pub instances: usize,
    pub all: Option<f64>,
    pub near: Option<f64>,
    pub visible: Option<f64>,
    pub invisible: Option<f64>,
}

/// Bin index of a visibility in `[0, 1]` among `bins` equal-width bins; 1.0 falls
/// into the last bin.
pub fn visibility_bin(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

pub fn bin_fractions(per_instance: &[(f64, InlierFractions)], bins: usize) -> Result<Vec<VisibilityBin>> {
    if bins == 0 {
        return Err(Error::Config("need at least one visibility bin".into()));
    }
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    Ok((0..bins)
        .map(|b| {
            let members: Vec<&InlierFractions> = per_instance
                .iter()
                .filter(|(v, _)| visibility_bin(*v, bins) == b)
                .map(|(_, f)| f)
                .collect();
            let pick = |f: fn(&InlierFractions) -> Option<f64>| mean(members.iter().filter_map(|m| f(m)).collect());
            VisibilityBin {
                lo: b as f64 / bins as f64,
                hi: (b + 1) as f64 / bins as f64,
                instances: members.len(),
                all: pick(|m| m.all),
                near: pick(|m| m.near),
                visible: pick(|m| m.visible),
                invisible: pick(|m| m.invisible),
            }
        })
        .collect())
}

pub fn inlier_fraction_by_visibility(
    instances: &[VisibilityInstance],
    sdf: &MeshSdf,
    cam: &PinholeCamera,
    tau3d: f64,
    delta: f64,
    bins: usize,
) -> Result<Vec<VisibilityBin>> {
    let per: Vec<(f64, InlierFractions)> = instances
        .iter()
        .map(|i| (i.visib_fraction, instance_inlier_fractions(i, sdf, cam, tau3d, delta)))
        .collect();
    bin_fractions(&per, bins)
}

/// CSV with one row per bin; absent values are empty cells.
pub fn bins_to_csv(bins: &[VisibilityBin]) -> String {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut s = String::from("lo,hi,instances,all,near,visible,invisible\n");
    for b in bins {
        s.push_str(&format!(
            "{:.2},{:.2},{},{},{},{},{}\n",
            b.lo,
            b.hi,
            b.instances,
            cell(b.all),
            cell(b.near),
            cell(b.visible),
            cell(b.invisible)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{extract_correspondences, OracleField, DEFAULT_KEEP_FRACTION};
    use crate::geometry::{Correspondence, Vec3};
    use crate::image::RgbImage;
    use crate::mesh::{l_prism, SdfMode};
    use crate::sampling::sample_test_grid;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(600.0, 600.0, 160.0, 120.0, 320, 240).unwrap()
    }

    #[test]
    fn oracle_correspondences_are_all_inliers() {
        let sdf = MeshSdf::new(l_prism()).unwrap();
        let gt = Pose::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.9, Vec3::new(0.0, 10.0, 1000.0));
        let depth = render_depth(sdf.mesh(), &gt, &cam()).unwrap();
        let mask = visible_mask(sdf.mesh(), &gt, &cam(), &depth).unwrap();
        let grid = sample_test_grid(&cam(), 850.0, 1150.0, 10.0).unwrap();
        let oracle = OracleField {
            sdf: &sdf,
            pose: gt,
            mode: SdfMode::ClosestPoint,
        };
        let c = extract_correspondences(&oracle, &RgbImage::new(320, 240), &cam(), &grid.points, 5.0, DEFAULT_KEEP_FRACTION).unwrap();
        let inst = VisibilityInstance {
            correspondences: &c,
            gt,
            visib_fraction: 1.0,
            mask: &mask,
            depth: &depth,
        };
        let f = instance_inlier_fractions(&inst, &sdf, &cam(), 20.0, 5.0);
        assert_eq!(f.all, Some(1.0));
        assert_eq!(f.near, Some(1.0));
        assert_eq!(f.visible, Some(1.0));
        assert_eq!(f.invisible, Some(1.0));
        // Roughly half of a convex-ish object's surface faces the camera.
        let vis = f.near_count as f64;
        assert!(vis > 50.0);

        let bins = inlier_fraction_by_visibility(&[inst], &sdf, &cam(), 20.0, 5.0, 5).unwrap();
        assert_eq!(bins[4].all, Some(1.0));
        assert_eq!(bins[0].all, None);
    }

    #[test]
    fn binning_edges() {
        assert_eq!(visibility_bin(0.0, 5), 0);
        assert_eq!(visibility_bin(0.2, 5), 1);
        assert_eq!(visibility_bin(1.0, 5), 4);
    }

    #[test]
    fn fractions_count_inliers() {
        let sdf = MeshSdf::new(l_prism()).unwrap();
        let gt = Pose::from_translation(Vec3::new(0.0, 0.0, 1000.0));
        let depth = DepthMap::new(320, 240);
        let mask = vec![false; 320 * 240];
        let good = Correspondence {
            x: gt.transform(&Vec3::new(0.0, -20.0, 25.0)),
            y: Vec3::new(0.0, -20.0, 25.0),
            s: 0.0,
        };
        let bad = Correspondence {
            y: Vec3::new(0.0, -20.0, -25.0),
            ..good
        };
        let far = Correspondence {
            x: Vec3::new(0.0, 0.0, 700.0),
            ..good
        };
        let c = CorrespondenceSet::new([good, bad, far], 5.0);
        let inst = VisibilityInstance {
            correspondences: &c,
            gt,
            visib_fraction: 0.5,
            mask: &mask,
            depth: &depth,
        };
        let f = instance_inlier_fractions(&inst, &sdf, &cam(), 20.0, 5.0);
        assert_eq!(f.count, 3);
        assert_eq!(f.near_count, 2);
        assert!((f.all.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(f.near, Some(0.5));
        assert_eq!(f.visible, None);
    }
}
