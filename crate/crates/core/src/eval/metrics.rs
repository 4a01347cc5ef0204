//! Pose-error functions. All take the estimate first and the ground truth second.

use crate::geometry::{PinholeCamera, Pose, Vec3};
use crate::image::DepthMap;
use crate::mesh::{SymmetrySet, TriangleMesh};
use crate::synth::render_depth;
use crate::{Error, Result};

/// Default misalignment tolerance of the visibility test (mm).
pub const DEFAULT_VSD_DELTA_MM: f64 = 15.0;

/// Maximum symmetry-aware surface distance (mm):
/// `min over S of max over vertices v of ‖est(v) − gt(S·v)‖`.
pub fn mssd(est: &Pose, gt: &Pose, mesh: &TriangleMesh, sym: &SymmetrySet) -> f64 {
    let e: Vec<Vec3> = mesh.vertices().iter().map(|v| est.transform(v)).collect();
    sym.transforms()
        .iter()
        .map(|s| {
            let g = gt.compose(s);
            mesh.vertices()
                .iter()
                .zip(&e)
                .map(|(v, ev)| (ev - g.transform(v)).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Maximum symmetry-aware projection distance (px).
pub fn mspd(est: &Pose, gt: &Pose, mesh: &TriangleMesh, sym: &SymmetrySet, cam: &PinholeCamera) -> Result<f64> {
    let project = |pose: &Pose| -> Result<Vec<_>> { mesh.vertices().iter().map(|v| cam.project(&pose.transform(v))).collect() };
    let e = project(est)?;
    let mut best = f64::INFINITY;
    for s in sym.transforms() {
        let g = project(&gt.compose(s))?;
        let worst = e.iter().zip(&g).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        best = best.min(worst);
    }
    Ok(best)
}

/// Converts a z-depth map to distances from the camera center.
pub fn depth_to_distance(depth: &DepthMap, cam: &PinholeCamera) -> Vec<f64> {
    let w = depth.width() as usize;
    depth
        .values()
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            if z <= 0.0 {
                return 0.0;
            }
            let c = PinholeCamera::pixel_center((k % w) as u32, (k / w) as u32);
            cam.backproject(c.x, c.y, z as f64).norm()
        })
        .collect()
}

/// Pixels where a rendered model distance is visible against the scene: rendered,
/// and either not behind the scene surface by more than `delta` or on empty scene.
fn visibility(d_scene: &[f64], d_model: &[f64], delta: f64) -> Vec<bool> {
    d_scene
        .iter()
        .zip(d_model)
        .map(|(&s, &m)| m > 0.0 && (s == 0.0 || m - s <= delta))
        .collect()
}

/// Visible surface discrepancy for each misalignment tolerance in `taus` (mm).
///
/// Distance maps of both poses are tested for visibility against `scene_depth`
/// with tolerance `delta`; the estimate is also visible wherever the ground truth
/// is and it is rendered. Per `τ`, the error is the share of the union of both
/// visible regions where only one pose is visible or `|d_est − d_gt| > τ`.
pub fn vsd(
    est: &Pose,
    gt: &Pose,
    mesh: &TriangleMesh,
    cam: &PinholeCamera,
    scene_depth: &DepthMap,
    taus: &[f64],
    delta: f64,
) -> Result<Vec<f64>> {
    if (scene_depth.width(), scene_depth.height()) != (cam.width, cam.height) {
        return Err(Error::Config("scene depth size differs from the camera".into()));
    }
    let d_scene = depth_to_distance(scene_depth, cam);
    let d_est = depth_to_distance(&render_depth(mesh, est, cam)?, cam);
    let d_gt = depth_to_distance(&render_depth(mesh, gt, cam)?, cam);
    let v_gt = visibility(&d_scene, &d_gt, delta);
    let mut v_est = visibility(&d_scene, &d_est, delta);
    for (ve, (vg, de)) in v_est.iter_mut().zip(v_gt.iter().zip(&d_est)) {
        *ve |= *vg && *de > 0.0;
    }
    let mut union = 0usize;
    let mut inter = Vec::new();
    for k in 0..v_gt.len() {
        if v_gt[k] || v_est[k] {
            union += 1;
        }
        if v_gt[k] && v_est[k] {
            inter.push((d_est[k] - d_gt[k]).abs());
        }
    }
    if union == 0 {
        return Err(Error::ObjectInvisible);
    }
    let only_one = union - inter.len();
    Ok(taus
        .iter()
        .map(|&tau| (only_one + inter.iter().filter(|d| **d > tau).count()) as f64 / union as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_mesh, discretize_symmetry, l_prism};
    use crate::synth::render_depth;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(600.0, 600.0, 160.0, 120.0, 320, 240).unwrap()
    }

    fn gt() -> Pose {
        Pose::from_axis_angle(Vec3::new(0.2, 1.0, 0.4), 0.8, Vec3::new(10.0, -5.0, 1000.0))
    }

    #[test]
    fn exact_estimates_score_zero() {
        let mesh = l_prism();
        let sym = SymmetrySet::identity();
        let scene = render_depth(&mesh, &gt(), &cam()).unwrap();
        assert_eq!(mssd(&gt(), &gt(), &mesh, &sym), 0.0);
        assert_eq!(mspd(&gt(), &gt(), &mesh, &sym, &cam()).unwrap(), 0.0);
        assert!(vsd(&gt(), &gt(), &mesh, &cam(), &scene, &[5.0, 20.0], 15.0)
            .unwrap()
            .iter()
            .all(|e| *e == 0.0));
    }

    #[test]
    fn translation_offsets() {
        let mesh = l_prism();
        let sym = SymmetrySet::identity();
        let shifted = Pose::new(gt().rotation, gt().translation + Vec3::new(7.0, 0.0, 0.0)).unwrap();
        assert!((mssd(&shifted, &gt(), &mesh, &sym) - 7.0).abs() < 1e-12);

        // Fronto-parallel: every vertex of a flat face at z shifts by Δx·fx/z pixels.
        let plate = TriangleMesh::new(
            vec![
                Vec3::new(-40.0, -30.0, 0.0),
                Vec3::new(40.0, -30.0, 0.0),
                Vec3::new(40.0, 30.0, 0.0),
                Vec3::new(-40.0, 30.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![],
        )
        .unwrap();
        let g = Pose::from_translation(Vec3::new(0.0, 0.0, 900.0));
        let e = Pose::from_translation(Vec3::new(3.0, 0.0, 900.0));
        let expected = 3.0 * 600.0 / 900.0;
        let got = mspd(&e, &g, &plate, &sym, &cam()).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got}");
    }

    #[test]
    fn four_fold_symmetry_removes_the_step() {
        let mesh = box_mesh(60.0, 60.0, 30.0);
        let sym = discretize_symmetry(Vec3::z(), 4).unwrap();
        let step = Pose::from_axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_2, Vec3::zeros());
        let est = gt().compose(&step);
        assert!(mssd(&est, &gt(), &mesh, &sym) < 1e-9);
        assert!(mspd(&est, &gt(), &mesh, &sym, &cam()).unwrap() < 1e-9);
        assert!(mssd(&est, &gt(), &mesh, &SymmetrySet::identity()) > 10.0);
    }

    #[test]
    fn depth_offset_beyond_tau_is_an_error_everywhere() {
        let mesh = box_mesh(80.0, 80.0, 40.0);
        let g = Pose::from_translation(Vec3::new(0.0, 0.0, 1000.0));
        let e = Pose::from_translation(Vec3::new(0.0, 0.0, 1010.0));
        let scene = render_depth(&mesh, &g, &cam()).unwrap();
        let errs = vsd(&e, &g, &mesh, &cam(), &scene, &[5.0], 15.0).unwrap();
        assert!(errs[0] > 0.99, "{errs:?}");
        let errs = vsd(&e, &g, &mesh, &cam(), &scene, &[20.0], 15.0).unwrap();
        // Only the silhouette-size change remains.
        assert!(errs[0] < 0.05, "{errs:?}");
    }

    #[test]
    fn fully_occluded_object_is_invisible() {
        let mesh = box_mesh(80.0, 80.0, 40.0);
        let g = Pose::from_translation(Vec3::new(0.0, 0.0, 1000.0));
        let wall = DepthMap::from_vec(320, 240, vec![500.0; 320 * 240]).unwrap();
        let r = vsd(&g, &g, &mesh, &cam(), &wall, &[5.0], 15.0);
        assert!(matches!(r, Err(Error::ObjectInvisible)));
    }
}
