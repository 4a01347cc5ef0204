use super::svd::svd3;
use super::{Mat3, Pose, Vec3};
use crate::{Error, Result};

/// Rank test on the cross-covariance: `σ₂ ≤ RANK_TOLERANCE · σ₁` counts as rank < 2.
const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares rigid transform `(R, t)` minimizing `Σ ‖R·yᵢ + t − xᵢ‖²`.
///
/// `x` are camera-frame points, `y` the corresponding model-frame points.
/// The rotation comes from the SVD of the cross-covariance of the centered sets;
/// when the unconstrained solution is a reflection, the last column of `V` is
/// negated so that `det(R) = +1`.
pub fn kabsch(x: &[Vec3], y: &[Vec3]) -> Result<Pose> {
    if x.len() != y.len() {
        return Err(Error::Degenerate(format!("point set sizes differ ({} vs {})", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("need at least 3 point pairs, got {n}")));
    }
    let cx = centroid(x);
    let cy = centroid(y);

    let mut h = Mat3::zeros();
    for (xi, yi) in x.iter().zip(y) {
        h += (yi - cy) * (xi - cx).transpose();
    }
    let svd = svd3(&h);
    let sv = svd.singular_values;
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOLERANCE * sv[0] {
        return Err(Error::Degenerate(format!(
            "cross-covariance rank < 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }

    let mut v = svd.v;
    let mut rotation = v * svd.u.transpose();
    if rotation.determinant() < 0.0 {
        let flipped = -v.column(2);
        v.set_column(2, &flipped);
        rotation = v * svd.u.transpose();
    }
    let translation = cx - rotation * cy;
    Ok(Pose { rotation, translation })
}

/// Sum of squared alignment residuals `Σ ‖R·yᵢ + t − xᵢ‖²`.
pub fn kabsch_residual(pose: &Pose, x: &[Vec3], y: &[Vec3]) -> f64 {
    x.iter().zip(y).map(|(xi, yi)| (pose.transform(yi) - xi).norm_squared()).sum()
}

fn centroid(p: &[Vec3]) -> Vec3 {
    p.iter().fold(Vec3::zeros(), |acc, v| acc + v) / p.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = stream_rng(seed, 0);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                )
            })
            .collect()
    }

    #[test]
    fn identity_fit() {
        let y = random_points(10, 1);
        let p = kabsch(&y, &y).unwrap();
        assert!((p.rotation - Mat3::identity()).abs().max() < 1e-9);
        assert!(p.translation.abs().max() < 1e-9);
    }

    #[test]
    fn recovers_random_pose() {
        let y = random_points(100, 2);
        let gt = Pose::from_axis_angle(Vec3::new(0.3, -1.0, 0.4), 2.1, Vec3::new(40.0, -12.0, 950.0));
        let x: Vec<Vec3> = y.iter().map(|p| gt.transform(p)).collect();
        let p = kabsch(&x, &y).unwrap();
        assert!((p.rotation - gt.rotation).abs().max() < 1e-9);
        assert!((p.translation - gt.translation).abs().max() < 1e-9);
    }

    #[test]
    fn mirrored_input_still_gives_proper_rotation() {
        // X is a reflection of Y, so the unconstrained solution has det = -1.
        let y = random_points(12, 3);
        let mirror = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        let x: Vec<Vec3> = y.iter().map(|p| mirror * p).collect();
        let svd = svd3(&y.iter().zip(&x).fold(Mat3::zeros(), |h, (yi, xi)| h + yi * xi.transpose()));
        assert!((svd.v * svd.u.transpose()).determinant() < 0.0);
        let p = kabsch(&x, &y).unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn planar_triplet_gives_proper_rotation() {
        let y = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(50.0, 0.0, 0.0), Vec3::new(0.0, 30.0, 0.0)];
        let x: Vec<Vec3> = y.iter().map(|p| Vec3::new(p.x, -p.y, 0.0)).collect();
        let p = kabsch(&x, &y).unwrap();
        p.validate().unwrap();
        // Proper rotation matching the mirrored planar triplet: 180° about x.
        assert!(kabsch_residual(&p, &x, &y) < 1e-18);
    }

    #[test]
    fn degenerate_inputs() {
        let y = random_points(2, 4);
        assert!(matches!(kabsch(&y, &y), Err(Error::Degenerate(_))));
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(kabsch(&line, &line), Err(Error::Degenerate(_))));
    }

    #[test]
    fn least_squares_optimality_against_perturbations() {
        let y = random_points(30, 5);
        let gt = Pose::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.4, Vec3::new(0.0, 0.0, 800.0));
        let mut rng = stream_rng(5, 1);
        let x: Vec<Vec3> = y
            .iter()
            .map(|p| {
                gt.transform(p)
                    + Vec3::new(
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                    )
            })
            .collect();
        let best = kabsch(&x, &y).unwrap();
        let r0 = kabsch_residual(&best, &x, &y);
        for k in 0..20 {
            let d = Pose::from_axis_angle(Vec3::new(k as f64, 1.0, 2.0), 1e-3, Vec3::new(0.01, -0.02, 0.01));
            assert!(kabsch_residual(&d.compose(&best), &x, &y) >= r0);
        }
    }
}
