//! Singular value decomposition of 3×3 matrices.
//!
//! `AᵀA` is diagonalized with cyclic Jacobi rotations, giving `V` and the squared
//! singular values. `U` is recovered column by column from `A·vᵢ / σᵢ`, with the
//! last column completed as `±u₁ × u₂` so that `U` stays orthonormal when `A` is
//! rank deficient.

use super::{Mat3, Vec3};

/// Off-diagonal threshold of the Jacobi sweeps, relative to `sqrt(|a_pp · a_qq|)`.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub u: Mat3,
    /// Singular values, descending.
    pub singular_values: Vec3,
    pub v: Mat3,
}

/// Eigen-decomposition of a symmetric 3×3 matrix; eigenvalues sorted descending.
pub fn symmetric_eigen3(m: &Mat3) -> (Vec3, Mat3) {
    let mut a = *m;
    let mut v = Mat3::identity();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let app = a[(p, p)];
            let aqq = a[(q, q)];
            let scale = (app * aqq).abs().sqrt();
            if apq.abs() <= JACOBI_TOLERANCE * scale {
                continue;
            }
            rotated = true;
            // Rotation angle zeroing a_pq (Golub & Van Loan, sym.schur2).
            let theta = (aqq - app) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[(k, p)];
                let akq = a[(k, q)];
                a[(k, p)] = c * akp - s * akq;
                a[(k, q)] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[(p, k)];
                let aqk = a[(q, k)];
                a[(p, k)] = c * apk - s * aqk;
                a[(q, k)] = s * apk + c * aqk;
            }
            for k in 0..3 {
                let vkp = v[(k, p)];
                let vkq = v[(k, q)];
                v[(k, p)] = c * vkp - s * vkq;
                v[(k, q)] = s * vkp + c * vkq;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = Vec3::new(a[(order[0], order[0])], a[(order[1], order[1])], a[(order[2], order[2])]);
    let vectors = Mat3::from_columns(&[
        v.column(order[0]).into_owned(),
        v.column(order[1]).into_owned(),
        v.column(order[2]).into_owned(),
    ]);
    (values, vectors)
}

/// `A = U · diag(σ) · Vᵀ` with orthonormal `U`, `V` and `σ₁ ≥ σ₂ ≥ σ₃ ≥ 0`.
pub fn svd3(a: &Mat3) -> Svd3 {
    let (eig, v) = symmetric_eigen3(&(a.transpose() * a));
    let sigma = eig.map(|l| l.max(0.0).sqrt());
    let floor = sigma[0] * 1e-14;

    let av: Vec<Vec3> = (0..3).map(|i| a * v.column(i)).collect();

    let u1 = if sigma[0] > 0.0 { av[0] / sigma[0] } else { Vec3::x() };
    let u1 = u1.normalize();
    let u2 = if sigma[1] > floor {
        let w = av[1] - u1 * u1.dot(&av[1]);
        w.normalize()
    } else {
        any_orthogonal(&u1)
    };
    let mut u3 = u1.cross(&u2);
    if sigma[2] > floor && u3.dot(&av[2]) < 0.0 {
        u3 = -u3;
    }
    Svd3 {
        u: Mat3::from_columns(&[u1, u2, u3]),
        singular_values: sigma,
        v,
    }
}

fn any_orthogonal(a: &Vec3) -> Vec3 {
    let pick = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (pick - a * a.dot(&pick)).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reconstruct(s: &Svd3) -> Mat3 {
        s.u * Mat3::from_diagonal(&s.singular_values) * s.v.transpose()
    }

    fn orthonormal(m: &Mat3) -> f64 {
        (m.transpose() * m - Mat3::identity()).abs().max()
    }

    #[test]
    fn diagonal_and_rank_deficient() {
        let d = Mat3::from_diagonal(&Vec3::new(1.0, 5.0, 3.0));
        let s = svd3(&d);
        assert_eq!(s.singular_values, Vec3::new(5.0, 3.0, 1.0));
        assert!((reconstruct(&s) - d).abs().max() < 1e-14);

        let r1 = Vec3::new(1.0, 2.0, 3.0) * Vec3::new(-1.0, 0.5, 2.0).transpose();
        let s = svd3(&r1);
        assert!(orthonormal(&s.u) < 1e-12 && orthonormal(&s.v) < 1e-12);
        assert!((reconstruct(&s) - r1).abs().max() < 1e-12);

        let z = svd3(&Mat3::zeros());
        assert!(orthonormal(&z.u) < 1e-12);
    }

    #[test]
    fn matches_nalgebra_singular_values() {
        let m = Mat3::new(2.0, -1.0, 0.3, 0.7, 4.0, -2.2, 1.1, 0.0, 0.5);
        let ours = svd3(&m).singular_values;
        let mut theirs: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for i in 0..3 {
            assert!((ours[i] - theirs[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn reconstructs_random_matrices(e in prop::array::uniform9(-100.0f64..100.0)) {
            let m = Mat3::from_row_slice(&e);
            let s = svd3(&m);
            prop_assert!(orthonormal(&s.u) < 1e-10);
            prop_assert!(orthonormal(&s.v) < 1e-10);
            prop_assert!(s.singular_values[0] >= s.singular_values[1]);
            prop_assert!(s.singular_values[1] >= s.singular_values[2]);
            prop_assert!((reconstruct(&s) - m).abs().max() < 1e-9 * (1.0 + m.abs().max()));
        }
    }
}
