use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kabsch::{kabsch, kabsch_residual};
use super::{Pose, Vec3};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Model-frame triplets with a smaller triangle area (mm²) are rejected.
pub const MIN_TRIPLET_AREA: f64 = 1e-6;

/// Upper bound on triplet draws per requested hypothesis before giving up.
const MAX_DRAWS_PER_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// Query point, camera frame (mm).
    pub x: Vec3,
    /// Predicted object coordinates, model frame (mm).
    pub y: Vec3,
    /// Predicted signed distance (mm).
    pub s: f64,
}

/// 3D-3D correspondences restricted to predictions with `|s| < δ`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    /// Keeps the pairs with `|s| < delta`, preserving order.
    pub fn new(pairs: impl IntoIterator<Item = Correspondence>, delta: f64) -> Self {
        CorrespondenceSet {
            pairs: pairs.into_iter().filter(|c| c.s.abs() < delta).collect(),
        }
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn camera_points(&self) -> Vec<Vec3> {
        self.pairs.iter().map(|c| c.x).collect()
    }

    pub fn model_points(&self) -> Vec<Vec3> {
        self.pairs.iter().map(|c| c.y).collect()
    }

    /// Number of pairs with `‖R·y + t − x‖ < tau`.
    pub fn count_inliers(&self, pose: &Pose, tau: f64) -> usize {
        self.pairs.iter().filter(|c| is_inlier(pose, c, tau)).count()
    }
}

#[inline]
fn is_inlier(pose: &Pose, c: &Correspondence, tau: f64) -> bool {
    (pose.transform(&c.y) - c.x).norm_squared() < tau * tau
}

#[derive(Debug, Clone)]
pub struct RansacOutcome {
    /// Best hypothesis refined by Kabsch over its inliers.
    pub pose: Pose,
    /// Inliers of the refined pose.
    pub inlier_count: usize,
    /// Best hypothesis before refinement.
    pub hypothesis: Pose,
    pub hypothesis_inliers: usize,
    /// Iteration index of the winning hypothesis.
    pub best_iteration: usize,
    /// Triplets drawn and rejected as degenerate.
    pub rejected_triplets: usize,
}

struct Hypothesis {
    pose: Pose,
    inliers: usize,
    residual: f64,
}

/// Kabsch-RANSAC with a fixed number of hypotheses.
///
/// Each hypothesis is the Kabsch fit of a random triplet of distinct correspondences
/// drawn from the `(seed, 0)` stream. Degenerate triplets are redrawn and do not count
/// as iterations. Hypotheses are ranked by inlier count, then by lower squared
/// residual over their inliers, then by earlier iteration.
pub fn ransac_fit(c: &CorrespondenceSet, iters: usize, tau3d: f64, seed: u64) -> Result<RansacOutcome> {
    let m = c.len();
    if m < 3 {
        return Err(Error::InsufficientCorrespondences(m));
    }
    if iters == 0 {
        return Err(Error::Config("RANSAC needs at least one iteration".into()));
    }

    let pairs = c.pairs();
    let mut rng = stream_rng(seed, 0);
    let mut proposals = Vec::with_capacity(iters);
    let mut rejected = 0usize;
    let max_draws = iters.saturating_mul(MAX_DRAWS_PER_ITER);
    let mut draws = 0usize;
    while proposals.len() < iters && draws < max_draws {
        draws += 1;
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        let k = rng.random_range(0..m);
        if i == j || j == k || i == k {
            rejected += 1;
            continue;
        }
        let (a, b, d) = (&pairs[i], &pairs[j], &pairs[k]);
        let area = 0.5 * (b.y - a.y).cross(&(d.y - a.y)).norm();
        if !(area >= MIN_TRIPLET_AREA) {
            rejected += 1;
            continue;
        }
        match kabsch(&[a.x, b.x, d.x], &[a.y, b.y, d.y]) {
            Ok(pose) => proposals.push(pose),
            Err(_) => rejected += 1,
        }
    }
    if proposals.is_empty() {
        return Err(Error::NoPoseFound);
    }

    let scored: Vec<Hypothesis> = proposals
        .par_iter()
        .map(|pose| {
            let mut inliers = 0usize;
            let mut residual = 0.0;
            for c in pairs {
                let r2 = (pose.transform(&c.y) - c.x).norm_squared();
                if r2 < tau3d * tau3d {
                    inliers += 1;
                    residual += r2;
                }
            }
            Hypothesis {
                pose: *pose,
                inliers,
                residual,
            }
        })
        .collect();

    let mut best = 0usize;
    for (idx, h) in scored.iter().enumerate().skip(1) {
        let b = &scored[best];
        if h.inliers > b.inliers || (h.inliers == b.inliers && h.residual < b.residual) {
            best = idx;
        }
    }
    let hyp = &scored[best];

    let (x_in, y_in): (Vec<Vec3>, Vec<Vec3>) = pairs.iter().filter(|c| is_inlier(&hyp.pose, c, tau3d)).map(|c| (c.x, c.y)).unzip();
    let pose = kabsch(&x_in, &y_in).unwrap_or(hyp.pose);
    debug_assert!(x_in.len() < 3 || kabsch_residual(&pose, &x_in, &y_in) <= hyp.residual * (1.0 + 1e-9) + 1e-12);

    Ok(RansacOutcome {
        pose,
        inlier_count: c.count_inliers(&pose, tau3d),
        hypothesis: hyp.pose,
        hypothesis_inliers: hyp.inliers,
        best_iteration: best,
        rejected_triplets: rejected,
    })
}
