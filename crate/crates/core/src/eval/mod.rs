//! Pose-error metrics, Average Recall and the inlier-fraction vs. visibility analysis.

mod metrics;
mod recall;
mod visibility;

pub use metrics::{depth_to_distance, mspd, mssd, vsd, DEFAULT_VSD_DELTA_MM};
pub use recall::{
    average_recall, evaluate_instance, recall, AverageRecall, EvalThresholds, InstanceErrors, PoseErrorReport, REFERENCE_WIDTH_PX,
};
pub use visibility::{
    bin_fractions, bins_to_csv, inlier_fraction_by_visibility, instance_inlier_fractions, visibility_bin, visible_mask, InlierFractions,
    VisibilityBin, VisibilityInstance, DEFAULT_VISIBILITY_BINS, VISIBLE_DEPTH_TOLERANCE_MM,
};
