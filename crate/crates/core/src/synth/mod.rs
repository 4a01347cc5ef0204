//! Software rasterizer and synthetic dataset generation.

mod dataset;
mod raster;

pub use dataset::{
    generate_dataset, place_occluder, render_record, AugmentConfig, BackgroundMode, DatasetConfig, DatasetManifest, DatasetRecord,
    OcclusionConfig, PoseDistribution, MANIFEST_FILE, OCCLUDER_GAP_MM,
};
pub use raster::{half_plane_occluder, rasterize, render_depth, Background, Occluder, RenderOutput, AMBIENT, NEAR_PLANE_MM};
