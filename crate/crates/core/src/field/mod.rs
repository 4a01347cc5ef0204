//! The correspondence field: pixel-aligned features, the network, its training
//! objective and optimizer, and correspondence extraction at test time.

mod correspond;
mod features;
mod loss;
mod model;
mod network;
mod optim;
mod train;

pub use correspond::{
    correspondences_from_bytes, correspondences_to_bytes, estimate_pose, extract_correspondences, read_correspondences,
    write_correspondences, CorrespondenceField, EstimateParams, OracleField, CORR_MAGIC, CORR_VERSION, DEFAULT_KEEP_FRACTION,
};
pub use features::{build_inputs, DepthNormalization, FeatureProvider, FEATURE_OFFSET, FEATURE_SCALE};
pub use loss::{huber, loss_from_outputs, LossConfig, LossTerms, OutputScaling};
pub use model::{NcfModel, PREDICT_CHUNK, WEIGHTS_MAGIC};
pub use network::{FieldNetwork, ForwardCache, LayerShape, Real, LEAKY_SLOPE, OUTPUT_DIM};
pub use optim::{RmsProp, RmsPropConfig};
pub use train::{initial_model, loss_and_grad, train, EpochLog, TrainConfig, TrainingImage, DESK_HIDDEN, FULL_HIDDEN, Y_SCALE_MARGIN};
