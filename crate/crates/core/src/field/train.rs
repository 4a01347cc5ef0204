use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{build_inputs, DepthNormalization, FeatureProvider};
use super::loss::{loss_from_outputs, LossConfig, LossTerms, OutputScaling};
use super::model::NcfModel;
use super::network::{FieldNetwork, Real};
use super::optim::{RmsProp, RmsPropConfig};
use crate::geometry::{PinholeCamera, Pose};
use crate::image::RgbImage;
use crate::mesh::{MeshSdf, SymmetrySet};
use crate::rng::{derive_seed, stream_rng};
use crate::sampling::{sample_training_points, QueryBatch, SamplingConfig};
use crate::{Error, Result};

/// Hidden widths used at desk scale.
pub const DESK_HIDDEN: [usize; 4] = [256, 128, 64, 32];
/// Hidden widths of the full-size network.
pub const FULL_HIDDEN: [usize; 4] = [1024, 512, 256, 128];

/// Margin of the object-coordinate output range over the model's half-extent.
pub const Y_SCALE_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Images per optimizer step.
    pub batch_images: usize,
    pub hidden: Vec<usize>,
    pub features: FeatureProvider,
    pub optimizer: RmsPropConfig,
    pub loss: LossConfig,
    pub sampling: SamplingConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_images: 4,
            hidden: DESK_HIDDEN.to_vec(),
            features: FeatureProvider::default(),
            optimizer: RmsPropConfig::default(),
            loss: LossConfig::default(),
            sampling: SamplingConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_images == 0 || self.hidden.is_empty() {
            return Err(Error::Config(
                "training needs batch_images ≥ 1 and at least one hidden layer".into(),
            ));
        }
        self.features.validate()?;
        self.loss.validate()?;
        self.sampling.validate()
    }
}

/// One training image with its annotation, already in the reference camera.
#[derive(Debug, Clone)]
pub struct TrainingImage {
    pub image: RgbImage,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_y: f64,
    pub loss_s: f64,
    pub lr: f64,
}

/// Loss of one image and its parameter gradient, accumulated into `grad` with `weight`.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad<T: Real>(
    net: &FieldNetwork<T>,
    inputs: &[T],
    batch: &QueryBatch,
    sym: &SymmetrySet,
    gt: &Pose,
    scaling: &OutputScaling,
    cfg: &LossConfig,
    grad: &mut [T],
    weight: f64,
) -> Result<LossTerms> {
    let cache = net.forward(inputs)?;
    let (terms, mut d_out) = loss_from_outputs(cache.outputs(), batch, sym, gt, scaling, cfg)?;
    let w = T::from_f64(weight);
    for g in &mut d_out {
        *g = *g * w;
    }
    net.backward(inputs, &cache, &d_out, grad)?;
    Ok(terms)
}

/// Freshly initialized model for `mesh` with the configured conventions.
pub fn initial_model(sdf: &MeshSdf, cfg: &TrainConfig) -> Result<NcfModel> {
    let mut rng = stream_rng(derive_seed(cfg.seed, &[0x1A17]), 0);
    let net = FieldNetwork::init(cfg.features.dim() + 1, &cfg.hidden, &mut rng)?;
    Ok(NcfModel {
        net,
        features: cfg.features,
        depth: DepthNormalization::from_range(cfg.sampling.z_near, cfg.sampling.z_far),
        scaling: OutputScaling {
            y_scale: Y_SCALE_MARGIN * sdf.mesh().half_extent(),
            delta: cfg.loss.delta,
        },
    })
}

/// Trains a field on `images`.
///
/// Each epoch visits the images in a seeded random order, in batches of
/// `batch_images`; every image gets freshly sampled query points and contributes
/// its loss gradient with weight `1/batch`. `on_epoch` runs after every epoch
/// (e.g. to checkpoint). A non-finite loss or gradient aborts with an error; the
/// last checkpoint is whatever `on_epoch` stored.
pub fn train(
    images: &[TrainingImage],
    cam: &PinholeCamera,
    sdf: &MeshSdf,
    sym: &SymmetrySet,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&NcfModel, &EpochLog) -> Result<()>,
) -> Result<(NcfModel, Vec<EpochLog>)> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut model = initial_model(sdf, cfg)?;
    let mut opt = RmsProp::<f32>::new(cfg.optimizer, model.net.param_count());
    let mut grad = vec![0.0f32; model.net.param_count()];
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..images.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(derive_seed(cfg.seed, &[0xE90C, epoch as u64]), 0);
        order.shuffle(&mut rng);
        let (mut sum_y, mut sum_s) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_images) {
            grad.fill(0.0);
            let weight = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let item = &images[idx];
                let seed = derive_seed(cfg.seed, &[0x5A3F, epoch as u64, idx as u64]);
                let (batch, _) = sample_training_points(sdf, &item.pose, cam, &cfg.sampling, seed)?;
                let inputs = build_inputs(&model.features, &model.depth, &item.image, cam, &batch.points)?;
                let terms = loss_and_grad(
                    &model.net,
                    &inputs,
                    &batch,
                    sym,
                    &item.pose,
                    &model.scaling,
                    &cfg.loss,
                    &mut grad,
                    weight,
                )?;
                sum_y += terms.loss_y;
                sum_s += terms.loss_s;
            }
            opt.step(model.net.params_mut(), &grad)?;
        }
        let log = EpochLog {
            epoch,
            loss_y: sum_y / images.len() as f64,
            loss_s: sum_s / images.len() as f64,
            lr: cfg.optimizer.lr,
        };
        log::info!("epoch {epoch}: L_y {:.4} L_s {:.4}", log.loss_y, log.loss_s);
        on_epoch(&model, &log)?;
        logs.push(log);
    }
    Ok((model, logs))
}
