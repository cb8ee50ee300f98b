//! Few-shot training of the prompt contexts, the temporal convolutions and
//! the regression head.

mod config;
mod model;
mod optim;
mod persist;
mod sampling;

pub use config::{AlignmentStrategy, TrainConfig};
pub use model::{Couplings, ForwardPass, ModelState};
pub use optim::{adam_update, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use persist::{load_model, save_model, MODEL_SCHEMA_VERSION};
pub use sampling::sample_few_shot;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localizer::LossBreakdown;
use crate::numerics::Rng;
use crate::representation::FeatureSequence;
use crate::Matrix;

/// Mean losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub cls: f64,
    pub reg: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochLog>,
    /// Ids of the support videos the model was fitted on.
    pub support: Vec<String>,
}

/// One optimizer step on `batch`. Returns batch means of the per-video
/// normalized terms, so `cls + reg == total` (`reg` includes `lambda_reg`).
pub fn train_step(model: &mut ModelState, batch: &[FeatureSequence], opt: &mut OptimizerState) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    model.zero_grad();
    let prompts = model.encode_all()?;
    let mut d_prompts: Vec<Matrix> = prompts
        .iter()
        .map(|p| Matrix::zeros(p.embeddings().rows(), p.embeddings().cols()))
        .collect();
    let inv_b = 1.0 / batch.len() as f64;
    let mut mean = LossBreakdown::default();
    for seq in batch {
        let (loss, mut grads, fwd) = model.video_loss(seq, &prompts, None)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        for m in grads.logits.iter_mut().chain(grads.offsets.iter_mut()) {
            *m = m.scale(inv_b);
        }
        model.backward(&fwd, &prompts, &grads, &mut d_prompts)?;
        let norm = loss.n_pos.max(1) as f64;
        mean.cls += loss.cls / norm * inv_b;
        mean.reg += model.config.lambda_reg * loss.reg / norm * inv_b;
        mean.total += loss.total * inv_b;
        mean.n_pos += loss.n_pos;
    }
    model.backward_prompts(&prompts, &d_prompts)?;
    if model.slots().any(|s| !s.grad.is_finite()) {
        return Err(Error::NonFinite("parameter gradient"));
    }
    let lr = model.config.learning_rate;
    adam_update(model.slots_mut(), opt, lr)?;
    Ok(mean)
}

/// Samples a `shots`-per-class support set from `videos` and runs
/// `config.epochs` passes over it. `on_epoch` sees each epoch's mean losses.
pub fn train(
    model: &mut ModelState,
    videos: &[FeatureSequence],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if let Some(v) = videos.iter().find(|v| v.features.cols() != model.feature_dim) {
        return Err(Error::Incompatible(format!(
            "video {} has {}-d features, model expects {}-d",
            v.video_id,
            v.features.cols(),
            model.feature_dim
        )));
    }
    let root = Rng::new(cfg.seed);
    let support = sample_few_shot(videos, cfg.shots, model.num_classes, &mut root.fork(21))?;
    let mut order_rng = root.fork(22);
    let mut opt = OptimizerState::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..support.len()).collect();
    for _ in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut sums = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<FeatureSequence> = chunk.iter().map(|&i| support[i].clone()).collect();
            let loss = train_step(model, &batch, &mut opt)?;
            let w = chunk.len() as f64;
            sums.0 += loss.cls * w;
            sums.1 += loss.reg * w;
            sums.2 += loss.total * w;
        }
        model.epoch += 1;
        let n = support.len().max(1) as f64;
        let log = EpochLog {
            epoch: model.epoch,
            cls: sums.0 / n,
            reg: sums.1 / n,
            total: sums.2 / n,
        };
        on_epoch(&log);
        history.push(log);
    }
    Ok(TrainOutcome {
        history,
        support: support.into_iter().map(|v| v.video_id).collect(),
    })
}
