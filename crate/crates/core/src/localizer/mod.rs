//! Detection heads on top of the alignment: per-location class logits from
//! transported cost, boundary offsets from a linear head, target assignment,
//! the focal + DIoU objective, decoding and NMS.

mod decode;
mod heads;
mod loss;
mod targets;

use serde::{Deserialize, Serialize};

use crate::numerics::Scalar;
use crate::Matrix;

pub use decode::{decode, nms, DecodeConfig};
pub use heads::{
    coupling_weights, regress_offsets, score_locations, score_locations_backward, score_with_coupling,
    HeadForward, RegressionHead,
};
pub use loss::{
    diou_loss, diou_loss_grad, focal_loss, focal_loss_logit, total_loss, total_loss_with_grad, LossBreakdown,
    LossGrads, FOCAL_ALPHA, FOCAL_GAMMA, PROB_CLAMP,
};
pub use targets::{assign_targets, LevelTargets, RegressionRanges, TargetAssignment};

/// A detected (or annotated) action, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionInstance {
    pub start: f64,
    pub end: f64,
    pub class_id: usize,
    pub score: f64,
}

/// Head outputs for every pyramid level: `logits[l]` is `T_l x C`,
/// `offsets[l]` is `T_l x 2` holding non-negative (start, end) distances in
/// units of the level stride.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelLogits {
    pub logits: Vec<Matrix>,
    pub offsets: Vec<Matrix>,
}

impl LevelLogits {
    pub fn num_levels(&self) -> usize {
        self.logits.len()
    }

    pub fn num_classes(&self) -> usize {
        self.logits.first().map_or(0, |m| m.cols())
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
