//! Both sides of the alignment: the temporal feature pyramid built from clip
//! features, and the encoded prompt ensembles built from learnable contexts.

mod conv;
mod prompts;
mod pyramid;

use serde::{Deserialize, Serialize};

pub use conv::{temporal_conv, ConvForward, ConvLayer, TemporalConvStack};
pub use prompts::{encode_prompts, init_context_bank, ContextBank, PromptEncoding, PseudoEncoder};
pub use pyramid::{build_pyramid, FeaturePyramid};

/// One annotated action instance, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSegment {
    pub start: f64,
    pub end: f64,
    pub class_id: usize,
}

/// A video as a `T x D` clip-feature matrix plus its annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub features: crate::Matrix,
    pub clip_stride_seconds: f64,
    pub annotations: Vec<GroundTruthSegment>,
}

impl FeatureSequence {
    pub fn num_clips(&self) -> usize {
        self.features.rows()
    }

    pub fn duration(&self) -> f64 {
        self.num_clips() as f64 * self.clip_stride_seconds
    }

    /// Checks `T >= 1`, a positive stride and `0 <= start < end <= T * stride`.
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |reason: String| crate::Error::InvalidArgument(format!("{}: {reason}", self.video_id));
        if self.num_clips() == 0 {
            return Err(bad("empty feature sequence".into()));
        }
        if !(self.clip_stride_seconds > 0.0) {
            return Err(bad(format!("clip stride {} must be positive", self.clip_stride_seconds)));
        }
        let duration = self.duration();
        for a in &self.annotations {
            if !(0.0 <= a.start && a.start < a.end && a.end <= duration) {
                return Err(bad(format!(
                    "annotation [{}, {}] outside [0, {duration}] or empty",
                    a.start, a.end
                )));
            }
        }
        Ok(())
    }
}
