use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localizer::DecodeConfig;
use crate::otalign::SinkhornConfig;

/// How a level's features are matched against a class's prompt ensemble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentStrategy {
    /// Entropic OT plan over cosine cost.
    #[default]
    Ot,
    /// Hard balanced one-to-one assignment over squared-Euclidean cost.
    Hungarian,
    /// Uniform coupling over squared-Euclidean cost.
    Euclidean,
    /// Cosine similarity to the averaged prompt.
    Mean,
}

impl AlignmentStrategy {
    pub const ALL: [AlignmentStrategy; 4] = [Self::Ot, Self::Hungarian, Self::Euclidean, Self::Mean];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ot => "ot",
            Self::Hungarian => "hungarian",
            Self::Euclidean => "euclidean",
            Self::Mean => "mean",
        }
    }
}

impl std::str::FromStr for AlignmentStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown alignment strategy '{s}'")))
    }
}

impl std::fmt::Display for AlignmentStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Optimization and architecture settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub shots: usize,
    pub sinkhorn: SinkhornConfig,
    pub lambda_reg: f64,
    pub tau: f64,
    pub seed: u64,
    pub alignment_strategy: AlignmentStrategy,
    pub num_prompts: usize,
    pub n_ctx: usize,
    pub d_ctx: usize,
    pub fpn_levels: usize,
    pub conv_depth: usize,
    /// Seed of the frozen prompt encoder; shared across training seeds.
    pub encoder_seed: u64,
    pub decode: DecodeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 2,
            learning_rate: 1e-3,
            shots: 5,
            sinkhorn: SinkhornConfig::default(),
            lambda_reg: 1.0,
            tau: 0.07,
            seed: 0,
            alignment_strategy: AlignmentStrategy::Ot,
            num_prompts: 6,
            n_ctx: 16,
            d_ctx: 32,
            fpn_levels: 5,
            conv_depth: 3,
            encoder_seed: 2024,
            decode: DecodeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.shots == 0 {
            return bad("shots must be at least 1");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be non-negative");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.lambda_reg >= 0.0) {
            return bad("lambda_reg must be non-negative");
        }
        if !(self.sinkhorn.lambda > 0.0 && self.sinkhorn.delta > 0.0) {
            return bad("sinkhorn lambda and delta must be positive");
        }
        if self.num_prompts == 0 || self.n_ctx == 0 || self.d_ctx == 0 {
            return bad("num_prompts, n_ctx and d_ctx must be at least 1");
        }
        if self.fpn_levels == 0 {
            return bad("fpn_levels must be at least 1");
        }
        Ok(())
    }
}
