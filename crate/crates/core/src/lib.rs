//! Few-shot temporal action localization with prompt ensembles aligned to a
//! temporal feature pyramid through entropic optimal transport.
//!
//! The numerical kernels (`numerics`, `otalign`, `representation` and the
//! loss functions in `localizer`) are generic over [`numerics::Scalar`], so
//! they run in `f32` or `f64`. The model, trainer, data generator and
//! evaluator work in `f64`; the aliases below name the concrete types.

mod codec;
mod error;

pub mod datagen;
pub mod evalkit;
pub mod localizer;
pub mod numerics;
pub mod otalign;
pub mod representation;
pub mod trainer;

pub use error::{Error, Result};

pub type Matrix = numerics::Mat<f64>;
pub type MatrixF32 = numerics::Mat<f32>;
pub type Slot = numerics::GradSlot<f64>;
pub type Cost = otalign::CostMatrix<f64>;
pub type Plan = otalign::TransportPlan<f64>;
pub type Pyramid = representation::FeaturePyramid<f64>;
pub type ConvStack = representation::TemporalConvStack<f64>;
pub type Contexts = representation::ContextBank<f64>;
pub type Encoder = representation::PseudoEncoder<f64>;
