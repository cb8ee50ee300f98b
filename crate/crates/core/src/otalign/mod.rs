//! Alignment between a pyramid level's features and a class's prompt ensemble.
//!
//! Four strategies are provided: entropic optimal transport solved with
//! Sinkhorn scaling, a hard one-to-one Hungarian matching, the uncoupled
//! all-pairs squared-Euclidean sum, and cosine similarity to the averaged
//! prompt.

mod baselines;
mod cost;
mod hungarian;
mod sinkhorn;

pub use baselines::{euclidean_align, mean_prompt, mean_prompt_align, mean_prompt_backward};
pub use cost::{
    cosine_cost, cosine_cost_backward, sq_euclidean_cost, sq_euclidean_cost_backward, CostMatrix,
    CostMetric,
};
pub use hungarian::{balanced_assignment, hungarian_align, Assignment};
pub use sinkhorn::{ot_distance, sinkhorn, Marginals, SinkhornConfig, TransportPlan};
