use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Mat, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMetric {
    Cosine,
    SquaredEuclidean,
}

/// Pairwise costs between `T_l` features (rows) and `N` prompts (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix<T> {
    pub values: Mat<T>,
    pub metric: CostMetric,
}

impl<T: Scalar> CostMatrix<T> {
    pub fn new(values: Mat<T>, metric: CostMetric) -> Self {
        Self { values, metric }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

fn check_dims<T: Scalar>(features: &Mat<T>, prompts: &Mat<T>, op: &'static str) -> Result<()> {
    if features.cols() != prompts.cols() {
        return Err(Error::DimensionMismatch {
            op,
            left: features.shape(),
            right: prompts.shape(),
        });
    }
    Ok(())
}

/// `C_ij = 1 - <f_i, g_j>` for row-normalized inputs, clamped to `[0, 2]`.
///
/// The clamp only absorbs rounding; the backward pass ignores it.
pub fn cosine_cost<T: Scalar>(features: &Mat<T>, prompts: &Mat<T>) -> Result<CostMatrix<T>> {
    check_dims(features, prompts, "cosine_cost")?;
    let sim = features.matmul_t(prompts)?;
    let two = T::lit(2.0);
    let values = sim.map(|s| (T::one() - s).max(T::zero()).min(two));
    Ok(CostMatrix::new(values, CostMetric::Cosine))
}

/// Backward of [`cosine_cost`]: `dF = -dC G`, `dG = -dC^T F`.
pub fn cosine_cost_backward<T: Scalar>(
    features: &Mat<T>,
    prompts: &Mat<T>,
    grad_cost: &Mat<T>,
) -> Result<(Mat<T>, Mat<T>)> {
    let d_features = crate::numerics::matmul(grad_cost, prompts)?.scale(-T::one());
    let d_prompts = grad_cost.t_matmul(features)?.scale(-T::one());
    Ok((d_features, d_prompts))
}

/// `C_ij = |f_i - g_j|^2`.
pub fn sq_euclidean_cost<T: Scalar>(features: &Mat<T>, prompts: &Mat<T>) -> Result<CostMatrix<T>> {
    check_dims(features, prompts, "sq_euclidean_cost")?;
    let values = Mat::from_fn(features.rows(), prompts.rows(), |i, j| {
        features
            .row(i)
            .iter()
            .zip(prompts.row(j))
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    });
    Ok(CostMatrix::new(values, CostMetric::SquaredEuclidean))
}

/// Backward of [`sq_euclidean_cost`]:
/// `dF_i = 2 sum_j dC_ij (f_i - g_j)`, `dG_j = 2 sum_i dC_ij (g_j - f_i)`.
pub fn sq_euclidean_cost_backward<T: Scalar>(
    features: &Mat<T>,
    prompts: &Mat<T>,
    grad_cost: &Mat<T>,
) -> Result<(Mat<T>, Mat<T>)> {
    check_dims(features, prompts, "sq_euclidean_cost_backward")?;
    let two = T::lit(2.0);
    let row_w = grad_cost.row_sums();
    let col_w = grad_cost.col_sums();
    let dc_g = crate::numerics::matmul(grad_cost, prompts)?;
    let dct_f = grad_cost.t_matmul(features)?;
    let d_features = Mat::from_fn(features.rows(), features.cols(), |i, k| {
        two * (row_w[i] * features[(i, k)] - dc_g[(i, k)])
    });
    let d_prompts = Mat::from_fn(prompts.rows(), prompts.cols(), |j, k| {
        two * (col_w[j] * prompts[(j, k)] - dct_f[(j, k)])
    });
    Ok((d_features, d_prompts))
}
