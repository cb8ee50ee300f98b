use crate::error::{Error, Result};
use crate::numerics::{l2_normalize_rows, normalize_rows_backward, Mat, RowNormalized, Scalar};

/// Sum of squared distances over every (feature, prompt) pair, no coupling.
pub fn euclidean_align<T: Scalar>(features: &Mat<T>, prompts: &Mat<T>) -> Result<T> {
    Ok(super::sq_euclidean_cost(features, prompts)?.values.sum())
}

/// Averaged prompt, re-normalized to unit length (`1 x D`).
///
/// A single prompt is returned as-is: it is already unit length, and the
/// shortcut keeps the one-prompt case bit-identical to using that prompt.
pub fn mean_prompt<T: Scalar>(prompts: &Mat<T>) -> Result<RowNormalized<T>> {
    let (n, d) = prompts.shape();
    if n == 0 {
        return Err(Error::InvalidArgument("mean of zero prompts".into()));
    }
    if n == 1 {
        return Ok(RowNormalized {
            matrix: prompts.clone(),
            norms: vec![T::one()],
            degenerate: vec![false],
        });
    }
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let mean = Mat::from_fn(1, d, |_, k| (0..n).map(|j| prompts[(j, k)]).sum::<T>() * inv_n);
    let normalized = l2_normalize_rows(&mean, T::lit(1e-12));
    if normalized.degenerate[0] {
        return Err(Error::Degenerate {
            context: "mean prompt",
            norm: normalized.norms[0].to_f64_lossy(),
        });
    }
    Ok(normalized)
}

/// Gradient with respect to the individual prompts given the gradient of the
/// normalized mean.
pub fn mean_prompt_backward<T: Scalar>(
    n: usize,
    fwd: &RowNormalized<T>,
    grad_mean: &Mat<T>,
) -> Mat<T> {
    if n == 1 {
        return grad_mean.clone();
    }
    let d_raw = normalize_rows_backward(fwd, grad_mean);
    let inv_n = T::one() / T::from_usize(n).unwrap();
    Mat::from_fn(n, d_raw.cols(), |_, k| d_raw[(0, k)] * inv_n)
}

/// Cosine similarity of each feature row to the averaged prompt.
pub fn mean_prompt_align<T: Scalar>(features: &Mat<T>, prompts: &Mat<T>) -> Result<Vec<T>> {
    let mean = mean_prompt(prompts)?;
    Ok(features.matmul_t(&mean.matrix)?.into_vec())
}
