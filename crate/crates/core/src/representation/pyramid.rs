use crate::error::{Error, Result};
use crate::numerics::{Mat, Scalar};

/// Multi-resolution stack: level 0 is the refined sequence and each further
/// level halves the temporal length by max-pooling disjoint pairs.
#[derive(Clone, Debug)]
pub struct FeaturePyramid<T> {
    pub levels: Vec<Mat<T>>,
    /// Temporal stride of each level in clips (`2^l`).
    pub strides: Vec<usize>,
    /// For levels `l >= 1`, the row of level `l - 1` that won each max.
    argmax: Vec<Vec<usize>>,
}

impl<T: Scalar> FeaturePyramid<T> {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.rows()).collect()
    }

    /// Routes per-level gradients back to level 0 and sums them there.
    pub fn backward(&self, mut grads: Vec<Mat<T>>) -> Result<Mat<T>> {
        if grads.len() != self.levels.len() {
            return Err(Error::InvalidArgument(format!(
                "pyramid backward got {} gradients for {} levels",
                grads.len(),
                self.levels.len()
            )));
        }
        for l in (1..self.levels.len()).rev() {
            let upper = grads[l].clone();
            let lower = &mut grads[l - 1];
            let d = upper.cols();
            for k in 0..upper.rows() {
                for c in 0..d {
                    let src = self.argmax[l][k * d + c];
                    lower[(src, c)] += upper[(k, c)];
                }
            }
        }
        Ok(grads.swap_remove(0))
    }
}

/// Builds `levels` levels with lengths `T, ceil(T/2), ceil(T/4), ...`.
///
/// A trailing odd element pools on its own. Lengths bottom out at 1; asking
/// for more levels than that repeats length-1 levels and logs a warning.
pub fn build_pyramid<T: Scalar>(seq: &Mat<T>, levels: usize) -> Result<FeaturePyramid<T>> {
    if levels == 0 {
        return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
    }
    if seq.rows() == 0 {
        return Err(Error::InvalidArgument("pyramid of an empty sequence".into()));
    }
    let mut out = FeaturePyramid {
        levels: vec![seq.clone()],
        strides: vec![1],
        argmax: vec![Vec::new()],
    };
    let mut warned = false;
    for l in 1..levels {
        let prev = &out.levels[l - 1];
        let (n, d) = prev.shape();
        if n == 1 && !warned {
            log::warn!("pyramid level {l} would be shorter than one clip; clamping at length 1");
            warned = true;
        }
        let m = n.div_ceil(2);
        let mut pooled = Mat::zeros(m, d);
        let mut arg = vec![0usize; m * d];
        for k in 0..m {
            let a = 2 * k;
            let b = (2 * k + 1).min(n - 1);
            for c in 0..d {
                let (va, vb) = (prev[(a, c)], prev[(b, c)]);
                let (v, src) = if vb > va { (vb, b) } else { (va, a) };
                pooled[(k, c)] = v;
                arg[k * d + c] = src;
            }
        }
        out.levels.push(pooled);
        out.strides.push(1 << l);
        out.argmax.push(arg);
    }
    Ok(out)
}
