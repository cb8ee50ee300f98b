use crate::error::{Error, Result};
use crate::numerics::{matmul, GradSlot, Mat, Rng, Scalar};

/// Width-3 temporal convolution, `D_in -> D_out`.
///
/// `weight` stacks the three taps vertically: rows `[k*D_in, (k+1)*D_in)` hold
/// the tap applied to `x[t + k - 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub weight: GradSlot<T>,
    pub bias: GradSlot<T>,
}

/// Stack of width-3 convolutions with zero padding (length preserving).
/// When `rectify` is set a ReLU sits between consecutive layers; the last
/// layer is linear so the refined features keep their sign.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalConvStack<T> {
    pub layers: Vec<ConvLayer<T>>,
    pub rectify: bool,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ConvForward<T> {
    pub output: Mat<T>,
    windows: Vec<Mat<T>>,
    pre_activations: Vec<Mat<T>>,
}

/// `T x 3D` matrix whose row `t` is `[x[t-1], x[t], x[t+1]]` (zeros off the ends).
fn unfold<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    let (t_len, d) = x.shape();
    let mut out = Mat::zeros(t_len, 3 * d);
    for t in 0..t_len {
        let row = out.row_mut(t);
        for k in 0..3 {
            let src = t as isize + k as isize - 1;
            if src >= 0 && (src as usize) < t_len {
                row[k * d..(k + 1) * d].copy_from_slice(x.row(src as usize));
            }
        }
    }
    out
}

/// Adjoint of [`unfold`].
fn fold<T: Scalar>(cols: &Mat<T>, d: usize) -> Mat<T> {
    let t_len = cols.rows();
    let mut out = Mat::zeros(t_len, d);
    for t in 0..t_len {
        for k in 0..3 {
            let dst = t as isize + k as isize - 1;
            if dst >= 0 && (dst as usize) < t_len {
                let src = &cols.row(t)[k * d..(k + 1) * d];
                for (o, &g) in out.row_mut(dst as usize).iter_mut().zip(src) {
                    *o += g;
                }
            }
        }
    }
    out
}

impl<T: Scalar> TemporalConvStack<T> {
    /// He-style init: weights `N(0, 2 / (3D))`, zero biases.
    pub fn init(depth: usize, dim: usize, rng: &mut Rng) -> Self {
        let std = (2.0 / (3.0 * dim as f64)).sqrt();
        let layers = (0..depth)
            .map(|_| ConvLayer {
                weight: GradSlot::new(Mat::from_fn(3 * dim, dim, |_, _| T::lit(rng.gaussian(0.0, std)))),
                bias: GradSlot::new(Mat::zeros(1, dim)),
            })
            .collect();
        Self {
            layers,
            rectify: true,
        }
    }

    /// Center tap = identity, side taps and biases zero.
    pub fn identity(depth: usize, dim: usize) -> Self {
        let layers = (0..depth)
            .map(|_| {
                let w = Mat::from_fn(3 * dim, dim, |r, c| {
                    if r == dim + c {
                        T::one()
                    } else {
                        T::zero()
                    }
                });
                ConvLayer {
                    weight: GradSlot::new(w),
                    bias: GradSlot::new(Mat::zeros(1, dim)),
                }
            })
            .collect();
        Self {
            layers,
            rectify: false,
        }
    }

    pub fn forward(&self, seq: &Mat<T>) -> Result<ConvForward<T>> {
        if seq.rows() == 0 {
            return Err(Error::InvalidArgument("temporal_conv on empty sequence".into()));
        }
        let mut x = seq.clone();
        let mut windows = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let win = unfold(&x);
            let mut pre = matmul(&win, &layer.weight.value)?;
            let bias = layer.bias.value.row(0);
            for t in 0..pre.rows() {
                for (v, &b) in pre.row_mut(t).iter_mut().zip(bias) {
                    *v += b;
                }
            }
            let last = li + 1 == self.layers.len();
            x = if self.rectify && !last {
                pre.map(|v| v.max(T::zero()))
            } else {
                pre.clone()
            };
            windows.push(win);
            pre_activations.push(pre);
        }
        Ok(ConvForward {
            output: x,
            windows,
            pre_activations,
        })
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, fwd: &ConvForward<T>, grad_out: &Mat<T>) -> Result<Mat<T>> {
        let depth = self.layers.len();
        let mut grad = grad_out.clone();
        for li in (0..depth).rev() {
            let last = li + 1 == depth;
            if self.rectify && !last {
                let pre = &fwd.pre_activations[li];
                for (g, &p) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if p <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            let layer = &mut self.layers[li];
            let win = &fwd.windows[li];
            layer.weight.accumulate(&win.t_matmul(&grad)?)?;
            let db = Mat::from_vec(1, grad.cols(), grad.col_sums())?;
            layer.bias.accumulate(&db)?;
            let d_win = grad.matmul_t(&layer.weight.value)?;
            grad = fold(&d_win, win.cols() / 3);
        }
        Ok(grad)
    }

    pub fn slots_mut(&mut self) -> impl Iterator<Item = &mut GradSlot<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn slots(&self) -> impl Iterator<Item = &GradSlot<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }
}

pub fn temporal_conv<T: Scalar>(seq: &Mat<T>, stack: &TemporalConvStack<T>) -> Result<Mat<T>> {
    Ok(stack.forward(seq)?.output)
}
