use crate::error::{Error, Result};
use crate::numerics::{GradSlot, Mat, Rng, Scalar};
use crate::otalign::{CostMatrix, TransportPlan};

/// Row-normalizes a coupling: `w_tj = P_tj / sum_j P_tj`.
pub fn coupling_weights<T: Scalar>(coupling: &Mat<T>) -> Result<Mat<T>> {
    let mut w = coupling.clone();
    for t in 0..w.rows() {
        let row = w.row_mut(t);
        let mass: T = row.iter().copied().sum();
        if !(mass > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "coupling row {t} carries no mass"
            )));
        }
        for v in row.iter_mut() {
            *v /= mass;
        }
    }
    Ok(w)
}

/// Per-location logit `(1 - sum_j w_tj C_tj) / tau` for an arbitrary
/// non-negative coupling.
pub fn score_with_coupling<T: Scalar>(coupling: &Mat<T>, cost: &CostMatrix<T>, tau: T) -> Result<Vec<T>> {
    if coupling.shape() != cost.shape() {
        return Err(Error::DimensionMismatch {
            op: "score_locations",
            left: coupling.shape(),
            right: cost.shape(),
        });
    }
    if !(tau > T::zero()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let w = coupling_weights(coupling)?;
    Ok((0..w.rows())
        .map(|t| {
            let transported: T = w
                .row(t)
                .iter()
                .zip(cost.values.row(t))
                .map(|(&a, &c)| a * c)
                .sum();
            (T::one() - transported) / tau
        })
        .collect())
}

pub fn score_locations<T: Scalar>(plan: &TransportPlan<T>, cost: &CostMatrix<T>, tau: T) -> Result<Vec<T>> {
    score_with_coupling(&plan.coupling, cost, tau)
}

/// `dL/dC` given `dL/dlogit`; the coupling is a constant.
pub fn score_locations_backward<T: Scalar>(coupling: &Mat<T>, grad_logits: &[T], tau: T) -> Result<Mat<T>> {
    if grad_logits.len() != coupling.rows() {
        return Err(Error::DimensionMismatch {
            op: "score_locations_backward",
            left: coupling.shape(),
            right: (grad_logits.len(), 1),
        });
    }
    let mut w = coupling_weights(coupling)?;
    for (t, &g) in grad_logits.iter().enumerate() {
        let k = -g / tau;
        for v in w.row_mut(t) {
            *v *= k;
        }
    }
    Ok(w)
}

/// Class-agnostic boundary head: `relu(F W + b)`, `W` is `D x 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionHead<T> {
    pub weight: GradSlot<T>,
    pub bias: GradSlot<T>,
}

#[derive(Clone, Debug)]
pub struct HeadForward<T> {
    pub offsets: Mat<T>,
    pre: Mat<T>,
}

impl<T: Scalar> RegressionHead<T> {
    /// Small random weights and a unit bias, so every unit starts active.
    pub fn init(dim: usize, rng: &mut Rng) -> Self {
        let std = 0.1 / (dim as f64).sqrt();
        Self {
            weight: GradSlot::new(Mat::from_fn(dim, 2, |_, _| T::lit(rng.gaussian(0.0, std)))),
            bias: GradSlot::new(Mat::filled(1, 2, T::one())),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            weight: GradSlot::new(Mat::zeros(dim, 2)),
            bias: GradSlot::new(Mat::zeros(1, 2)),
        }
    }

    pub fn forward(&self, features: &Mat<T>) -> Result<HeadForward<T>> {
        let mut pre = crate::numerics::matmul(features, &self.weight.value)?;
        let b = self.bias.value.row(0);
        for t in 0..pre.rows() {
            for (v, &bb) in pre.row_mut(t).iter_mut().zip(b) {
                *v += bb;
            }
        }
        Ok(HeadForward {
            offsets: pre.map(|v| v.max(T::zero())),
            pre,
        })
    }

    /// Accumulates parameter gradients, returns `dL/dF`.
    pub fn backward(&mut self, features: &Mat<T>, fwd: &HeadForward<T>, grad: &Mat<T>) -> Result<Mat<T>> {
        let mut g = grad.clone();
        for (gv, &p) in g.as_mut_slice().iter_mut().zip(fwd.pre.as_slice()) {
            if p <= T::zero() {
                *gv = T::zero();
            }
        }
        self.weight.accumulate(&features.t_matmul(&g)?)?;
        self.bias.accumulate(&Mat::from_vec(1, 2, g.col_sums())?)?;
        g.matmul_t(&self.weight.value)
    }

    pub fn slots(&self) -> impl Iterator<Item = &GradSlot<T>> {
        [&self.weight, &self.bias].into_iter()
    }

    pub fn slots_mut(&mut self) -> impl Iterator<Item = &mut GradSlot<T>> {
        [&mut self.weight, &mut self.bias].into_iter()
    }
}

pub fn regress_offsets<T: Scalar>(features: &Mat<T>, head: &RegressionHead<T>) -> Result<Mat<T>> {
    Ok(head.forward(features)?.offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otalign::CostMetric;

    fn cost(rows: &[[f64; 3]]) -> CostMatrix<f64> {
        CostMatrix::new(Mat::from_rows(rows), CostMetric::Cosine)
    }

    #[test]
    fn uniform_rows_give_reference_logits() {
        let p = Mat::from_rows(&[[0.1, 0.2, 0.3], [0.2, 0.1, 0.1]]);
        let c = cost(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        let l = score_with_coupling(&p, &c, 0.07).unwrap();
        assert!((l[0] - 1.0 / 0.07).abs() < 1e-12);
        assert!(l[1].abs() < 1e-12);
    }

    #[test]
    fn matches_weighted_average_oracle() {
        let mut rng = Rng::new(5);
        let p = Mat::from_fn(4, 3, |_, _| rng.uniform() + 0.01);
        let c = CostMatrix::new(Mat::from_fn(4, 3, |_, _| 2.0 * rng.uniform()), CostMetric::Cosine);
        let tau = 0.5;
        let l = score_with_coupling(&p, &c, tau).unwrap();
        for t in 0..4 {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..3 {
                num += p[(t, j)] * c.values[(t, j)];
                den += p[(t, j)];
            }
            assert!((l[t] - (1.0 - num / den) / tau).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_row_is_an_error() {
        let p = Mat::from_rows(&[[0.0, 0.0, 0.0]]);
        assert!(score_with_coupling(&p, &cost(&[[0.0, 0.0, 0.0]]), 1.0).is_err());
        let q = Mat::from_rows(&[[1.0, 0.0, 0.0]]);
        assert!(score_with_coupling(&q, &cost(&[[0.0, 0.0, 0.0]]), 0.0).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(6);
        let p = Mat::from_fn(3, 3, |_, _| rng.uniform() + 0.01);
        let c = Mat::from_fn(3, 3, |_, _| 2.0 * rng.uniform());
        let up = [0.3, -1.2, 0.7];
        let obj = |c: &Mat<f64>| {
            let l = score_with_coupling(&p, &CostMatrix::new(c.clone(), CostMetric::Cosine), 0.2).unwrap();
            l.iter().zip(up).map(|(a, b)| a * b).sum::<f64>()
        };
        let g = score_locations_backward(&p, &up, 0.2).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let (mut a, mut b) = (c.clone(), c.clone());
                a[(i, j)] += h;
                b[(i, j)] -= h;
                assert!(((obj(&a) - obj(&b)) / (2.0 * h) - g[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_head_gives_zero_offsets() {
        let head = RegressionHead::<f64>::zeros(4);
        let f = Mat::from_fn(5, 4, |i, j| (i * j) as f64 - 3.0);
        assert_eq!(regress_offsets(&f, &head).unwrap(), Mat::zeros(5, 2));
    }

    #[test]
    fn rectifier_clamps_and_blocks_gradient() {
        let mut head = RegressionHead::<f64>::zeros(1);
        head.weight.value = Mat::from_rows(&[[1.0, -1.0]]);
        let f = Mat::from_rows(&[[2.0]]);
        let fwd = head.forward(&f).unwrap();
        assert_eq!(fwd.offsets, Mat::from_rows(&[[2.0, 0.0]]));
        let dx = head.backward(&f, &fwd, &Mat::from_rows(&[[1.0, 1.0]])).unwrap();
        assert_eq!(dx[(0, 0)], 1.0);
        assert_eq!(head.weight.grad, Mat::from_rows(&[[2.0, 0.0]]));
        assert_eq!(head.bias.grad, Mat::from_rows(&[[1.0, 0.0]]));
    }

    #[test]
    fn matches_affine_clamp_oracle() {
        let mut rng = Rng::new(7);
        let head = RegressionHead::<f64> {
            weight: GradSlot::new(Mat::from_fn(3, 2, |_, _| rng.gaussian(0.0, 1.0))),
            bias: GradSlot::new(Mat::from_fn(1, 2, |_, _| rng.gaussian(0.0, 1.0))),
        };
        let f = Mat::from_fn(6, 3, |_, _| rng.gaussian(0.0, 1.0));
        let out = regress_offsets(&f, &head).unwrap();
        for t in 0..6 {
            for k in 0..2 {
                let mut acc = head.bias.value[(0, k)];
                for i in 0..3 {
                    acc += f[(t, i)] * head.weight.value[(i, k)];
                }
                assert!((out[(t, k)] - acc.max(0.0)).abs() < 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lowering_a_cost_never_lowers_the_logit(
                p in proptest::collection::vec(0.01f64..1.0, 4),
                c in proptest::collection::vec(0.0f64..2.0, 4),
                j in 0usize..4,
                dec in 0.0f64..1.0,
            ) {
                let pm = Mat::from_vec(1, 4, p).unwrap();
                let cm = CostMatrix::new(Mat::from_vec(1, 4, c.clone()).unwrap(), CostMetric::Cosine);
                let mut lowered = c;
                lowered[j] -= dec;
                let lm = CostMatrix::new(Mat::from_vec(1, 4, lowered).unwrap(), CostMetric::Cosine);
                let before = score_with_coupling(&pm, &cm, 0.07).unwrap()[0];
                let after = score_with_coupling(&pm, &lm, 0.07).unwrap()[0];
                prop_assert!(after >= before - 1e-12);
            }
        }
    }
}
