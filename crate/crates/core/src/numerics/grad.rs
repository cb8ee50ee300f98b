use super::{Mat, Scalar};
use crate::error::{Error, Result};

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSlot<T> {
    pub value: Mat<T>,
    pub grad: Mat<T>,
}

impl<T: Scalar> GradSlot<T> {
    pub fn new(value: Mat<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Mat::zeros(r, c),
        }
    }

    /// `grad += delta`.
    pub fn accumulate(&mut self, delta: &Mat<T>) -> Result<()> {
        if delta.shape() != self.value.shape() {
            return Err(Error::DimensionMismatch {
                op: "accumulate_grad",
                left: self.value.shape(),
                right: delta.shape(),
            });
        }
        self.grad.add_assign(delta)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulation_is_additive_and_resettable() {
        let mut slot = GradSlot::new(Mat::<f64>::zeros(2, 2));
        let d = Mat::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        slot.accumulate(&d).unwrap();
        assert_eq!(slot.grad, d);
        slot.accumulate(&d).unwrap();
        assert_eq!(slot.grad, d.scale(2.0));
        slot.zero_grad();
        assert_eq!(slot.grad, Mat::zeros(2, 2));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut slot = GradSlot::new(Mat::<f64>::zeros(2, 2));
        assert!(slot.accumulate(&Mat::zeros(2, 3)).is_err());
    }
}
