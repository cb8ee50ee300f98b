use crate::error::{Error, Result};
use crate::{Matrix, Slot};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments, one pair per parameter slot in iteration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam step over `slots` using their accumulated gradients. Slot order
/// and shapes must stay the same across calls.
pub fn adam_update<'a>(slots: impl Iterator<Item = &'a mut Slot>, opt: &mut OptimizerState, lr: f64) -> Result<()> {
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (i, slot) in slots.enumerate() {
        if i == opt.first.len() {
            let (r, c) = slot.value.shape();
            opt.first.push(Matrix::zeros(r, c));
            opt.second.push(Matrix::zeros(r, c));
        }
        let (m, v) = (&mut opt.first[i], &mut opt.second[i]);
        if m.shape() != slot.value.shape() {
            return Err(Error::DimensionMismatch {
                op: "adam_update",
                left: m.shape(),
                right: slot.value.shape(),
            });
        }
        let g = slot.grad.as_slice();
        let w = slot.value.as_mut_slice();
        for (k, ((m, v), w)) in m.as_mut_slice().iter_mut().zip(v.as_mut_slice()).zip(w).enumerate() {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g[k];
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g[k] * g[k];
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = Slot::new(Matrix::from_rows(&[[1.0, -2.0, 0.5]]));
        s.grad = Matrix::from_rows(&[[3.0, -0.01, 0.0]]);
        let mut opt = OptimizerState::new();
        adam_update(std::iter::once(&mut s), &mut opt, 0.1).unwrap();
        let w = s.value.as_slice();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 1.9).abs() < 1e-5);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn matches_hand_rolled_two_steps() {
        let mut s = Slot::new(Matrix::from_rows(&[[0.0]]));
        let mut opt = OptimizerState::new();
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 0.0f64);
        for (t, g) in [(1, 0.5), (2, -1.5)] {
            s.grad = Matrix::from_rows(&[[g]]);
            adam_update(std::iter::once(&mut s), &mut opt, 0.01).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((s.value[(0, 0)] - w).abs() < 1e-15);
    }

    #[test]
    fn shape_change_is_rejected() {
        let mut a = Slot::new(Matrix::zeros(2, 2));
        let mut opt = OptimizerState::new();
        adam_update(std::iter::once(&mut a), &mut opt, 0.1).unwrap();
        let mut b = Slot::new(Matrix::zeros(3, 2));
        assert!(adam_update(std::iter::once(&mut b), &mut opt, 0.1).is_err());
    }
}
