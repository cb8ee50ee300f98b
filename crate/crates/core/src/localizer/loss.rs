use serde::{Deserialize, Serialize};

use super::{sigmoid, LevelLogits, TargetAssignment};
use crate::error::{Error, Result};
use crate::evalkit::{iou_1d, Interval};
use crate::numerics::Scalar;
use crate::Matrix;

pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// `-a_t (1 - p_t)^gamma ln p_t`, with `p_t = p` and `a_t = alpha` for a
/// positive, `1 - p` and `1 - alpha` for a negative. `alpha = None` weights
/// both sides by 1.
pub fn focal_loss<T: Scalar>(p: T, y: bool, alpha: Option<T>, gamma: T) -> T {
    let eps = T::lit(PROB_CLAMP);
    let p = p.max(eps).min(T::one() - eps);
    let (pt, at) = if y {
        (p, alpha.unwrap_or(T::one()))
    } else {
        (T::one() - p, alpha.map_or(T::one(), |a| T::one() - a))
    };
    -at * (T::one() - pt).powf(gamma) * pt.ln()
}

/// Focal loss of `sigmoid(x)` and its derivative with respect to the logit `x`.
///
/// With `s = +1` for a positive and `-1` otherwise, `p_t = sigmoid(s x)` and
/// `dL/dx = -a_t s [(1 - p_t)^(gamma + 1) - gamma p_t (1 - p_t)^gamma ln p_t]`.
/// The derivative is zero where the clamp is active.
pub fn focal_loss_logit<T: Scalar>(x: T, y: bool, alpha: Option<T>, gamma: T) -> (T, T) {
    let p = sigmoid(x);
    let loss = focal_loss(p, y, alpha, gamma);
    let eps = T::lit(PROB_CLAMP);
    if p < eps || p > T::one() - eps {
        return (loss, T::zero());
    }
    let (s, pt, at) = if y {
        (T::one(), p, alpha.unwrap_or(T::one()))
    } else {
        (-T::one(), sigmoid(-x), alpha.map_or(T::one(), |a| T::one() - a))
    };
    let q = T::one() - pt;
    let grad = -at * s * (q.powf(gamma + T::one()) - gamma * pt * q.powf(gamma) * pt.ln());
    (loss, grad)
}

/// 1D distance-IoU loss: `1 - IoU + (center distance)^2 / (enclosing length)^2`.
/// Two identical points give 0.
pub fn diou_loss<T: Scalar>(pred: Interval<T>, gt: Interval<T>) -> T {
    diou_loss_grad(pred, gt).0
}

/// DIoU and its partial derivatives with respect to `pred.start` and `pred.end`.
pub fn diou_loss_grad<T: Scalar>(pred: Interval<T>, gt: Interval<T>) -> (T, T, T) {
    let zero = T::zero();
    let one = T::one();
    let half = T::lit(0.5);
    let (s1, e1, s2, e2) = (pred.start, pred.end, gt.start, gt.end);
    let enclose = e1.max(e2) - s1.min(s2);
    if enclose <= zero {
        return (zero, zero, zero);
    }
    let raw_inter = e1.min(e2) - s1.max(s2);
    let inter = raw_inter.max(zero);
    let union = (e1 - s1) + (e2 - s2) - inter;
    let iou = iou_1d(pred, gt);

    // Derivatives of the pieces with respect to (s1, e1).
    // Touching intervals take the growing side, so a collapsed prediction
    // inside the target still gets an IoU gradient.
    let (di_ds, di_de) = if raw_inter >= zero {
        (if s1 > s2 { -one } else { zero }, if e1 < e2 { one } else { zero })
    } else {
        (zero, zero)
    };
    let (diou_ds, diou_de) = if union > zero {
        let du_ds = -one - di_ds;
        let du_de = one - di_de;
        let u2 = union * union;
        ((di_ds * union - inter * du_ds) / u2, (di_de * union - inter * du_de) / u2)
    } else {
        (zero, zero)
    };
    let de_ds = if s1 < s2 { -one } else { zero };
    let de_de = if e1 > e2 { one } else { zero };
    let dc = (s1 + e1) * half - (s2 + e2) * half;
    let rho2 = dc * dc;
    let enc2 = enclose * enclose;
    let enc3 = enc2 * enclose;
    let dr_ds = T::lit(2.0) * dc * half / enc2 - T::lit(2.0) * rho2 * de_ds / enc3;
    let dr_de = T::lit(2.0) * dc * half / enc2 - T::lit(2.0) * rho2 * de_de / enc3;

    (one - iou + rho2 / enc2, dr_ds - diou_ds, dr_de - diou_de)
}

/// Summed objective terms for one video.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub reg: f64,
    pub total: f64,
    pub n_pos: usize,
}

/// Gradients of `LossBreakdown::total` with respect to the head outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrads {
    pub logits: Vec<Matrix>,
    pub offsets: Vec<Matrix>,
}

pub fn total_loss(logits: &LevelLogits, targets: &TargetAssignment, lambda_reg: f64) -> Result<LossBreakdown> {
    Ok(total_loss_with_grad(logits, targets, lambda_reg)?.0)
}

/// `(sum FL + lambda_reg * sum_pos DIoU) / max(N_pos, 1)` over every level,
/// location and class. Classes are independent binary problems; a location
/// labelled `c + 1` is the positive for class `c` only. Offsets are distances
/// from the location center, so the predicted interval is `[-d_s, d_e]`.
pub fn total_loss_with_grad(
    logits: &LevelLogits,
    targets: &TargetAssignment,
    lambda_reg: f64,
) -> Result<(LossBreakdown, LossGrads)> {
    if logits.logits.len() != targets.levels.len() || logits.offsets.len() != targets.levels.len() {
        return Err(Error::InvalidArgument(format!(
            "loss got {} logit levels, {} offset levels and {} target levels",
            logits.logits.len(),
            logits.offsets.len(),
            targets.levels.len()
        )));
    }
    let norm = targets.n_pos.max(1) as f64;
    let alpha = Some(FOCAL_ALPHA);
    let mut cls = 0.0;
    let mut reg = 0.0;
    let mut g_logits = Vec::with_capacity(targets.levels.len());
    let mut g_offsets = Vec::with_capacity(targets.levels.len());
    for ((lg, off), tg) in logits.logits.iter().zip(&logits.offsets).zip(&targets.levels) {
        let t_len = tg.labels.len();
        if lg.rows() != t_len || off.shape() != (t_len, 2) {
            return Err(Error::DimensionMismatch {
                op: "total_loss",
                left: lg.shape(),
                right: (t_len, 2),
            });
        }
        let mut gl = Matrix::zeros(t_len, lg.cols());
        let mut go = Matrix::zeros(t_len, 2);
        for t in 0..t_len {
            let label = tg.labels[t];
            for c in 0..lg.cols() {
                let (l, d) = focal_loss_logit(lg[(t, c)], label == c + 1, alpha, FOCAL_GAMMA);
                cls += l;
                gl[(t, c)] = d / norm;
            }
            if let Some((ds, de)) = tg.offsets[t] {
                let pred = Interval::new(-off[(t, 0)], off[(t, 1)]);
                let (l, d_start, d_end) = diou_loss_grad(pred, Interval::new(-ds, de));
                reg += l;
                go[(t, 0)] = -lambda_reg * d_start / norm;
                go[(t, 1)] = lambda_reg * d_end / norm;
            }
        }
        g_logits.push(gl);
        g_offsets.push(go);
    }
    let total = (cls + lambda_reg * reg) / norm;
    if !total.is_finite() {
        return Err(Error::NonFinite("total_loss"));
    }
    Ok((
        LossBreakdown {
            cls,
            reg,
            total,
            n_pos: targets.n_pos,
        },
        LossGrads {
            logits: g_logits,
            offsets: g_offsets,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localizer::LevelTargets;

    fn fl(p: f64, y: bool, alpha: Option<f64>, gamma: f64) -> f64 {
        focal_loss(p, y, alpha, gamma)
    }

    fn fll(x: f64, y: bool, alpha: Option<f64>, gamma: f64) -> (f64, f64) {
        focal_loss_logit(x, y, alpha, gamma)
    }

    fn dl(a: Interval<f64>, b: Interval<f64>) -> f64 {
        diou_loss(a, b)
    }

    fn dlg(a: Interval<f64>, b: Interval<f64>) -> (f64, f64, f64) {
        diou_loss_grad(a, b)
    }

    #[test]
    fn focal_reference_values() {
        assert!((fl(0.5, true, None, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(fl(1.0 - 1e-7, true, Some(0.25), 2.0) < 1e-15);
        let direct = 0.25 * 0.1f64.powi(2) * -(0.9f64.ln());
        assert!((fl(0.9, true, Some(0.25), 2.0) - direct).abs() < 1e-15);
        assert!((direct - 2.6341e-4).abs() < 1e-8);
        assert!(fl(0.0, true, None, 2.0).is_finite());
        assert!(fl(1.0, false, None, 2.0).is_finite());
    }

    #[test]
    fn focal_without_focusing_is_cross_entropy() {
        for k in 1..100 {
            let p = k as f64 / 100.0;
            for y in [true, false] {
                let bce = if y { -p.ln() } else { -(1.0 - p).ln() };
                assert!((fl(p, y, None, 0.0) - bce).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn focal_logit_gradient_matches_finite_differences() {
        let h = 1e-6;
        for &x in &[-4.0, -0.3, 0.0, 0.8, 3.0] {
            for y in [true, false] {
                for alpha in [None, Some(0.25)] {
                    let (_, g) = fll(x, y, alpha, 2.0);
                    let fd = (fl(sigmoid(x + h), y, alpha, 2.0) - fl(sigmoid(x - h), y, alpha, 2.0))
                        / (2.0 * h);
                    assert!((g - fd).abs() < 1e-7, "x={x} y={y}");
                }
            }
        }
    }

    #[test]
    fn diou_reference_values() {
        let iv = Interval::new;
        assert_eq!(dl(iv(1.0, 3.0), iv(1.0, 3.0)), 0.0);
        assert!((dl(iv(0.0, 2.0), iv(1.0, 3.0)) - (1.0 - 1.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-12);
        assert!((dl(iv(0.0, 2.0), iv(1.0, 3.0)) - 0.77778).abs() < 1e-5);
        assert!((dl(iv(0.0, 1.0), iv(3.0, 4.0)) - 1.5625).abs() < 1e-12);
        assert_eq!(dl(iv(2.0, 2.0), iv(2.0, 2.0)), 0.0);
    }

    #[test]
    fn diou_gradient_matches_finite_differences() {
        let cases = [
            ((0.0, 2.0), (1.0, 3.0)),
            ((0.5, 4.0), (1.0, 3.0)),
            ((0.0, 1.0), (3.0, 4.0)),
            ((-1.3, 0.7), (-2.0, 2.5)),
        ];
        let h = 1e-7;
        for ((s1, e1), (s2, e2)) in cases {
            let gt = Interval::new(s2, e2);
            let (_, ds, de) = dlg(Interval::new(s1, e1), gt);
            let fs = (dl(Interval::new(s1 + h, e1), gt) - dl(Interval::new(s1 - h, e1), gt)) / (2.0 * h);
            let fe = (dl(Interval::new(s1, e1 + h), gt) - dl(Interval::new(s1, e1 - h), gt)) / (2.0 * h);
            assert!((ds - fs).abs() < 1e-6, "{s1},{e1}: {ds} vs {fs}");
            assert!((de - fe).abs() < 1e-6, "{s1},{e1}: {de} vs {fe}");
        }
    }

    fn one_level(labels: Vec<usize>, offsets: Vec<Option<(f64, f64)>>) -> TargetAssignment {
        let n_pos = labels.iter().filter(|&&l| l > 0).count();
        TargetAssignment {
            levels: vec![LevelTargets { labels, offsets }],
            n_pos,
        }
    }

    #[test]
    fn confident_background_costs_nothing() {
        let lg = LevelLogits {
            logits: vec![Matrix::filled(4, 3, -20.0)],
            offsets: vec![Matrix::zeros(4, 2)],
        };
        let t = one_level(vec![0; 4], vec![None; 4]);
        assert!(total_loss(&lg, &t, 1.0).unwrap().total < 1e-12);
    }

    #[test]
    fn perfect_single_positive_costs_nothing() {
        let lg = LevelLogits {
            logits: vec![Matrix::from_rows(&[[20.0, -20.0], [-20.0, -20.0]])],
            offsets: vec![Matrix::from_rows(&[[1.5, 2.5], [0.0, 0.0]])],
        };
        let t = one_level(vec![1, 0], vec![Some((1.5, 2.5)), None]);
        let b = total_loss(&lg, &t, 1.0).unwrap();
        assert!(b.total < 1e-6);
        assert_eq!(b.n_pos, 1);
    }

    #[test]
    fn two_location_fixture_matches_hand_sum() {
        let lg = LevelLogits {
            logits: vec![Matrix::from_rows(&[[0.4], [-1.1]])],
            offsets: vec![Matrix::from_rows(&[[1.0, 1.0], [0.3, 0.2]])],
        };
        let t = one_level(vec![1, 0], vec![Some((2.0, 1.0)), None]);
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let fl_pos = -0.25 * (1.0 - sig(0.4)).powi(2) * sig(0.4).ln();
        let fl_neg = -0.75 * sig(-1.1).powi(2) * (1.0 - sig(-1.1)).ln();
        // pred [-1, 1] vs gt [-2, 1]: IoU 2/3, centers 0 and -0.5, enclosure 3.
        let diou = 1.0 - 2.0 / 3.0 + 0.25 / 9.0;
        let b = total_loss(&lg, &t, 0.5).unwrap();
        assert!((b.cls - (fl_pos + fl_neg)).abs() < 1e-12);
        assert!((b.reg - diou).abs() < 1e-12);
        assert!((b.total - (fl_pos + fl_neg + 0.5 * diou)).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let base = LevelLogits {
            logits: vec![Matrix::from_rows(&[[0.4, -0.2], [-1.1, 0.9], [0.1, 0.3]])],
            offsets: vec![Matrix::from_rows(&[[1.0, 1.3], [0.3, 0.2], [2.2, 0.4]])],
        };
        let t = one_level(vec![1, 0, 2], vec![Some((2.0, 1.0)), None, Some((0.5, 1.5))]);
        let (_, g) = total_loss_with_grad(&base, &t, 1.0).unwrap();
        let h = 1e-6;
        for (which, grads) in [(0, &g.logits[0]), (1, &g.offsets[0])] {
            for i in 0..3 {
                for j in 0..2 {
                    let (mut a, mut b) = (base.clone(), base.clone());
                    let (ma, mb) = if which == 0 {
                        (&mut a.logits[0], &mut b.logits[0])
                    } else {
                        (&mut a.offsets[0], &mut b.offsets[0])
                    };
                    ma[(i, j)] += h;
                    mb[(i, j)] -= h;
                    let fd = (total_loss(&a, &t, 1.0).unwrap().total - total_loss(&b, &t, 1.0).unwrap().total)
                        / (2.0 * h);
                    assert!((fd - grads[(i, j)]).abs() < 1e-7, "{which} {i},{j}");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn interval() -> impl Strategy<Value = Interval<f64>> {
            (-10.0f64..10.0, 0.0f64..10.0).prop_map(|(s, l)| Interval::new(s, s + l))
        }

        proptest! {
            #[test]
            fn diou_bounds(a in interval(), b in interval()) {
                let l = dl(a, b);
                prop_assert!((0.0..2.0).contains(&l));
                prop_assert!(l >= 1.0 - iou_1d(a, b) - 1e-12 || a == b);
            }

            #[test]
            fn diou_zero_only_for_identical(a in interval(), b in interval()) {
                prop_assume!(a != b);
                prop_assert!(dl(a, b) > 0.0);
            }
        }
    }
}
