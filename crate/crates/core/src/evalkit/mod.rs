//! Temporal IoU, per-class average precision and the mAP@tIoU protocol.

mod report;

use crate::error::{Error, Result};
use crate::numerics::Scalar;

pub use report::{evaluate, ClassAp, EvalReport, ThresholdMap, DEFAULT_THRESHOLDS};

/// Closed interval `[start, end]` on the time axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    pub start: T,
    pub end: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(start: T, end: T) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> T {
        self.end - self.start
    }

    pub fn center(&self) -> T {
        (self.start + self.end) * T::lit(0.5)
    }
}

/// `|a ∩ b| / |a ∪ b|`; zero for disjoint intervals and for two points.
pub fn iou_1d<T: Scalar>(a: Interval<T>, b: Interval<T>) -> T {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(T::zero());
    let union = a.length() + b.length() - inter;
    if union <= T::zero() {
        T::zero()
    } else {
        inter / union
    }
}

/// A detection in some video.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSegment<T> {
    pub video: usize,
    pub interval: Interval<T>,
    pub score: T,
}

/// A ground-truth instance in some video.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtSegment<T> {
    pub video: usize,
    pub interval: Interval<T>,
}

/// Non-interpolated AP for one class at one tIoU threshold.
///
/// Predictions are visited by descending score (stable for ties). Each one
/// claims the still-unmatched ground truth of the same video with the
/// highest IoU, provided that IoU reaches `iou_threshold`; otherwise it is a
/// false positive. AP sums precision at every true positive times the recall
/// step `1 / #gt`. Zero ground truths give 0.
pub fn average_precision<T: Scalar>(
    predictions: &[ScoredSegment<T>],
    gts: &[GtSegment<T>],
    iou_threshold: T,
) -> T {
    if gts.is_empty() {
        return T::zero();
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .score
            .partial_cmp(&predictions[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut matched = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut ap = T::zero();
    let recall_step = T::one() / T::from_usize(gts.len()).unwrap();
    for (rank, &pi) in order.iter().enumerate() {
        let p = &predictions[pi];
        let mut best: Option<(usize, T)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if matched[gi] || g.video != p.video {
                continue;
            }
            let iou = iou_1d(p.interval, g.interval);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            matched[gi] = true;
            tp += 1;
            let precision = T::from_usize(tp).unwrap() / T::from_usize(rank + 1).unwrap();
            ap += precision * recall_step;
        }
    }
    ap
}

pub(crate) fn check_class(class_id: usize, num_classes: usize) -> Result<()> {
    if class_id >= num_classes {
        Err(Error::UnknownClass {
            class_id,
            num_classes,
        })
    } else {
        Ok(())
    }
}
