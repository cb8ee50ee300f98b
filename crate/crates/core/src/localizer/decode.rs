use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{sigmoid, ActionInstance, LevelLogits};
use crate::evalkit::{iou_1d, Interval};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub top_k: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.1,
            nms_iou: 0.5,
            top_k: 200,
        }
    }
}

/// Emits one candidate per (level, location, class) whose probability
/// exceeds `score_threshold`. Segments are clamped to `[0, T * clip_stride]`
/// where `T` is the level-0 length; empty results are dropped.
pub fn decode(
    logits: &LevelLogits,
    score_threshold: f64,
    strides: &[usize],
    clip_stride_seconds: f64,
) -> Vec<ActionInstance> {
    let extent = logits.logits.first().map_or(0, |m| m.rows()) as f64 * clip_stride_seconds;
    let mut out = Vec::new();
    for ((lg, off), &stride) in logits.logits.iter().zip(&logits.offsets).zip(strides) {
        let stride_sec = stride as f64 * clip_stride_seconds;
        for t in 0..lg.rows() {
            let center = (t as f64 + 0.5) * stride_sec;
            let start = (center - off[(t, 0)] * stride_sec).max(0.0);
            let end = (center + off[(t, 1)] * stride_sec).min(extent);
            if end <= start {
                continue;
            }
            for c in 0..lg.cols() {
                let score = sigmoid(lg[(t, c)]);
                if score > score_threshold {
                    out.push(ActionInstance {
                        start,
                        end,
                        class_id: c,
                        score,
                    });
                }
            }
        }
    }
    out
}

fn rank(a: &ActionInstance, b: &ActionInstance) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.start.partial_cmp(&b.start).unwrap_or(Ordering::Equal))
        .then(a.end.partial_cmp(&b.end).unwrap_or(Ordering::Equal))
}

/// Greedy per-class suppression of overlaps with IoU above `iou_threshold`,
/// then the `top_k` best survivors overall, ordered by (score desc, start,
/// end).
pub fn nms(instances: &[ActionInstance], iou_threshold: f64, top_k: usize) -> Vec<ActionInstance> {
    let mut sorted = instances.to_vec();
    sorted.sort_by(rank);
    let mut kept: Vec<ActionInstance> = Vec::new();
    for cand in sorted {
        let iv = Interval::new(cand.start, cand.end);
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == cand.class_id && iou_1d(Interval::new(k.start, k.end), iv) > iou_threshold);
        if !suppressed {
            kept.push(cand);
        }
    }
    kept.truncate(top_k);
    kept
}
