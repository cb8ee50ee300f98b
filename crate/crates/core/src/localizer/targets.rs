use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::representation::{FeaturePyramid, GroundTruthSegment};

/// Inclusive `[lo, hi]` bounds on `max(d_s, d_e)` per level, in units of the
/// level stride. A location only regresses segments whose extent suits its
/// level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionRanges(pub Vec<(f64, f64)>);

impl RegressionRanges {
    /// `[0, 4], [2, 8], [4, 16], ...` with the last level open-ended.
    pub fn default_for(levels: usize) -> Self {
        Self(
            (0..levels)
                .map(|l| {
                    let s = (1u64 << l) as f64;
                    let lo = if l == 0 { 0.0 } else { s };
                    let hi = if l + 1 == levels { f64::INFINITY } else { 4.0 * s };
                    (lo, hi)
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Targets for one level. `labels[t]` is 0 for background, `class + 1` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelTargets {
    pub labels: Vec<usize>,
    pub offsets: Vec<Option<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetAssignment {
    pub levels: Vec<LevelTargets>,
    pub n_pos: usize,
}

/// Labels every location of every level.
///
/// The center of location `t` at stride `s` sits at `(t + 0.5) s` clips. It
/// is positive for a segment that contains the center and whose larger
/// boundary distance falls in the level's range; among several such
/// segments the shortest wins.
pub fn assign_targets<T: Scalar>(
    pyramid: &FeaturePyramid<T>,
    annotations: &[GroundTruthSegment],
    ranges: &RegressionRanges,
    clip_stride_seconds: f64,
) -> Result<TargetAssignment> {
    assign_for_layout(&pyramid.lengths(), &pyramid.strides, annotations, ranges, clip_stride_seconds)
}

pub(crate) fn assign_for_layout(
    lengths: &[usize],
    strides: &[usize],
    annotations: &[GroundTruthSegment],
    ranges: &RegressionRanges,
    clip_stride_seconds: f64,
) -> Result<TargetAssignment> {
    if ranges.len() != lengths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} regression ranges for {} pyramid levels",
            ranges.len(),
            lengths.len()
        )));
    }
    let mut n_pos = 0;
    let mut levels = Vec::with_capacity(lengths.len());
    for (l, (&len, &stride)) in lengths.iter().zip(strides).enumerate() {
        let (lo, hi) = ranges.0[l];
        let stride_sec = stride as f64 * clip_stride_seconds;
        let mut labels = vec![0usize; len];
        let mut offsets = vec![None; len];
        for t in 0..len {
            let center = (t as f64 + 0.5) * stride_sec;
            let mut best: Option<(f64, &GroundTruthSegment)> = None;
            for g in annotations {
                if center < g.start || center > g.end {
                    continue;
                }
                let ds = (center - g.start) / stride_sec;
                let de = (g.end - center) / stride_sec;
                let m = ds.max(de);
                if m < lo || m > hi {
                    continue;
                }
                let dur = g.end - g.start;
                if best.is_none_or(|(d, _)| dur < d) {
                    best = Some((dur, g));
                }
            }
            if let Some((_, g)) = best {
                labels[t] = g.class_id + 1;
                offsets[t] = Some(((center - g.start) / stride_sec, (g.end - center) / stride_sec));
                n_pos += 1;
            }
        }
        levels.push(LevelTargets { labels, offsets });
    }
    Ok(TargetAssignment { levels, n_pos })
}
