use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{average_precision, check_class, GtSegment, Interval, ScoredSegment};
use crate::error::{Error, Result};
use crate::localizer::ActionInstance;
use crate::representation::FeatureSequence;

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMap {
    pub threshold: f64,
    pub map: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub threshold: f64,
    pub class_id: usize,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_threshold: Vec<ThresholdMap>,
    pub average_map: f64,
    pub per_class: Vec<ClassAp>,
    /// Classes without ground truth in the evaluated split; left out of every mean.
    pub excluded_classes: Vec<usize>,
    pub num_predictions: usize,
    pub num_ground_truths: usize,
}

impl EvalReport {
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.per_threshold
            .iter()
            .find(|t| (t.threshold - threshold).abs() < 1e-12)
            .map(|t| t.map)
    }

    /// `threshold,class,ap` rows, then one `mean` row per threshold and a
    /// final `average,mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,class,ap\n");
        for c in &self.per_class {
            let _ = writeln!(s, "{},{},{}", c.threshold, c.class_id, c.ap);
        }
        for t in &self.per_threshold {
            let _ = writeln!(s, "{},mean,{}", t.threshold, t.map);
        }
        let _ = writeln!(s, "average,mean,{}", self.average_map);
        s
    }

    /// Plain-text table for terminals.
    pub fn summary_table(&self) -> String {
        let mut s = String::from("tIoU    mAP\n");
        for t in &self.per_threshold {
            let _ = writeln!(s, "{:<7} {:.4}", t.threshold, t.map);
        }
        let _ = writeln!(s, "avg     {:.4}", self.average_map);
        s
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        Ok(())
    }
}

/// mAP at every threshold over classes that have ground truth, plus their mean.
///
/// `predictions[v]` holds the detections for `corpus[v]`.
pub fn evaluate(
    predictions: &[Vec<ActionInstance>],
    corpus: &[FeatureSequence],
    num_classes: usize,
    thresholds: &[f64],
) -> Result<EvalReport> {
    if predictions.len() != corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "{} prediction lists for {} videos",
            predictions.len(),
            corpus.len()
        )));
    }
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("no tIoU thresholds given".into()));
    }
    let mut preds: Vec<Vec<ScoredSegment<f64>>> = vec![Vec::new(); num_classes];
    let mut gts: Vec<Vec<GtSegment<f64>>> = vec![Vec::new(); num_classes];
    let mut num_predictions = 0;
    let mut num_ground_truths = 0;
    for (v, (ps, seq)) in predictions.iter().zip(corpus).enumerate() {
        for p in ps {
            check_class(p.class_id, num_classes)?;
            preds[p.class_id].push(ScoredSegment {
                video: v,
                interval: Interval::new(p.start, p.end),
                score: p.score,
            });
            num_predictions += 1;
        }
        for a in &seq.annotations {
            check_class(a.class_id, num_classes)?;
            gts[a.class_id].push(GtSegment {
                video: v,
                interval: Interval::new(a.start, a.end),
            });
            num_ground_truths += 1;
        }
    }
    let active: Vec<usize> = (0..num_classes).filter(|&c| !gts[c].is_empty()).collect();
    let excluded_classes = (0..num_classes).filter(|&c| gts[c].is_empty()).collect();

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    let mut per_class = Vec::new();
    for &thr in thresholds {
        let mut sum = 0.0;
        for &c in &active {
            let ap = average_precision(&preds[c], &gts[c], thr);
            per_class.push(ClassAp {
                threshold: thr,
                class_id: c,
                ap,
            });
            sum += ap;
        }
        let map = if active.is_empty() { 0.0 } else { sum / active.len() as f64 };
        per_threshold.push(ThresholdMap { threshold: thr, map });
    }
    let average_map = per_threshold.iter().map(|t| t.map).sum::<f64>() / per_threshold.len() as f64;
    Ok(EvalReport {
        per_threshold,
        average_map,
        per_class,
        excluded_classes,
        num_predictions,
        num_ground_truths,
    })
}
