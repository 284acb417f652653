use serde::{Deserialize, Serialize};

use super::tolerance::match_tolerance;
use super::EvalVideo;
use crate::config::ToleranceWindow;
use crate::domain::Spot;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// 1 when no prediction passes the threshold.
    pub precision: f64,
    /// 1 when the class has no ground truth.
    pub recall: f64,
    pub f1: f64,
}

impl CurvePoint {
    fn from_counts(delta: f64, tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        CurvePoint {
            delta,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCurve {
    pub class: usize,
    pub threshold: f64,
    pub points: Vec<CurvePoint>,
}

impl ClassCurve {
    pub fn mean_f1(&self) -> f64 {
        self.points.iter().map(|p| p.f1).sum::<f64>() / self.points.len().max(1) as f64
    }
}

fn class_curve(
    videos: &[EvalVideo],
    class: usize,
    fps: f64,
    deltas: &[f64],
    window: ToleranceWindow,
    threshold: f64,
) -> ClassCurve {
    let kept: Vec<(Vec<Spot>, Vec<_>)> = videos
        .iter()
        .map(|v| {
            let spots = v
                .spots
                .iter()
                .filter(|s| s.class == class && s.confidence >= threshold)
                .copied()
                .collect();
            let actions = v.actions.iter().filter(|a| a.class == class).copied().collect();
            (spots, actions)
        })
        .collect();
    let points = deltas
        .iter()
        .map(|&delta| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (spots, actions) in &kept {
                let m = match_tolerance(spots, actions, delta, fps, window);
                let hits = m.labeled.iter().filter(|l| l.is_tp()).count();
                tp += hits;
                fp += m.labeled.len() - hits;
                fn_ += m.false_negatives;
            }
            CurvePoint::from_counts(delta, tp, fp, fn_)
        })
        .collect();
    ClassCurve {
        class,
        threshold,
        points,
    }
}

/// Precision, recall and F1 against the tolerance for every class, counting
/// only predictions with confidence at or above the class threshold.
pub fn per_class_curves(
    videos: &[EvalVideo],
    fps: f64,
    deltas: &[f64],
    window: ToleranceWindow,
    thresholds: &[f64],
) -> Result<Vec<ClassCurve>> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidInput(format!("confidence threshold {t} outside [0, 1]")));
    }
    Ok(thresholds
        .iter()
        .enumerate()
        .map(|(c, &t)| class_curve(videos, c, fps, deltas, window, t))
        .collect())
}

/// Per-class threshold on the 0.01 grid maximizing the F1 averaged over the
/// tolerance sweep; ties keep the lowest threshold.
pub fn optimize_thresholds(
    videos: &[EvalVideo],
    num_classes: usize,
    fps: f64,
    deltas: &[f64],
    window: ToleranceWindow,
) -> Vec<f64> {
    (0..num_classes)
        .map(|c| {
            let mut best = (0.0, f64::NEG_INFINITY);
            for i in 0..=100 {
                let t = i as f64 / 100.0;
                let f1 = class_curve(videos, c, fps, deltas, window, t).mean_f1();
                if f1 > best.1 {
                    best = (t, f1);
                }
            }
            best.0
        })
        .collect()
}
