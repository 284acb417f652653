//! Spotting metrics: tolerance matching, AP, mAP and Average-mAP, per-class
//! precision/recall/F1 curves, and breakdowns by game time and by distance
//! between actions.

mod ap;
mod bins;
mod curves;
mod tolerance;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ap::{average_map, average_precision, DeltaMap, MapResult};
pub use bins::{bin_by_game_time, bin_by_vicinity, neighbour_distances, Bin};
pub use curves::{optimize_thresholds, per_class_curves, ClassCurve, CurvePoint};
pub use tolerance::{match_tolerance, LabeledPrediction, ToleranceMatch};

use crate::config::MetricConfig;
use crate::domain::{Action, Spot, VideoAnnotations, VideoPrediction};
use crate::error::{Error, Result};

/// Predictions and ground truth of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalVideo {
    pub video_id: String,
    pub num_frames: usize,
    pub spots: Vec<Spot>,
    pub actions: Vec<Action>,
}

impl EvalVideo {
    pub fn new(annotations: &VideoAnnotations, spots: Vec<Spot>) -> Self {
        EvalVideo {
            video_id: annotations.video_id.clone(),
            num_frames: annotations.num_frames,
            spots,
            actions: annotations.actions.clone(),
        }
    }

    /// Pairs predictions with annotations by video id.
    pub fn pair(annotations: &[VideoAnnotations], predictions: &[VideoPrediction]) -> Result<Vec<Self>> {
        annotations
            .iter()
            .map(|a| {
                let p = predictions
                    .iter()
                    .find(|p| p.video_id == a.video_id)
                    .ok_or_else(|| Error::InvalidInput(format!("no prediction for video {}", a.video_id)))?;
                Ok(EvalVideo::new(a, p.spots.clone()))
            })
            .collect()
    }
}

/// Conventions used where a rate is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConventions {
    pub precision_without_predictions: f64,
    pub recall_without_ground_truth: f64,
    pub class_without_ground_truth_or_predictions: String,
}

impl Default for ReportConventions {
    fn default() -> Self {
        ReportConventions {
            precision_without_predictions: 1.0,
            recall_without_ground_truth: 1.0,
            class_without_ground_truth_or_predictions: "skipped from mAP".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_videos: usize,
    pub num_classes: usize,
    pub fps: f64,
    pub config: MetricConfig,
    pub per_delta: Vec<DeltaMap>,
    pub average_map: f64,
    pub curves: Vec<ClassCurve>,
    pub game_time_bins: Vec<Bin>,
    pub vicinity_bins: Vec<Bin>,
    pub conventions: ReportConventions,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn write_curves_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "class,threshold,delta,tp,fp,fn,precision,recall,f1")?;
        for c in &self.curves {
            for p in &c.points {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    c.class, c.threshold, p.delta, p.tp, p.fp, p.fn_, p.precision, p.recall, p.f1
                )?;
            }
        }
        Ok(())
    }
}

/// Full report. Curve thresholds are taken from `thresholds` or, when absent,
/// optimized on the evaluated videos themselves.
pub fn evaluate(
    videos: &[EvalVideo],
    num_classes: usize,
    fps: f64,
    cfg: &MetricConfig,
    thresholds: Option<&[f64]>,
) -> Result<EvalReport> {
    if cfg.tolerances.is_empty() {
        return Err(Error::InvalidConfig("empty tolerance grid".into()));
    }
    let map = average_map(videos, num_classes, fps, cfg);
    let thresholds = match thresholds {
        Some(t) if t.len() == num_classes => t.to_vec(),
        Some(t) => {
            return Err(Error::InvalidInput(format!(
                "{} thresholds for {num_classes} classes",
                t.len()
            )))
        }
        None => optimize_thresholds(videos, num_classes, fps, &cfg.tolerances, cfg.window),
    };
    Ok(EvalReport {
        num_videos: videos.len(),
        num_classes,
        fps,
        config: cfg.clone(),
        per_delta: map.per_delta,
        average_map: map.average_map,
        curves: per_class_curves(videos, fps, &cfg.tolerances, cfg.window, &thresholds)?,
        game_time_bins: bin_by_game_time(videos, num_classes, fps, cfg),
        vicinity_bins: bin_by_vicinity(videos, num_classes, fps, cfg),
        conventions: ReportConventions::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_counts_and_csv() {
        let actions = vec![Action::new(0, 100), Action::new(1, 700)];
        let v = EvalVideo {
            video_id: "a".into(),
            num_frames: 1000,
            spots: vec![Spot::new(0, 101, 0.9), Spot::new(1, 900, 0.6)],
            actions,
        };
        let r = evaluate(&[v], 2, 2.0, &MetricConfig::default(), None).unwrap();
        assert_eq!(r.per_delta.len(), 12);
        assert_eq!(r.game_time_bins.iter().map(|b| b.count).sum::<usize>(), 2);
        assert_eq!(r.vicinity_bins.iter().map(|b| b.count).sum::<usize>(), 2);
        let mut csv = Vec::new();
        r.write_curves_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 12);
        assert!((0.0..=1.0).contains(&r.average_map));
    }
}
