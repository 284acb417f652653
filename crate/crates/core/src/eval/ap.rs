use serde::{Deserialize, Serialize};

use super::tolerance::{match_tolerance, ToleranceMatch};
use super::EvalVideo;
use crate::config::{ApInterpolation, MetricConfig};

/// Area under the precision-recall curve of a ranked list of TP/FP labels.
///
/// `labels` must be ordered by descending confidence. The all-point variant
/// sums the interpolated precision (best precision at any deeper rank) at
/// every true positive and divides by `n_gt`. Returns 0 when `n_gt` is 0.
pub fn average_precision(labels: &[bool], n_gt: usize, interpolation: ApInterpolation) -> f64 {
    if n_gt == 0 || labels.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(labels.len());
    let mut recall = Vec::with_capacity(labels.len());
    let mut tp = 0usize;
    for (k, &hit) in labels.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    match interpolation {
        ApInterpolation::AllPoint => {
            let total: f64 = labels.iter().zip(&precision).filter(|(&hit, _)| hit).map(|(_, &p)| p).sum();
            total / n_gt as f64
        }
        ApInterpolation::ElevenPoint => {
            let sum: f64 = (0..=10)
                .map(|i| {
                    let r = i as f64 / 10.0;
                    recall
                        .iter()
                        .position(|&x| x >= r - 1e-12)
                        .map_or(0.0, |k| precision[k])
                })
                .sum();
            sum / 11.0
        }
    }
}

/// Ranked labels of one class pooled over videos.
pub(crate) fn pooled_labels(matches: &[(usize, &ToleranceMatch)], class: usize) -> Vec<bool> {
    let mut ranked: Vec<(f64, bool)> = matches
        .iter()
        .flat_map(|(_, m)| m.labeled.iter().filter(|l| l.class == class).map(|l| (l.confidence, l.is_tp())))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    ranked.into_iter().map(|(_, hit)| hit).collect()
}

/// Per-class AP, `None` for classes with neither ground truth nor predictions.
pub(crate) fn class_aps(
    labels: &[Vec<bool>],
    n_gt: &[usize],
    interpolation: ApInterpolation,
) -> Vec<Option<f64>> {
    labels
        .iter()
        .zip(n_gt)
        .map(|(l, &n)| (n > 0 || !l.is_empty()).then(|| average_precision(l, n, interpolation)))
        .collect()
}

/// Mean of the defined entries, 0 when none is defined.
pub(crate) fn mean_defined(values: &[Option<f64>]) -> f64 {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaMap {
    pub delta: f64,
    pub map: f64,
    /// AP per class; `null` for a class absent from both sides.
    pub per_class_ap: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub per_delta: Vec<DeltaMap>,
    pub average_map: f64,
}

/// mAP at every tolerance of the grid and their mean (Average-mAP).
pub fn average_map(videos: &[EvalVideo], num_classes: usize, fps: f64, cfg: &MetricConfig) -> MapResult {
    let n_gt = count_gt(videos.iter().flat_map(|v| v.actions.iter().map(|a| a.class)), num_classes);
    let per_delta: Vec<DeltaMap> = cfg
        .tolerances
        .iter()
        .map(|&delta| {
            let matches: Vec<ToleranceMatch> = videos
                .iter()
                .map(|v| match_tolerance(&v.spots, &v.actions, delta, fps, cfg.window))
                .collect();
            let refs: Vec<(usize, &ToleranceMatch)> = matches.iter().enumerate().collect();
            let labels: Vec<Vec<bool>> = (0..num_classes).map(|c| pooled_labels(&refs, c)).collect();
            let per_class_ap = class_aps(&labels, &n_gt, cfg.interpolation);
            DeltaMap {
                delta,
                map: mean_defined(&per_class_ap),
                per_class_ap,
            }
        })
        .collect();
    let average_map = per_delta.iter().map(|d| d.map).sum::<f64>() / per_delta.len().max(1) as f64;
    MapResult {
        per_delta,
        average_map,
    }
}

pub(crate) fn count_gt(classes: impl Iterator<Item = usize>, num_classes: usize) -> Vec<usize> {
    let mut n = vec![0; num_classes];
    for c in classes {
        if c < num_classes {
            n[c] += 1;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Action, Spot};

    const ALL: ApInterpolation = ApInterpolation::AllPoint;

    #[test]
    fn worked_ap_values() {
        assert_eq!(average_precision(&[true], 1, ALL), 1.0);
        assert_eq!(average_precision(&[true, false], 1, ALL), 1.0);
        assert_eq!(average_precision(&[false, true], 1, ALL), 0.5);
        assert_eq!(average_precision(&[false], 0, ALL), 0.0);
        assert_eq!(average_precision(&[], 3, ALL), 0.0);
        assert_eq!(average_precision(&[true, true, true], 3, ALL), 1.0);
    }

    #[test]
    fn eleven_point_values() {
        let e = ApInterpolation::ElevenPoint;
        assert_eq!(average_precision(&[true], 1, e), 1.0);
        assert!((average_precision(&[false, true], 1, e) - 0.5).abs() < 1e-15);
        // recall 0.5 at precision 1, recall 1 at precision 2/3
        let v = average_precision(&[true, false, true], 2, e);
        assert!((v - (6.0 + 5.0 * 2.0 / 3.0) / 11.0).abs() < 1e-15);
    }

    fn video(spots: Vec<Spot>, actions: Vec<Action>) -> EvalVideo {
        EvalVideo {
            video_id: "v".into(),
            num_frames: 2000,
            spots,
            actions,
        }
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let actions = vec![Action::new(0, 100), Action::new(1, 400), Action::new(2, 900)];
        let spots = actions.iter().map(|a| Spot::new(a.class, a.frame, 1.0)).collect();
        let cfg = MetricConfig::default();
        assert_eq!(average_map(&[video(spots, actions.clone())], 3, 2.0, &cfg).average_map, 1.0);
        assert_eq!(average_map(&[video(vec![], actions)], 3, 2.0, &cfg).average_map, 0.0);
    }

    #[test]
    fn single_ground_truth_two_predictions_over_the_grid() {
        let v = video(vec![Spot::new(0, 204, 0.9), Spot::new(0, 280, 0.8)], vec![Action::new(0, 200)]);
        let r = average_map(&[v], 1, 2.0, &MetricConfig::default());
        // the 2 s offset lies inside every window of the grid
        assert!(r.per_delta.iter().all(|d| d.map == 1.0));
        assert_eq!(r.average_map, 1.0);
    }
}
