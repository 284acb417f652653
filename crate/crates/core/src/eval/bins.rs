use serde::{Deserialize, Serialize};

use super::ap::{class_aps, mean_defined, pooled_labels};
use super::tolerance::{match_tolerance, ToleranceMatch};
use super::EvalVideo;
use crate::config::MetricConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    /// Lower edge (minutes for game time, seconds for vicinity).
    pub start: f64,
    /// Upper edge, `None` for an open last bin.
    pub end: Option<f64>,
    pub count: usize,
    /// `None` when the bin holds no ground truth.
    pub average_map: Option<f64>,
}

/// Nearest same-class ground truth to `frame`, falling back to any class.
fn nearest_gt(video: &EvalVideo, class: usize, frame: usize) -> Option<usize> {
    let dist = |g: usize| (video.actions[g].frame as i64 - frame as i64).unsigned_abs();
    let same = (0..video.actions.len())
        .filter(|&g| video.actions[g].class == class)
        .min_by_key(|&g| dist(g));
    same.or_else(|| (0..video.actions.len()).min_by_key(|&g| dist(g)))
}

/// Average-mAP restricted to each bin of ground truths. A true positive
/// joins the bin of the ground truth it claimed; a false positive joins the
/// bin of its nearest ground truth of the same class (any class if none).
fn binned(
    videos: &[EvalVideo],
    num_classes: usize,
    fps: f64,
    cfg: &MetricConfig,
    gt_bins: &[Vec<usize>],
    n_bins: usize,
) -> Vec<(usize, Option<f64>)> {
    let mut n_gt = vec![vec![0usize; num_classes]; n_bins];
    for (v, bins) in videos.iter().zip(gt_bins) {
        for (a, &b) in v.actions.iter().zip(bins) {
            if a.class < num_classes {
                n_gt[b][a.class] += 1;
            }
        }
    }
    let mut map_sum = vec![0.0; n_bins];
    for &delta in &cfg.tolerances {
        let matches: Vec<ToleranceMatch> = videos
            .iter()
            .map(|v| match_tolerance(&v.spots, &v.actions, delta, fps, cfg.window))
            .collect();
        let mut per_bin: Vec<Vec<ToleranceMatch>> = vec![Vec::new(); n_bins];
        for (vi, m) in matches.iter().enumerate() {
            let mut split: Vec<ToleranceMatch> = vec![
                ToleranceMatch {
                    labeled: Vec::new(),
                    false_negatives: 0,
                };
                n_bins
            ];
            for l in &m.labeled {
                let spot = videos[vi].spots[l.index];
                let g = l.gt.or_else(|| nearest_gt(&videos[vi], l.class, spot.frame));
                if let Some(g) = g {
                    split[gt_bins[vi][g]].labeled.push(*l);
                }
            }
            for (b, s) in split.into_iter().enumerate() {
                per_bin[b].push(s);
            }
        }
        for b in 0..n_bins {
            let refs: Vec<(usize, &ToleranceMatch)> = per_bin[b].iter().enumerate().collect();
            let labels: Vec<Vec<bool>> = (0..num_classes).map(|c| pooled_labels(&refs, c)).collect();
            map_sum[b] += mean_defined(&class_aps(&labels, &n_gt[b], cfg.interpolation));
        }
    }
    let n_delta = cfg.tolerances.len().max(1) as f64;
    (0..n_bins)
        .map(|b| {
            let count: usize = n_gt[b].iter().sum();
            (count, (count > 0).then(|| map_sum[b] / n_delta))
        })
        .collect()
}

/// Average-mAP per bin of game time (`game_time_bin_minutes` wide).
pub fn bin_by_game_time(videos: &[EvalVideo], num_classes: usize, fps: f64, cfg: &MetricConfig) -> Vec<Bin> {
    let width = cfg.game_time_bin_minutes * 60.0 * fps;
    let bin_of = |frame: usize| (frame as f64 / width).floor() as usize;
    let last_frame = videos
        .iter()
        .flat_map(|v| v.actions.iter().map(|a| a.frame).chain(v.num_frames.checked_sub(1)))
        .max()
        .unwrap_or(0);
    let n_bins = bin_of(last_frame) + 1;
    let gt_bins: Vec<Vec<usize>> = videos
        .iter()
        .map(|v| v.actions.iter().map(|a| bin_of(a.frame)).collect())
        .collect();
    binned(videos, num_classes, fps, cfg, &gt_bins, n_bins)
        .into_iter()
        .enumerate()
        .map(|(b, (count, average_map))| Bin {
            start: b as f64 * cfg.game_time_bin_minutes,
            end: Some((b + 1) as f64 * cfg.game_time_bin_minutes),
            count,
            average_map,
        })
        .collect()
}

/// Seconds from each ground truth to its closest neighbour in the same
/// video, any class; `None` when it is alone.
pub fn neighbour_distances(video: &EvalVideo, fps: f64) -> Vec<Option<f64>> {
    video
        .actions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            video
                .actions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| (a.frame as f64 - b.frame as f64).abs() / fps)
                .min_by(f64::total_cmp)
        })
        .collect()
}

/// Average-mAP per bin of distance to the closest other action. Isolated
/// actions fall in the last, open bin.
pub fn bin_by_vicinity(videos: &[EvalVideo], num_classes: usize, fps: f64, cfg: &MetricConfig) -> Vec<Bin> {
    let edges = &cfg.vicinity_edges;
    let n_bins = edges.len() + 1;
    let bin_of = |d: Option<f64>| d.map_or(n_bins - 1, |d| edges.partition_point(|&e| e <= d));
    let gt_bins: Vec<Vec<usize>> = videos
        .iter()
        .map(|v| neighbour_distances(v, fps).into_iter().map(bin_of).collect())
        .collect();
    binned(videos, num_classes, fps, cfg, &gt_bins, n_bins)
        .into_iter()
        .enumerate()
        .map(|(b, (count, average_map))| Bin {
            start: if b == 0 { 0.0 } else { edges[b - 1] },
            end: edges.get(b).copied(),
            count,
            average_map,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Action, Spot};

    fn video(spots: Vec<Spot>, actions: Vec<Action>, num_frames: usize) -> EvalVideo {
        EvalVideo {
            video_id: "v".into(),
            num_frames,
            spots,
            actions,
        }
    }

    #[test]
    fn perfect_predictions_fill_every_non_empty_bin() {
        let actions = vec![Action::new(0, 100), Action::new(1, 1500), Action::new(0, 1516)];
        let spots = actions.iter().map(|a| Spot::new(a.class, a.frame, 1.0)).collect();
        let v = video(spots, actions, 3000);
        let cfg = MetricConfig::default();
        let bins = bin_by_game_time(std::slice::from_ref(&v), 2, 2.0, &cfg);
        assert_eq!(bins.len(), 5);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 3);
        for b in &bins {
            assert_eq!(b.average_map, (b.count > 0).then_some(1.0));
        }
        assert_eq!(bins[1].count, 0);
        let vic = bin_by_vicinity(&[v], 2, 2.0, &cfg);
        assert_eq!(vic.len(), 7);
        assert_eq!(vic[0].count, 2);
        assert_eq!(vic[6].count, 1);
        assert_eq!(vic[6].end, None);
    }

    #[test]
    fn isolated_and_close_actions() {
        let v = video(vec![], vec![Action::new(2, 500)], 1000);
        assert_eq!(neighbour_distances(&v, 2.0), vec![None]);
        let bins = bin_by_vicinity(&[v], 3, 2.0, &MetricConfig::default());
        assert_eq!(bins.last().unwrap().count, 1);
        let v = video(vec![], vec![Action::new(0, 100), Action::new(1, 116)], 1000);
        let bins = bin_by_vicinity(&[v], 3, 2.0, &MetricConfig::default());
        assert_eq!(bins[0].count, 2);
    }
}
