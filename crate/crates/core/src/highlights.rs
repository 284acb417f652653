//! Highlight reels and the search for unannotated interesting moments from
//! segmentation curves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::HighlightsConfig;
use crate::domain::{Spot, VideoAnnotations};
use crate::error::{Error, Result};

/// Inclusive frame run `[start, end]` and the highest score inside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub peak: f64,
}

impl Interval {
    fn merge(self, other: Interval) -> Interval {
        Interval {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            peak: self.peak.max(other.peak),
        }
    }
}

/// Maximal runs with `score >= eta`.
fn runs(curve: &[f64], eta: f64) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    let mut open: Option<Interval> = None;
    for (t, &v) in curve.iter().enumerate() {
        if v >= eta {
            open = Some(match open {
                Some(r) => Interval { end: t, peak: r.peak.max(v), ..r },
                None => Interval { start: t, end: t, peak: v },
            });
        } else if let Some(r) = open.take() {
            out.push(r);
        }
    }
    out.extend(open);
    out
}

/// Runs of `curve` at or above `eta` lying more than `exclusion` frames from
/// every annotated action, merged when fewer than `merge_gap` frames apart.
pub fn detect_opportunity_segments(
    curve: &[f64],
    eta: f64,
    actions: &[usize],
    exclusion: usize,
    merge_gap: usize,
) -> Result<Vec<Interval>> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidInput(format!("threshold {eta} outside (0, 1)")));
    }
    let near_action = |r: &Interval| {
        actions
            .iter()
            .any(|&a| a + exclusion >= r.start && a <= r.end + exclusion)
    };
    let mut merged: Vec<Interval> = Vec::new();
    for r in runs(curve, eta).into_iter().filter(|r| !near_action(r)) {
        match merged.last_mut() {
            Some(last) if r.start - last.end - 1 < merge_gap => *last = last.merge(r),
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipSource {
    Spot,
    Segmentation,
}

/// A reel entry in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighlightClip {
    pub start: f64,
    pub end: f64,
    /// Source, class and score of the strongest contributor.
    pub source: ClipSource,
    pub class: usize,
    pub score: f64,
}

/// Clips around every spot of a clip class and every segmentation interval
/// whose peak reaches the segmentation threshold, padded by the configured
/// lead and tail, clipped at zero, merged where they overlap and sorted.
pub fn build_reel(spots: &[Spot], intervals: &[Interval], fps: f64, cfg: &HighlightsConfig) -> Vec<HighlightClip> {
    let pad = |from: f64, to: f64| ((from - cfg.before_seconds).max(0.0), to + cfg.after_seconds);
    let mut clips: Vec<HighlightClip> = spots
        .iter()
        .filter(|s| cfg.clip_classes.contains(&s.class))
        .map(|s| {
            let t = s.frame as f64 / fps;
            let (start, end) = pad(t, t);
            HighlightClip {
                start,
                end,
                source: ClipSource::Spot,
                class: s.class,
                score: s.confidence,
            }
        })
        .collect();
    clips.extend(intervals.iter().filter(|r| r.peak >= cfg.segment_threshold).map(|r| {
        let (start, end) = pad(r.start as f64 / fps, r.end as f64 / fps);
        HighlightClip {
            start,
            end,
            source: ClipSource::Segmentation,
            class: cfg.goal_class,
            score: r.peak,
        }
    }));
    clips.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut reel: Vec<HighlightClip> = Vec::new();
    for c in clips {
        match reel.last_mut() {
            Some(last) if c.start <= last.end => {
                last.end = last.end.max(c.end);
                if c.score > last.score {
                    last.source = c.source;
                    last.class = c.class;
                    last.score = c.score;
                }
            }
            _ => reel.push(c),
        }
    }
    reel
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub eta: f64,
    /// Inspected segments.
    pub count: usize,
    pub true_positives: usize,
    /// `None` when nothing is inspected.
    pub precision: Option<f64>,
}

/// A video's goal-class segmentation curve with its annotations.
#[derive(Clone, Copy, Debug)]
pub struct CurveWithTruth<'a> {
    pub curve: &'a [f64],
    pub annotations: &'a VideoAnnotations,
}

/// Precision of the inspected segments against planted opportunities, for
/// each threshold of the grid.
///
/// Candidate segments are detected once at the lowest threshold; a segment
/// is inspected at `eta` when its peak reaches `eta`, so raising the bar
/// never adds segments. A segment is correct when it overlaps the window
/// `[t - before, t + after]` of a goal-class opportunity at `t`.
pub fn precision_vs_threshold(videos: &[CurveWithTruth], cfg: &HighlightsConfig) -> Result<Vec<PrecisionRow>> {
    if videos.is_empty() || videos.iter().any(|v| v.annotations.opportunities.is_none()) {
        return Err(Error::NotEvaluable("annotations carry no opportunity ground truth".into()));
    }
    let lowest = cfg
        .eta_grid
        .iter()
        .copied()
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::InvalidConfig("empty threshold grid".into()))?;
    let [before, after] = cfg.opportunity_window;
    let mut candidates: Vec<(f64, bool)> = Vec::new();
    for v in videos {
        let actions = v.annotations.class_frames(cfg.goal_class);
        let segments =
            detect_opportunity_segments(v.curve, lowest, &actions, cfg.exclusion_frames, cfg.merge_gap_frames)?;
        let windows: Vec<(usize, usize)> = v
            .annotations
            .opportunities
            .iter()
            .flatten()
            .filter(|o| o.class == cfg.goal_class)
            .map(|o| (o.frame.saturating_sub(before), o.frame + after))
            .collect();
        for s in segments {
            let hit = windows.iter().any(|&(lo, hi)| s.start <= hi && lo <= s.end);
            candidates.push((s.peak, hit));
        }
    }
    Ok(cfg
        .eta_grid
        .iter()
        .map(|&eta| {
            let inspected: Vec<bool> = candidates.iter().filter(|(p, _)| *p >= eta).map(|&(_, h)| h).collect();
            let tp = inspected.iter().filter(|&&h| h).count();
            PrecisionRow {
                eta,
                count: inspected.len(),
                true_positives: tp,
                precision: (!inspected.is_empty()).then(|| tp as f64 / inspected.len() as f64),
            }
        })
        .collect())
}

pub fn write_precision_csv<W: Write>(rows: &[PrecisionRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "eta,count,true_positives,precision")?;
    for r in rows {
        let p = r.precision.map_or(String::new(), |p| p.to_string());
        writeln!(out, "{},{},{},{}", r.eta, r.count, r.true_positives, p)?;
    }
    Ok(())
}
