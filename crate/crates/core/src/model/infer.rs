use ndarray::{s, Array2};

use super::{forward, ModelParams};
use crate::config::SpottingConfig;
use crate::domain::{FeatureSequence, Spot, VideoPrediction};
use crate::error::{Error, Result};

/// Keeps, per class, the most confident spot of every group closer than
/// `window` frames; output is ordered by frame, then class.
pub fn dedup_spots(spots: &[Spot], window: f64) -> Vec<Spot> {
    let mut order: Vec<Spot> = spots.to_vec();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Spot> = Vec::new();
    for s in order {
        let clash = kept
            .iter()
            .any(|k| k.class == s.class && (k.frame as f64 - s.frame as f64).abs() < window);
        if !clash {
            kept.push(s);
        }
    }
    kept.sort_by_key(|s| (s.frame, s.class));
    kept
}

/// Runs the network over consecutive non-overlapping chunks (the last one
/// zero-padded), concatenates the segmentation curves, and turns confident
/// spotting rows into deduplicated spots in video coordinates.
pub fn predict_video(
    features: &FeatureSequence,
    params: &ModelParams<f32>,
    cfg: &SpottingConfig,
) -> Result<VideoPrediction> {
    if !params.is_finite() {
        return Err(Error::NonFinite("model parameters".into()));
    }
    let n = features.num_frames();
    let nf = cfg.chunk_frames;
    let c = cfg.num_classes;
    let mut segmentation = vec![Vec::with_capacity(n); c];
    let mut spots = Vec::new();
    let mut start = 0;
    while start < n || (n == 0 && start == 0) {
        let end = (start + nf).min(n);
        let mut chunk = Array2::<f32>::zeros((nf, features.feature_dim()));
        chunk
            .slice_mut(s![..end - start, ..])
            .assign(&features.values.slice(s![start..end, ..]));
        let trace = forward(chunk.view(), params)?;
        for (k, curve) in segmentation.iter_mut().enumerate() {
            curve.extend(trace.seg_scores.slice(s![..end - start, k]).iter());
        }
        for row in trace.predictions.outer_iter() {
            let confidence = row[0];
            if confidence < cfg.inference.conf_threshold {
                continue;
            }
            let offset = ((row[1] * nf as f64).round() as usize).min(nf - 1);
            let frame = start + offset;
            if frame >= n {
                continue;
            }
            let class = (0..c)
                .max_by(|&a, &b| row[2 + a].total_cmp(&row[2 + b]).then(b.cmp(&a)))
                .expect("at least one class");
            spots.push(Spot::new(class, frame, confidence));
        }
        if n == 0 {
            break;
        }
        start += nf;
    }
    let window = cfg.inference.dedup_seconds * cfg.fps;
    Ok(VideoPrediction {
        video_id: features.video_id.clone(),
        fps: cfg.fps,
        num_frames: n,
        spots: dedup_spots(&spots, window),
        segmentation,
    })
}
