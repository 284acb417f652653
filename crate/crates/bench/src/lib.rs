//! Inputs shared by the benchmarks.

use ctxspot_core::domain::{Action, Spot};
use ctxspot_core::eval::EvalVideo;
use ctxspot_core::seg_loss::SegScores;
use ctxspot_core::tse::{tse_video, TseMap};
use ctxspot_core::{SpottingConfig, VideoAnnotations};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random scores and the encoding of a chunk with `n_actions` actions.
pub fn seg_case(cfg: &SpottingConfig, n_actions: usize, seed: u64) -> (SegScores, TseMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.chunk_frames;
    let mut frames: Vec<usize> = (0..n).step_by(n / n_actions.max(1)).take(n_actions).collect();
    frames.sort_unstable();
    let actions = frames.iter().map(|&f| Action::new(rng.gen_range(0..cfg.num_classes), f)).collect();
    let ann = VideoAnnotations::new("b", cfg.fps, n, actions, None).unwrap();
    let scores = Array2::from_shape_simple_fn((n, cfg.num_classes), || rng.gen_range(0.0..1.0));
    (SegScores::new(scores).unwrap(), tse_video(&ann, cfg).unwrap())
}

pub fn random_features(rows: usize, cols: usize, seed: u64) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
}

/// Videos with noisy predictions around their actions.
pub fn eval_videos(count: usize, num_frames: usize, num_classes: usize, seed: u64) -> Vec<EvalVideo> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let actions: Vec<Action> = (0..num_frames / 60)
                .map(|k| Action::new(rng.gen_range(0..num_classes), k * 60 + rng.gen_range(0..30)))
                .collect();
            let mut spots: Vec<Spot> = actions
                .iter()
                .map(|a| {
                    let f = (a.frame as i64 + rng.gen_range(-20..=20)).clamp(0, num_frames as i64 - 1);
                    Spot::new(a.class, f as usize, rng.gen_range(0.3..1.0))
                })
                .collect();
            spots.extend((0..actions.len() / 2).map(|_| {
                Spot::new(rng.gen_range(0..num_classes), rng.gen_range(0..num_frames), rng.gen_range(0.0..0.6))
            }));
            EvalVideo {
                video_id: format!("v{i}"),
                num_frames,
                spots,
                actions,
            }
        })
        .collect()
}
