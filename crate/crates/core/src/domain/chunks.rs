use ndarray::{s, Array2};
use rand::Rng;

use super::{Action, Video};
use crate::config::SpottingConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkOrigin {
    pub video_id: String,
    /// First frame of the chunk in video coordinates; negative when the
    /// chunk starts before the video.
    pub start: i64,
}

/// A training window of exactly `chunk_frames` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    pub features: Array2<f32>,
    /// Actions inside the window as `(class, offset)`, chronological.
    pub actions: Vec<Action>,
    pub origin: ChunkOrigin,
    pub padded_prefix: usize,
    pub padded_suffix: usize,
}

impl Chunk {
    /// Cuts `[start, start + len)` out of the video, zero-padding frames that
    /// fall outside it. Padded frames carry no annotations.
    pub fn extract(video: &Video, start: i64, len: usize) -> Chunk {
        let n = video.num_frames() as i64;
        let dim = video.features.feature_dim();
        let end = start + len as i64;
        let lo = start.max(0);
        let hi = end.min(n);
        let mut features = Array2::zeros((len, dim));
        if lo < hi {
            let dst = (lo - start) as usize..(hi - start) as usize;
            features
                .slice_mut(s![dst, ..])
                .assign(&video.features.values.slice(s![lo as usize..hi as usize, ..]));
        }
        let actions = video
            .annotations
            .actions
            .iter()
            .filter(|a| (a.frame as i64) >= start && (a.frame as i64) < end)
            .map(|a| Action::new(a.class, (a.frame as i64 - start) as usize))
            .collect();
        Chunk {
            features,
            actions,
            origin: ChunkOrigin {
                video_id: video.annotations.video_id.clone(),
                start,
            },
            padded_prefix: (-start).max(0).min(len as i64) as usize,
            padded_suffix: (end - n).max(0).min(len as i64) as usize,
        }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }
}

/// Builds one training batch for a video: one chunk around every action,
/// with the action at a uniformly random offset, plus `ceil(N_GT / C)`
/// chunks that contain no action at all.
pub fn sample_chunks<R: Rng + ?Sized>(video: &Video, cfg: &SpottingConfig, rng: &mut R) -> Vec<Chunk> {
    let len = cfg.chunk_frames;
    let actions = &video.annotations.actions;
    let mut chunks = Vec::with_capacity(actions.len() + actions.len().div_ceil(cfg.num_classes));
    for a in actions {
        let offset = rng.gen_range(0..len) as i64;
        chunks.push(Chunk::extract(video, a.frame as i64 - offset, len));
    }

    let n_background = actions.len().div_ceil(cfg.num_classes);
    if n_background == 0 {
        return chunks;
    }
    // Starts overlapping the video by at least one frame and covering no action.
    let n = video.num_frames() as i64;
    let frames: Vec<i64> = actions.iter().map(|a| a.frame as i64).collect();
    let candidates: Vec<i64> = (-(len as i64) + 1..n)
        .filter(|&st| {
            let end = st + len as i64;
            !frames.iter().any(|&f| f >= st && f < end)
        })
        .collect();
    for _ in 0..n_background {
        let start = if candidates.is_empty() {
            // every window touching the video holds an action: use pure padding
            n
        } else {
            candidates[rng.gen_range(0..candidates.len())]
        };
        chunks.push(Chunk::extract(video, start, len));
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeatureSequence, VideoAnnotations};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn video(num_frames: usize, actions: Vec<Action>) -> Video {
        let values = Array2::from_shape_fn((num_frames, 2), |(i, j)| (i * 2 + j) as f32 + 1.0);
        Video::new(
            VideoAnnotations::new("v", 2.0, num_frames, actions, None).unwrap(),
            FeatureSequence::new("v", values).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn three_actions_three_classes_give_one_background_chunk() {
        let v = video(600, vec![Action::new(0, 100), Action::new(1, 300), Action::new(2, 500)]);
        let cfg = SpottingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chunks = sample_chunks(&v, &cfg, &mut rng);
        assert_eq!(chunks.len(), 4);
        assert!(chunks[3].actions.is_empty());
        for c in &chunks {
            assert_eq!(c.features.nrows(), 240);
        }
    }

    #[test]
    fn no_actions_give_no_chunks() {
        let v = video(300, vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_chunks(&v, &SpottingConfig::default(), &mut rng).is_empty());
    }

    #[test]
    fn padding_arithmetic_near_video_start() {
        let v = video(400, vec![Action::new(0, 5)]);
        let cfg = SpottingConfig::default();
        let mut saw_padding = false;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = &sample_chunks(&v, &cfg, &mut rng)[0];
            let start = c.origin.start;
            // offset of the action inside the chunk recovers the start
            assert_eq!(c.actions[0], Action::new(0, (5 - start) as usize));
            assert!((5 - 239..=5).contains(&start));
            assert_eq!(c.padded_prefix as i64, (-start).max(0));
            assert_eq!(c.padded_suffix as i64, (start + 240 - 400).max(0));
            if start < 0 {
                saw_padding = true;
                let p = c.padded_prefix;
                assert!(c.features.slice(s![..p, ..]).iter().all(|&x| x == 0.0));
                // first real frame lands right after the padding
                assert_eq!(c.features[[p, 0]], 1.0);
            }
        }
        assert!(saw_padding);
    }

    #[test]
    fn sampling_is_deterministic_and_respects_contents() {
        let v = video(
            900,
            vec![Action::new(0, 40), Action::new(1, 41), Action::new(2, 600), Action::new(0, 890)],
        );
        let cfg = SpottingConfig::default();
        for seed in 0..1000 {
            let a = sample_chunks(&v, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = sample_chunks(&v, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a, b);
            assert_eq!(a.len(), 4 + 2);
            for (gen, c) in v.annotations.actions.iter().zip(&a) {
                let off = gen.frame as i64 - c.origin.start;
                assert!(c.actions.contains(&Action::new(gen.class, off as usize)));
            }
            for c in &a[4..] {
                assert!(c.actions.is_empty());
            }
        }
    }
}
