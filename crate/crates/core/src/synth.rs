//! Synthetic feature sequences with planted action signatures.
//!
//! Every class has a fixed unit direction `u_c` (its signature) and a second
//! unit direction `v_c` (its cue). An action of class `c` at frame `t` adds
//! `a * u_c` on `[t, t + w)` and, with probability `q_cue`, `a_cue * v_c` on
//! `[t - w_pre, t)`. An opportunity adds the cue and a signature cut to its
//! first `w / 2` frames, and is recorded apart from the actions. Background
//! is Gaussian noise.

use std::path::Path;

use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Action, FeatureSequence, Video, VideoAnnotations};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub train_videos: usize,
    pub val_videos: usize,
    pub test_videos: usize,
    pub num_frames: usize,
    pub fps: f64,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Inclusive range of annotated actions per video.
    pub actions_per_video: [usize; 2],
    pub signature_window: usize,
    pub signature_amplitude: f64,
    pub cue_window: usize,
    pub cue_amplitude: f64,
    pub cue_probability: f64,
    /// Expected opportunities per video, for each class in `opportunity_classes`.
    pub opportunity_rate: f64,
    pub opportunity_classes: Vec<usize>,
    /// Minimum distance in frames between any two planted events.
    pub min_spacing: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train_videos: 240,
            val_videos: 20,
            test_videos: 20,
            num_frames: 240,
            fps: 2.0,
            num_classes: 3,
            feature_dim: 16,
            actions_per_video: [1, 4],
            signature_window: 20,
            signature_amplitude: 3.0,
            cue_window: 10,
            cue_amplitude: 1.5,
            cue_probability: 0.7,
            opportunity_rate: 0.5,
            opportunity_classes: vec![0],
            min_spacing: 30,
            noise_sigma: 1.0,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.signature_window == 0 || self.cue_window == 0 {
            return bad("signature_window and cue_window must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.cue_probability) {
            return bad("cue_probability must lie in [0, 1]");
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be positive");
        }
        if self.num_classes == 0 || self.feature_dim < 2 || self.num_frames == 0 {
            return bad("num_classes, num_frames must be positive and feature_dim at least 2");
        }
        if !self.fps.is_finite() || self.fps <= 0.0 || self.opportunity_rate.is_nan() || self.opportunity_rate < 0.0 {
            return bad("fps must be positive and opportunity_rate non-negative");
        }
        if self.actions_per_video[0] > self.actions_per_video[1] {
            return bad("actions_per_video must be an ascending range");
        }
        if self.opportunity_classes.iter().any(|&c| c >= self.num_classes) {
            return bad("opportunity class out of range");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("spec serializes")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let spec: SynthSpec = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-class signature and cue directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Patterns {
    pub signatures: Vec<Array1<f64>>,
    pub cues: Vec<Array1<f64>>,
}

fn unit_vector<R: Rng>(dim: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_shape_simple_fn(dim, || StandardNormal.sample(rng));
        let n = v.dot(&v).sqrt();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Draws `count` unit vectors whose pairwise |cosine| stays below 0.9.
fn distinct_directions<R: Rng>(count: usize, dim: usize, rng: &mut R) -> Vec<Array1<f64>> {
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let v = unit_vector(dim, rng);
        if out.iter().all(|u| u.dot(&v).abs() < 0.9) {
            out.push(v);
        }
    }
    out
}

impl Patterns {
    pub fn from_spec(spec: &SynthSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "patterns", 0));
        let all = distinct_directions(2 * spec.num_classes, spec.feature_dim, &mut rng);
        Patterns {
            signatures: all[..spec.num_classes].to_vec(),
            cues: all[spec.num_classes..].to_vec(),
        }
    }
}

/// Independent seed for a named stream.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Event frames at least `spacing` apart inside `[lo, hi]`.
fn place_events<R: Rng>(count: usize, lo: usize, hi: usize, spacing: usize, rng: &mut R) -> Option<Vec<usize>> {
    if count == 0 {
        return Some(Vec::new());
    }
    let span = hi.checked_sub(lo)?;
    let needed = (count - 1) * spacing;
    if needed > span {
        return None;
    }
    // slack distributed over count + 1 gaps via sorted uniform draws
    let slack = span - needed;
    let mut cuts: Vec<usize> = (0..count).map(|_| rng.gen_range(0..=slack)).collect();
    cuts.sort_unstable();
    Some(cuts.iter().enumerate().map(|(i, &c)| lo + c + i * spacing).collect())
}

fn add_pattern(values: &mut Array2<f64>, dir: &Array1<f64>, amp: f64, from: usize, to: usize) {
    let to = to.min(values.nrows());
    if from >= to {
        return;
    }
    let add = dir * amp;
    for mut row in values.slice_mut(s![from..to, ..]).rows_mut() {
        row += &add;
    }
}

/// One video with the given action classes (in any order); opportunities are
/// drawn from the spec's rate.
pub fn generate_video_with_classes<R: Rng>(
    spec: &SynthSpec,
    patterns: &Patterns,
    video_id: &str,
    classes: &[usize],
    rng: &mut R,
) -> Result<Video> {
    spec.validate()?;
    let mut opportunity_classes = Vec::new();
    for &c in &spec.opportunity_classes {
        let whole = spec.opportunity_rate.floor() as usize;
        let extra = rng.gen_bool(spec.opportunity_rate.fract()) as usize;
        opportunity_classes.extend(std::iter::repeat_n(c, whole + extra));
    }
    let n_events = classes.len() + opportunity_classes.len();
    let lo = spec.cue_window;
    let hi = spec.num_frames.saturating_sub(spec.signature_window);
    let frames = place_events(n_events, lo, hi, spec.min_spacing, rng).ok_or_else(|| {
        Error::InvalidInput(format!(
            "{video_id}: {} frames cannot hold {n_events} events spaced {} apart",
            spec.num_frames, spec.min_spacing
        ))
    })?;
    let mut kinds: Vec<(usize, bool)> = classes.iter().map(|&c| (c, false)).collect();
    kinds.extend(opportunity_classes.iter().map(|&c| (c, true)));
    kinds.shuffle(rng);

    let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let mut values = Array2::from_shape_simple_fn((spec.num_frames, spec.feature_dim), || normal.sample(rng));
    let mut actions = Vec::new();
    let mut opportunities = Vec::new();
    for (&t, &(c, is_opportunity)) in frames.iter().zip(&kinds) {
        let w = if is_opportunity {
            (spec.signature_window / 2).max(1)
        } else {
            spec.signature_window
        };
        add_pattern(&mut values, &patterns.signatures[c], spec.signature_amplitude, t, t + w);
        if is_opportunity || rng.gen_bool(spec.cue_probability) {
            add_pattern(&mut values, &patterns.cues[c], spec.cue_amplitude, t - spec.cue_window, t);
        }
        if is_opportunity {
            opportunities.push(Action::new(c, t));
        } else {
            actions.push(Action::new(c, t));
        }
    }
    opportunities.sort_unstable_by_key(|a| (a.frame, a.class));
    let has_opportunities = !spec.opportunity_classes.is_empty() && spec.opportunity_rate > 0.0;
    let annotations = VideoAnnotations::new(
        video_id,
        spec.fps,
        spec.num_frames,
        actions,
        has_opportunities.then_some(opportunities),
    )?;
    let features = FeatureSequence::new(video_id, values.mapv(|v| v as f32))?;
    Video::new(annotations, features)
}

/// One video whose action count is drawn from the spec and whose classes
/// cycle from a random start.
pub fn generate_video<R: Rng>(spec: &SynthSpec, video_id: &str, rng: &mut R) -> Result<Video> {
    let patterns = Patterns::from_spec(spec);
    let [lo, hi] = spec.actions_per_video;
    let n = rng.gen_range(lo..=hi);
    let first = rng.gen_range(0..spec.num_classes);
    let classes: Vec<usize> = (0..n).map(|i| (first + i) % spec.num_classes).collect();
    generate_video_with_classes(spec, &patterns, video_id, &classes, rng)
}

/// Videos of one split. Classes are dealt round-robin over all actions of
/// the split, then shuffled, so every class gets an equal share (±1).
pub fn generate_split(spec: &SynthSpec, split: &str, count: usize) -> Result<Vec<Video>> {
    let patterns = Patterns::from_spec(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, split, u64::MAX));
    let [lo, hi] = spec.actions_per_video;
    let counts: Vec<usize> = (0..count).map(|_| rng.gen_range(lo..=hi)).collect();
    let total: usize = counts.iter().sum();
    let mut classes: Vec<usize> = (0..total).map(|i| i % spec.num_classes).collect();
    classes.shuffle(&mut rng);
    let mut at = 0;
    counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut video_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, split, i as u64));
            let id = format!("{split}_{i:03}");
            let v = generate_video_with_classes(spec, &patterns, &id, &classes[at..at + n], &mut video_rng);
            at += n;
            v
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub spec_hash: String,
    pub spec: SynthSpec,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// In-memory dataset for a spec: train, val and test videos.
pub fn generate_splits(spec: &SynthSpec) -> Result<[Vec<Video>; 3]> {
    spec.validate()?;
    Ok([
        generate_split(spec, SPLITS[0], spec.train_videos)?,
        generate_split(spec, SPLITS[1], spec.val_videos)?,
        generate_split(spec, SPLITS[2], spec.test_videos)?,
    ])
}

/// Writes `train/`, `val/`, `test/` and `manifest.json` under `root`.
pub fn generate_dataset(spec: &SynthSpec, root: &Path) -> Result<SynthManifest> {
    let splits = generate_splits(spec)?;
    let mut ids: Vec<Vec<String>> = Vec::new();
    for (name, videos) in SPLITS.iter().zip(&splits) {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for v in videos {
            v.save(&dir)?;
        }
        ids.push(videos.iter().map(|v| v.id().to_string()).collect());
    }
    let [train, val, test]: [Vec<String>; 3] = ids.try_into().expect("three splits");
    let manifest = SynthManifest {
        seed: spec.seed,
        spec_hash: spec.hash(),
        spec: spec.clone(),
        train,
        val,
        test,
    };
    let path = root.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
