//! Hyperparameters for encoding, losses, the network, training and evaluation.
//!
//! Every field has a default matching a soccer broadcast setup
//! (2 fps, three classes: goal, card, substitution). Config files are JSON;
//! omitted fields keep their default.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Per-class context slicing parameters, in frames.
///
/// Delimits the far-before / just-before / just-after / far-after zones and
/// the two transition zones around an action. Valid tuples satisfy
/// `k1 < k2 < 0 < k3 < k4`; the single degenerate tuple `(-1, -1, 1, 1)` is
/// also accepted and encodes raw binary targets (no slicing).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[i64; 4]")]
pub struct SlicingParams {
    pub k1: i64,
    pub k2: i64,
    pub k3: i64,
    pub k4: i64,
}

impl SlicingParams {
    pub const GOAL: SlicingParams = SlicingParams { k1: -40, k2: -20, k3: 120, k4: 180 };
    pub const CARD: SlicingParams = SlicingParams { k1: -40, k2: -20, k3: 20, k4: 40 };
    pub const SUBSTITUTION: SlicingParams = SlicingParams { k1: -80, k2: -40, k3: 20, k4: 40 };

    pub fn new(k1: i64, k2: i64, k3: i64, k4: i64) -> Result<Self> {
        let k = SlicingParams { k1, k2, k3, k4 };
        k.validate()?;
        Ok(k)
    }

    /// Slicing removed: every frame but the action frame is background.
    pub fn binary() -> Self {
        SlicingParams { k1: -1, k2: -1, k3: 1, k4: 1 }
    }

    /// Converts a tuple given in seconds to frames (rounded to nearest).
    pub fn from_seconds(seconds: [f64; 4], fps: f64) -> Result<Self> {
        let to_frames = |s: f64| (s * fps).round() as i64;
        Self::new(
            to_frames(seconds[0]),
            to_frames(seconds[1]),
            to_frames(seconds[2]),
            to_frames(seconds[3]),
        )
    }

    pub fn is_binary(&self) -> bool {
        *self == Self::binary()
    }

    pub fn validate(&self) -> Result<()> {
        let SlicingParams { k1, k2, k3, k4 } = *self;
        if (k1 < k2 && k2 < 0 && 0 < k3 && k3 < k4) || self.is_binary() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "slicing ({k1}, {k2}, {k3}, {k4}) violates K1 < K2 < 0 < K3 < K4"
            )))
        }
    }
}

impl TryFrom<[i64; 4]> for SlicingParams {
    type Error = Error;

    fn try_from(k: [i64; 4]) -> Result<Self> {
        SlicingParams::new(k[0], k[1], k[2], k[3])
    }
}

impl From<SlicingParams> for [i64; 4] {
    fn from(k: SlicingParams) -> Self {
        [k.k1, k.k2, k.k3, k.k4]
    }
}

impl fmt::Display for SlicingParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.k1, self.k2, self.k3, self.k4)
    }
}

/// How a prediction's offset is compared with the tolerance `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceWindow {
    /// Positive when within `delta / 2` seconds of the ground truth.
    HalfDelta,
    /// Positive when within `delta` seconds of the ground truth.
    FullDelta,
}

impl ToleranceWindow {
    pub fn half_width(self, delta: f64) -> f64 {
        match self {
            ToleranceWindow::HalfDelta => delta / 2.0,
            ToleranceWindow::FullDelta => delta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    AllPoint,
    ElevenPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Input feature dimension D.
    pub feature_dim: usize,
    pub mlp_hidden: usize,
    pub mlp_out: usize,
    /// Output channels of the four pyramid branches (kernel widths r/7, r/3, r/2, r).
    pub pyramid_channels: [usize; 4],
    /// Output channels of the two spotting-head convolutions.
    pub spot_channels: [usize; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 16,
            mlp_hidden: 32,
            mlp_out: 16,
            pyramid_channels: [4, 8, 16, 32],
            spot_channels: [32, 16],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr_initial: 1e-3,
            lr_final: 1e-6,
            epochs: 300,
        }
    }
}

impl OptimizerConfig {
    /// Learning rate for `epoch`, linear from `lr_initial` to `lr_final`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_initial;
        }
        let t = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        self.lr_initial + (self.lr_final - self.lr_initial) * t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Tolerance grid, seconds, ascending.
    pub tolerances: Vec<f64>,
    pub window: ToleranceWindow,
    pub interpolation: ApInterpolation,
    pub game_time_bin_minutes: f64,
    /// Upper edges (seconds) of the vicinity bins; one extra open bin follows.
    pub vicinity_edges: Vec<f64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            tolerances: (1..=12).map(|i| 5.0 * i as f64).collect(),
            window: ToleranceWindow::HalfDelta,
            interpolation: ApInterpolation::AllPoint,
            game_time_bin_minutes: 5.0,
            vicinity_edges: (1..=6).map(|i| 10.0 * i as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub conf_threshold: f64,
    pub dedup_seconds: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            conf_threshold: 0.5,
            dedup_seconds: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighlightsConfig {
    pub goal_class: usize,
    /// Classes whose spots open a clip. Substitutions are left out.
    pub clip_classes: Vec<usize>,
    pub before_seconds: f64,
    pub after_seconds: f64,
    pub segment_threshold: f64,
    /// Runs closer than this many frames to an annotated action are dropped.
    pub exclusion_frames: usize,
    /// Runs separated by fewer than this many frames are merged.
    pub merge_gap_frames: usize,
    /// Frames before/after a planted opportunity counted as its window.
    pub opportunity_window: [usize; 2],
    pub eta_grid: Vec<f64>,
}

impl Default for HighlightsConfig {
    fn default() -> Self {
        HighlightsConfig {
            goal_class: 0,
            clip_classes: vec![0, 1],
            before_seconds: 15.0,
            after_seconds: 20.0,
            segment_threshold: 0.5,
            exclusion_frames: 10,
            merge_gap_frames: 5,
            opportunity_window: [10, 20],
            eta_grid: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default = "SpottingConfig::unresolved", deny_unknown_fields)]
pub struct SpottingConfig {
    pub num_classes: usize,
    pub chunk_frames: usize,
    pub fps: f64,
    pub num_predictions: usize,
    /// Per-class slicing in frames. Left empty in a file, it is filled from
    /// `slicing_seconds` or from the goal/card/substitution defaults.
    pub slicing: Vec<SlicingParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slicing_seconds: Option<Vec<[f64; 4]>>,
    pub margin_max: f64,
    pub margin_min: f64,
    /// Per-column weights of the spotting loss, length 2 + C.
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub lambda_seg: f64,
    /// Pair predictions to ground truth with the iterative matching. When
    /// false, ground-truth row i is paired with prediction row i.
    pub use_matching: bool,
    pub class_features: usize,
    pub receptive_field: usize,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub metric: MetricConfig,
    pub inference: InferenceConfig,
    pub highlights: HighlightsConfig,
    pub seed: u64,
}

impl Default for SpottingConfig {
    fn default() -> Self {
        let mut cfg = Self::unresolved();
        cfg.fill_defaults().expect("default config resolves");
        cfg
    }
}

impl SpottingConfig {
    /// Defaults with per-class vectors left empty, for deserialization.
    fn unresolved() -> Self {
        SpottingConfig {
            num_classes: 3,
            chunk_frames: 240,
            fps: 2.0,
            num_predictions: 5,
            slicing: Vec::new(),
            slicing_seconds: None,
            margin_max: 0.9,
            margin_min: 0.1,
            alpha: Vec::new(),
            beta: 0.5,
            lambda_seg: 1.5,
            use_matching: true,
            class_features: 16,
            receptive_field: 80,
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            metric: MetricConfig::default(),
            inference: InferenceConfig::default(),
            highlights: HighlightsConfig::default(),
            seed: 42,
        }
    }

    /// A configuration small enough for exhaustive finite-difference checks.
    pub fn tiny() -> Self {
        let mut cfg = SpottingConfig {
            num_classes: 2,
            chunk_frames: 8,
            num_predictions: 2,
            slicing: vec![
                SlicingParams { k1: -4, k2: -2, k3: 2, k4: 4 },
                SlicingParams { k1: -3, k2: -1, k3: 1, k4: 3 },
            ],
            alpha: Vec::new(),
            class_features: 4,
            receptive_field: 8,
            model: ModelConfig {
                feature_dim: 4,
                mlp_hidden: 6,
                mlp_out: 4,
                pyramid_channels: [1, 2, 2, 3],
                spot_channels: [3, 2],
            },
            ..Default::default()
        };
        cfg.fill_defaults().expect("tiny config resolves");
        cfg
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: SpottingConfig =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        // slicing given explicitly always wins over the seconds convenience
        cfg.fill_defaults()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Fills the per-class vectors left empty: slicing (from seconds when
    /// given, else the goal/card/substitution tuples cycled) and the spotting
    /// weights, and drops highlight clip classes beyond `num_classes`.
    pub fn fill_defaults(&mut self) -> Result<()> {
        if self.slicing.is_empty() {
            if let Some(seconds) = &self.slicing_seconds {
                self.slicing = seconds
                    .iter()
                    .map(|s| SlicingParams::from_seconds(*s, self.fps))
                    .collect::<Result<_>>()?;
            } else {
                let tuples = [SlicingParams::GOAL, SlicingParams::CARD, SlicingParams::SUBSTITUTION];
                self.slicing = (0..self.num_classes).map(|c| tuples[c % 3]).collect();
            }
        }
        let n = self.num_classes;
        self.highlights.clip_classes.retain(|&c| c < n);
        if self.alpha.is_empty() {
            self.alpha = vec![1.0; 2 + self.num_classes];
            self.alpha[1] = 5.0;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes == 0 {
            return bad("num_classes must be positive".into());
        }
        if self.chunk_frames == 0 || self.num_predictions == 0 {
            return bad("chunk_frames and num_predictions must be positive".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.slicing.len() != self.num_classes {
            return bad(format!(
                "slicing has {} entries for {} classes",
                self.slicing.len(),
                self.num_classes
            ));
        }
        for k in &self.slicing {
            k.validate()?;
        }
        if !(self.margin_max > 0.0 && self.margin_max <= 1.0) {
            return bad(format!("margin_max must lie in (0, 1], got {}", self.margin_max));
        }
        if !(self.margin_min >= 0.0 && self.margin_min < 1.0) {
            return bad(format!("margin_min must lie in [0, 1), got {}", self.margin_min));
        }
        if self.margin_min >= self.margin_max {
            return bad("margin_min must be below margin_max".into());
        }
        if self.alpha.len() != 2 + self.num_classes {
            return bad(format!("alpha needs {} entries", 2 + self.num_classes));
        }
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        if !self.alpha.iter().all(|&a| non_negative(a)) {
            return bad("alpha entries must be non-negative".into());
        }
        if !non_negative(self.beta) || !non_negative(self.lambda_seg) {
            return bad("beta and lambda_seg must be non-negative".into());
        }
        if self.class_features == 0 || self.receptive_field == 0 {
            return bad("class_features and receptive_field must be positive".into());
        }
        let m = &self.model;
        if m.feature_dim == 0
            || m.mlp_hidden == 0
            || m.mlp_out == 0
            || m.pyramid_channels.contains(&0)
            || m.spot_channels.contains(&0)
        {
            return bad("model sizes must be positive".into());
        }
        let o = &self.optimizer;
        if !(o.lr_initial > 0.0 && o.lr_final > 0.0) || o.epochs == 0 {
            return bad("learning rates and epochs must be positive".into());
        }
        let t = &self.metric.tolerances;
        if t.is_empty() || t[0] <= 0.0 || t.windows(2).any(|w| w[0] >= w[1]) {
            return bad("tolerances must be non-empty, positive and ascending".into());
        }
        if self.metric.game_time_bin_minutes <= 0.0 {
            return bad("game_time_bin_minutes must be positive".into());
        }
        if self.metric.vicinity_edges.windows(2).any(|w| w[0] >= w[1]) {
            return bad("vicinity_edges must be ascending".into());
        }
        if !(0.0..=1.0).contains(&self.inference.conf_threshold) || self.inference.dedup_seconds < 0.0
        {
            return bad("conf_threshold must lie in [0, 1] and dedup_seconds be non-negative".into());
        }
        if self.highlights.goal_class >= self.num_classes
            || self.highlights.clip_classes.iter().any(|&c| c >= self.num_classes)
        {
            return bad("highlight classes out of range".into());
        }
        Ok(())
    }

    /// Temporal kernel widths of the four pyramid branches.
    pub fn pyramid_kernels(&self) -> [usize; 4] {
        let r = self.receptive_field;
        [(r / 7).max(1), (r / 3).max(1), (r / 2).max(1), r]
    }

    pub fn seconds_to_frames(&self, seconds: f64) -> f64 {
        seconds * self.fps
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
