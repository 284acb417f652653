//! Annotations, frame features, videos and training chunks.

mod annotations;
mod chunks;
mod features;
mod spots;

use std::path::{Path, PathBuf};

pub use annotations::{load_annotations, Action, VideoAnnotations};
pub use chunks::{sample_chunks, Chunk, ChunkOrigin};
pub use features::{load_features, sidecar_path, FeatureMeta, FeatureSequence};
pub use spots::{Spot, VideoPrediction};

use crate::error::{Error, Result};

pub const LABELS_SUFFIX: &str = ".labels.json";
pub const FEATURES_SUFFIX: &str = ".features.bin";

/// Annotations and features of one video, checked for agreement.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub annotations: VideoAnnotations,
    pub features: FeatureSequence,
}

impl Video {
    pub fn new(annotations: VideoAnnotations, features: FeatureSequence) -> Result<Self> {
        if annotations.num_frames != features.num_frames() {
            return Err(Error::ShapeMismatch(format!(
                "{}: annotations cover {} frames, features {}",
                annotations.video_id,
                annotations.num_frames,
                features.num_frames()
            )));
        }
        Ok(Video {
            annotations,
            features,
        })
    }

    pub fn id(&self) -> &str {
        &self.annotations.video_id
    }

    pub fn num_frames(&self) -> usize {
        self.annotations.num_frames
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let id = self.id();
        self.annotations.save(&dir.join(format!("{id}{LABELS_SUFFIX}")))?;
        self.features.save(&dir.join(format!("{id}{FEATURES_SUFFIX}")))
    }
}

/// Loads every `<id>.labels.json` / `<id>.features.bin` pair in `dir`,
/// ordered by video id.
pub fn load_split(dir: &Path) -> Result<Vec<Video>> {
    let mut labels: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(LABELS_SUFFIX))
        .collect();
    labels.sort();
    labels
        .iter()
        .map(|path| {
            let annotations = load_annotations(path)?;
            let name = path.file_name().unwrap().to_string_lossy();
            let stem = name.trim_end_matches(LABELS_SUFFIX);
            let features = load_features(&dir.join(format!("{stem}{FEATURES_SUFFIX}")))?;
            Video::new(annotations, features)
        })
        .collect()
}

/// Train / validation / test videos.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Video>,
    pub val: Vec<Video>,
    pub test: Vec<Video>,
}

impl Dataset {
    /// Reads `train/`, `val/` and `test/` under `root`. Missing splits are empty.
    pub fn load(root: &Path) -> Result<Self> {
        let split = |name: &str| {
            let dir = root.join(name);
            if dir.is_dir() {
                load_split(&dir)
            } else {
                Ok(Vec::new())
            }
        };
        Ok(Dataset {
            train: split("train")?,
            val: split("val")?,
            test: split("test")?,
        })
    }
}
