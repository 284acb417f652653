use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A predicted action: class, absolute frame and confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spot {
    pub class: usize,
    pub frame: usize,
    pub confidence: f64,
}

impl Spot {
    pub fn new(class: usize, frame: usize, confidence: f64) -> Self {
        Spot {
            class,
            frame,
            confidence,
        }
    }
}

/// Model output for one video: spots and one segmentation curve per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoPrediction {
    pub video_id: String,
    pub fps: f64,
    pub num_frames: usize,
    pub spots: Vec<Spot>,
    /// `segmentation[c][t]`, the score of class `c` at frame `t`.
    pub segmentation: Vec<Vec<f64>>,
}

impl VideoPrediction {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("prediction serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let pred: VideoPrediction = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if let Some(s) = pred.spots.iter().find(|s| s.frame >= pred.num_frames) {
            return Err(Error::FrameOutOfRange {
                field: "spots[].frame".into(),
                frame: s.frame as i64,
                num_frames: pred.num_frames,
            });
        }
        if pred.segmentation.iter().any(|c| c.len() != pred.num_frames) {
            return Err(Error::ShapeMismatch(format!(
                "{}: segmentation curves must have {} frames",
                pred.video_id, pred.num_frames
            )));
        }
        Ok(pred)
    }
}
