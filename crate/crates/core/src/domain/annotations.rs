use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One annotated (or planted) event: a class index and a single frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub class: usize,
    pub frame: usize,
}

impl Action {
    pub fn new(class: usize, frame: usize) -> Self {
        Action { class, frame }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoAnnotations {
    pub video_id: String,
    pub fps: f64,
    pub num_frames: usize,
    pub actions: Vec<Action>,
    /// Unannotated events, only present in synthetic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opportunities: Option<Vec<Action>>,
}

impl VideoAnnotations {
    /// Builds a record, sorting actions and checking every invariant.
    pub fn new(
        video_id: impl Into<String>,
        fps: f64,
        num_frames: usize,
        actions: Vec<Action>,
        opportunities: Option<Vec<Action>>,
    ) -> Result<Self> {
        let mut ann = VideoAnnotations {
            video_id: video_id.into(),
            fps,
            num_frames,
            actions,
            opportunities,
        };
        ann.normalize()?;
        Ok(ann)
    }

    fn normalize(&mut self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {}", self.fps)));
        }
        check_frames("actions", &self.actions, self.num_frames)?;
        if let Some(opps) = &self.opportunities {
            check_frames("opportunities", opps, self.num_frames)?;
        }
        self.actions.sort_by_key(|a| (a.frame, a.class));
        if let Some(opps) = &mut self.opportunities {
            opps.sort_by_key(|a| (a.frame, a.class));
        }
        let mut seen = HashSet::new();
        for a in &self.actions {
            if !seen.insert(*a) {
                return Err(Error::InvalidInput(format!(
                    "{}: two actions of class {} at frame {}",
                    self.video_id, a.class, a.frame
                )));
            }
        }
        Ok(())
    }

    /// Rejects class indices outside `0..num_classes`.
    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        let all = self.actions.iter().chain(self.opportunities.iter().flatten());
        match all.into_iter().find(|a| a.class >= num_classes) {
            Some(a) => Err(Error::InvalidInput(format!(
                "{}: class {} out of range for {} classes",
                self.video_id, a.class, num_classes
            ))),
            None => Ok(()),
        }
    }

    /// Frames of the actions of `class`, ascending.
    pub fn class_frames(&self, class: usize) -> Vec<usize> {
        self.actions
            .iter()
            .filter(|a| a.class == class)
            .map(|a| a.frame)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("annotations serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn check_frames(field: &str, actions: &[Action], num_frames: usize) -> Result<()> {
    for (i, a) in actions.iter().enumerate() {
        if a.frame >= num_frames {
            return Err(Error::FrameOutOfRange {
                field: format!("{field}[{i}].frame"),
                frame: a.frame as i64,
                num_frames,
            });
        }
    }
    Ok(())
}

/// Reads an annotation file; actions come back sorted by frame.
pub fn load_annotations(path: &Path) -> Result<VideoAnnotations> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut ann: VideoAnnotations =
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    ann.normalize()?;
    Ok(ann)
}
