//! Action spotting in long untrimmed videos from per-frame features, with a
//! loss that takes the temporal context around every action into account.

pub mod config;
pub mod domain;
pub mod eval;
pub mod highlights;
pub mod error;
pub mod model;
pub mod seg_loss;
pub mod spot_loss;
pub mod synth;
pub mod tse;

pub use config::{SlicingParams, SpottingConfig};
pub use domain::{Action, Chunk, Dataset, FeatureSequence, Video, VideoAnnotations};
pub use error::{Error, Result};
