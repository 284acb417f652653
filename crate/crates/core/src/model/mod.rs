//! The trainable spotting network, its optimizer, training loop, inference
//! and checkpoint format.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod infer;
mod layers;
mod network;
mod params;
mod train;

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use infer::{dedup_spots, predict_video};
pub use network::{backward, forward, seg_score_head, ForwardTrace, NORM_EPS};
pub use params::{Affine, Layout, ModelParams};
pub use train::{
    chunk_loss, chunk_loss_and_grad, chunk_matching, train, train_with, validation_average_map, ChunkTarget, EpochRecord,
    LossBreakdown, TrainOutcome,
};

/// Floating-point element type of the network: `f32` for training, `f64`
/// for gradient checks.
pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn cast(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn cast(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn cast(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}
