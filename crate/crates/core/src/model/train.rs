use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, forward, predict_video, Adam, ModelParams, Scalar};
use crate::config::SpottingConfig;
use crate::domain::{sample_chunks, Chunk, Video};
use crate::error::{Error, Result};
use crate::eval::{average_map, EvalVideo};
use crate::seg_loss::{seg_loss_and_grad, Margins, SegScores};
use crate::spot_loss::{
    iterative_match, spotting_grad, spotting_loss, total_loss, yolo_encode, ActionMatrix, Matching,
    PredictionMatrix,
};
use crate::tse::{tse_window, TseMap};

/// Supervision of one chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkTarget {
    pub tse: TseMap,
    pub gt: ActionMatrix,
}

impl ChunkTarget {
    pub fn new(video: &Video, chunk: &Chunk, cfg: &SpottingConfig) -> Result<Self> {
        Ok(ChunkTarget {
            tse: tse_window(&video.annotations, cfg, chunk.origin.start, chunk.len())?,
            gt: yolo_encode(&chunk.actions, cfg.chunk_frames, cfg.num_classes)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub spotting: f64,
    pub segmentation: f64,
}

/// Loss of one chunk and its gradient with respect to every parameter.
pub fn chunk_loss_and_grad<T: Scalar>(
    params: &ModelParams<T>,
    features: ArrayView2<T>,
    target: &ChunkTarget,
    cfg: &SpottingConfig,
) -> Result<(LossBreakdown, ModelParams<T>)> {
    let trace = forward(features, params)?;
    let scores = SegScores::new(trace.seg_scores.clone())?;
    let (seg, mut d_seg) = seg_loss_and_grad(&scores, &target.tse, &cfg.slicing, Margins::from_config(cfg))?;
    let pred = PredictionMatrix::new(trace.predictions.clone())?;
    let matching = if cfg.use_matching {
        iterative_match(&target.gt.locations(), &pred.locations())?
    } else {
        Matching::identity(target.gt.len(), pred.len())?
    };
    let spot = spotting_loss(&target.gt, &pred, &matching, &cfg.alpha, cfg.beta)?;
    let d_pred = spotting_grad(&target.gt, &pred, &matching, &cfg.alpha, cfg.beta)?;
    d_seg *= cfg.lambda_seg;
    let grads = backward(&trace, d_seg.view(), d_pred.view(), params)?;
    let loss = LossBreakdown {
        total: total_loss(spot, seg, cfg.lambda_seg),
        spotting: spot,
        segmentation: seg,
    };
    Ok((loss, grads))
}

/// Loss only (finite-difference checks).
pub fn chunk_loss<T: Scalar>(
    params: &ModelParams<T>,
    features: ArrayView2<T>,
    target: &ChunkTarget,
    cfg: &SpottingConfig,
) -> Result<LossBreakdown> {
    Ok(chunk_loss_and_grad(params, features, target, cfg)?.0)
}

/// The matching the spotting loss would use for this chunk.
pub fn chunk_matching<T: Scalar>(
    params: &ModelParams<T>,
    features: ArrayView2<T>,
    target: &ChunkTarget,
    cfg: &SpottingConfig,
) -> Result<Matching> {
    let trace = forward(features, params)?;
    let pred = PredictionMatrix::new(trace.predictions)?;
    if cfg.use_matching {
        iterative_match(&target.gt.locations(), &pred.locations())
    } else {
        Matching::identity(target.gt.len(), pred.len())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Chunk-averaged losses over the epoch.
    pub loss: LossBreakdown,
    pub num_chunks: usize,
    /// Validation Average-mAP, `None` without a validation split.
    pub val_average_map: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the last epoch without validation).
    pub params: ModelParams<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Predicts every video and computes the pooled Average-mAP.
pub fn validation_average_map(videos: &[Video], params: &ModelParams<f32>, cfg: &SpottingConfig) -> Result<f64> {
    let eval = videos
        .iter()
        .map(|v| Ok(EvalVideo::new(&v.annotations, predict_video(&v.features, params, cfg)?.spots)))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_map(&eval, cfg.num_classes, cfg.fps, &cfg.metric).average_map)
}

/// [`train_with`] without a progress callback.
pub fn train(train_set: &[Video], val_set: &[Video], cfg: &SpottingConfig) -> Result<TrainOutcome> {
    train_with(train_set, val_set, cfg, |_| {})
}

/// Trains from `cfg.seed`: every epoch shuffles the videos, draws fresh
/// chunks for each, and takes one Adam step per video on the chunk-averaged
/// gradient. The learning rate decays linearly per epoch.
pub fn train_with(
    train_set: &[Video],
    val_set: &[Video],
    cfg: &SpottingConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("empty training split".into()));
    }
    for v in train_set.iter().chain(val_set) {
        v.annotations.check_classes(cfg.num_classes)?;
        if v.features.feature_dim() != cfg.model.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "{}: features have {} columns, config expects {}",
                v.id(),
                v.features.feature_dim(),
                cfg.model.feature_dim
            )));
        }
    }
    let mut params = ModelParams::<f32>::init(cfg, cfg.seed);
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c4a1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.optimizer.epochs);
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;

    for epoch in 0..cfg.optimizer.epochs {
        let lr = cfg.optimizer.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        let mut num_chunks = 0;
        for &vi in &order {
            let video = &train_set[vi];
            let chunks = sample_chunks(video, cfg, &mut rng);
            if chunks.is_empty() {
                continue;
            }
            let mut grads = params.zeros_like();
            for chunk in &chunks {
                let target = ChunkTarget::new(video, chunk, cfg)?;
                let (loss, g) = chunk_loss_and_grad(&params, chunk.features.view(), &target, cfg)?;
                if !loss.total.is_finite() {
                    return Err(Error::Divergence { epoch, loss: loss.total });
                }
                grads.add_scaled(&g, 1.0);
                sum.total += loss.total;
                sum.spotting += loss.spotting;
                sum.segmentation += loss.segmentation;
            }
            let scale = 1.0 / chunks.len() as f32;
            for t in grads.tensors_mut() {
                *t *= scale;
            }
            num_chunks += chunks.len();
            adam.step(&mut params, &grads, lr);
            if !params.is_finite() {
                return Err(Error::Divergence { epoch, loss: f64::NAN });
            }
        }
        let denom = num_chunks.max(1) as f64;
        let loss = LossBreakdown {
            total: sum.total / denom,
            spotting: sum.spotting / denom,
            segmentation: sum.segmentation / denom,
        };
        let val_average_map = if val_set.is_empty() {
            None
        } else {
            Some(validation_average_map(val_set, &params, cfg)?)
        };
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            loss,
            num_chunks,
            val_average_map,
        };
        on_epoch(&record);
        history.push(record);
        let score = val_average_map.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(s, _, _)| score >= *s) {
            best = Some((score, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
    })
}
