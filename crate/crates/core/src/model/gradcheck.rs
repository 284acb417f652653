//! Central finite-difference checks of the analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{chunk_loss, chunk_loss_and_grad, forward, ChunkTarget, ModelParams};
use crate::config::{SlicingParams, SpottingConfig};
use crate::domain::{Action, Chunk, FeatureSequence, Video, VideoAnnotations};
use crate::error::{Error, Result};
use crate::seg_loss::{grad_point, loss_point_clamped, Margins};

/// Outcome of one finite-difference suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub suite: String,
    pub checked: usize,
    pub skipped: usize,
    pub worst_rel_err: f64,
    pub worst_at: String,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    fn new(suite: &str, tolerance: f64) -> Self {
        GradCheckReport {
            suite: suite.to_string(),
            checked: 0,
            skipped: 0,
            worst_rel_err: 0.0,
            worst_at: String::new(),
            tolerance,
            passed: true,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64, at: impl FnOnce() -> String) {
        self.checked += 1;
        let e = rel_err(analytic, numeric);
        if e > self.worst_rel_err || e.is_nan() {
            self.worst_rel_err = e;
            self.worst_at = format!("{}: analytic {analytic:e}, numeric {numeric:e}", at());
        }
        self.passed = self.worst_rel_err < self.tolerance;
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }
}

fn random_slicing<R: Rng>(rng: &mut R) -> SlicingParams {
    let k1 = rng.gen_range(-120..=-2);
    let k2 = rng.gen_range(k1 + 1..=-1);
    let k3 = rng.gen_range(1..=150);
    let k4 = rng.gen_range(k3 + 1..=200);
    SlicingParams { k1, k2, k3, k4 }
}

/// `grad_point` against central differences at `samples` random points.
///
/// Scores are drawn from `[1e-3, 1 - 1e-3]`. Points within `1e-4` of a margin
/// kink are not differentiable there and are redrawn.
pub fn check_point_gradients(samples: usize, seed: u64) -> Result<GradCheckReport> {
    let h = 1e-6;
    let mut report = GradCheckReport::new("grad_point", 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while report.checked < samples {
        let k = random_slicing(&mut rng);
        let margins = if rng.gen_bool(0.5) {
            Margins::new(rng.gen_range(0.5..=1.0), rng.gen_range(0.0..0.5))
        } else {
            Margins::none()
        };
        let s = rng.gen_range(k.k1 - 30..k.k4 + 30);
        let p = rng.gen_range(1e-3..1.0 - 1e-3);
        let at = |q: f64| loss_point_clamped(q, s, &k, margins);
        let (lo, mid, hi) = (at(p - 1e-4)?, at(p)?, at(p + 1e-4)?);
        let smooth = (lo > 0.0) == (hi > 0.0) && (mid > 0.0) == (hi > 0.0);
        if !smooth {
            report.skipped += 1;
            continue;
        }
        let numeric = (at(p + h)? - at(p - h)?) / (2.0 * h);
        let analytic = grad_point(p, s, &k, margins)?;
        report.record(analytic, numeric, || format!("p={p}, s={s}, K={k:?}, margins={margins:?}"));
    }
    Ok(report)
}

/// The tiny model on one chunk in `f64`, from `seed`.
pub fn tiny_case(seed: u64) -> Result<(SpottingConfig, Array2<f64>, ChunkTarget, ModelParams<f64>)> {
    let cfg = SpottingConfig::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_simple_fn((20, 4), || rng.gen_range(-1.0f32..1.0));
    let ann = VideoAnnotations::new("g", 2.0, 20, vec![Action::new(0, 9), Action::new(1, 12)], None)?;
    let video = Video::new(ann, FeatureSequence::new("g", values)?)?;
    let chunk = Chunk::extract(&video, 6, 8);
    let target = ChunkTarget::new(&video, &chunk, &cfg)?;
    let params = ModelParams::<f32>::init(&cfg, seed).cast::<f64>();
    Ok((cfg, chunk.features.mapv(f64::from), target, params))
}

/// Every parameter of the tiny model against central differences of the
/// total chunk loss, for each seed.
///
/// A seed whose predicted locations tie sits on a matching switch, where the
/// loss has no derivative; it is rejected.
pub fn check_model_gradients(seeds: &[u64]) -> Result<GradCheckReport> {
    let h = 1e-4;
    let mut report = GradCheckReport::new("model", 1e-3);
    for &seed in seeds {
        let (cfg, x, target, params) = tiny_case(seed)?;
        let locs = forward(x.view(), &params)?.predictions.column(1).to_vec();
        if locs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("seed {seed}: tied predicted locations")));
        }
        let (_, grads) = chunk_loss_and_grad(&params, x.view(), &target, &cfg)?;
        let names = params.names();
        for (ti, (name, g)) in names.iter().zip(grads.tensors()).enumerate() {
            for (k, &analytic) in g.iter().enumerate() {
                let mut p = params.clone();
                p.tensors_mut()[ti].as_slice_mut().expect("contiguous")[k] += h;
                let up = chunk_loss(&p, x.view(), &target, &cfg)?.total;
                p.tensors_mut()[ti].as_slice_mut().expect("contiguous")[k] -= 2.0 * h;
                let down = chunk_loss(&p, x.view(), &target, &cfg)?.total;
                report.record(analytic, (up - down) / (2.0 * h), || format!("seed {seed} {name}[{k}]"));
            }
        }
    }
    Ok(report)
}
