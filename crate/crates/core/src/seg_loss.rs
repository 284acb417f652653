//! Context-aware temporal segmentation loss.
//!
//! The per-entry loss `L(p, s)` depends on the segmentation score `p` and the
//! time shift `s` through six pieces delimited by the slicing parameters;
//! the margins then zero it out once a score is good enough. All arithmetic
//! is `f64`.

use ndarray::Array2;

use crate::config::{SlicingParams, SpottingConfig};
use crate::error::{Error, Result};
use crate::tse::TseMap;

/// Lower bound applied to every log argument, keeping `-ln(0)` finite.
pub const LOG_GUARD: f64 = 1e-7;

/// Score margins: `max` for the just-after zone, `min` elsewhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margins {
    pub max: f64,
    pub min: f64,
}

impl Margins {
    pub fn new(max: f64, min: f64) -> Self {
        Margins { max, min }
    }

    pub fn from_config(cfg: &SpottingConfig) -> Self {
        Margins::new(cfg.margin_max, cfg.margin_min)
    }

    /// Margins removed (`tau_max = 1`, `tau_min = 0`).
    pub fn none() -> Self {
        Margins::new(1.0, 0.0)
    }

    fn offset(&self, s: i64, k: &SlicingParams) -> f64 {
        if s >= 0 && s < k.k3 {
            self.max.ln()
        } else {
            (1.0 - self.min).ln()
        }
    }
}

/// The active piece at shift `s`, as `-ln(a + b p)`; `None` for the zero piece.
#[derive(Clone, Copy, Debug, PartialEq)]
struct LogPiece {
    a: f64,
    b: f64,
}

fn piece(s: i64, k: &SlicingParams) -> Option<LogPiece> {
    let SlicingParams { k1, k2, k3, k4 } = *k;
    let (sf, k1f, k2f, k3f, k4f) = (s as f64, k1 as f64, k2 as f64, k3 as f64, k4 as f64);
    if s <= k1 || s >= k4 {
        Some(LogPiece { a: 1.0, b: -1.0 })
    } else if s <= k2 {
        Some(LogPiece { a: 1.0, b: -(k2f - sf) / (k2f - k1f) })
    } else if s < 0 {
        None
    } else if s < k3 {
        Some(LogPiece { a: sf / k3f, b: (k3f - sf) / k3f })
    } else {
        Some(LogPiece { a: 1.0, b: -(sf - k3f) / (k4f - k3f) })
    }
}

fn check(p: f64, k: &SlicingParams) -> Result<()> {
    k.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("segmentation score {p} outside [0, 1]")));
    }
    Ok(())
}

fn raw_loss(p: f64, s: i64, k: &SlicingParams) -> f64 {
    match piece(s, k) {
        None => 0.0,
        Some(LogPiece { a, b }) => -(a + b * p).max(LOG_GUARD).ln(),
    }
}

fn raw_grad(p: f64, s: i64, k: &SlicingParams) -> f64 {
    match piece(s, k) {
        None => 0.0,
        Some(LogPiece { a, b }) => {
            let arg = a + b * p;
            if arg <= LOG_GUARD {
                0.0
            } else {
                -b / arg
            }
        }
    }
}

/// Unclamped loss `L(p, s)`.
pub fn loss_point(p: f64, s: i64, k: &SlicingParams) -> Result<f64> {
    check(p, k)?;
    Ok(raw_loss(p, s, k))
}

/// Loss with margins applied: `max(0, L + ln(tau_max))` for `0 <= s < K3`,
/// `max(0, L + ln(1 - tau_min))` otherwise.
pub fn loss_point_clamped(p: f64, s: i64, k: &SlicingParams, margins: Margins) -> Result<f64> {
    check(p, k)?;
    Ok(clamped(p, s, k, margins))
}

/// `dL~/dp`; zero wherever the margin clamp is active (boundary included).
pub fn grad_point(p: f64, s: i64, k: &SlicingParams, margins: Margins) -> Result<f64> {
    check(p, k)?;
    Ok(clamped_grad(p, s, k, margins))
}

fn clamped(p: f64, s: i64, k: &SlicingParams, margins: Margins) -> f64 {
    (raw_loss(p, s, k) + margins.offset(s, k)).max(0.0)
}

fn clamped_grad(p: f64, s: i64, k: &SlicingParams, margins: Margins) -> f64 {
    if raw_loss(p, s, k) + margins.offset(s, k) <= 0.0 {
        0.0
    } else {
        raw_grad(p, s, k)
    }
}

/// Segmentation scores of a chunk, `N_F x C`, every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegScores {
    pub values: Array2<f64>,
}

impl SegScores {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("segmentation score {v} outside [0, 1]")));
        }
        Ok(SegScores { values })
    }
}

/// Mean clamped loss over every (frame, class) entry of a chunk.
pub fn seg_loss_chunk(
    scores: &SegScores,
    tse: &TseMap,
    slicing: &[SlicingParams],
    margins: Margins,
) -> Result<f64> {
    Ok(seg_loss_and_grad(scores, tse, slicing, margins)?.0)
}

/// Chunk loss and its gradient with respect to every score.
pub fn seg_loss_and_grad(
    scores: &SegScores,
    tse: &TseMap,
    slicing: &[SlicingParams],
    margins: Margins,
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = scores.values.dim();
    if tse.values.dim() != (n, c) || slicing.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "scores {n}x{c}, time shifts {:?}, {} slicing tuples",
            tse.values.dim(),
            slicing.len()
        )));
    }
    for k in slicing {
        k.validate()?;
    }
    let scale = 1.0 / (n * c) as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros((n, c));
    for i in 0..n {
        for (j, k) in slicing.iter().enumerate() {
            let p = scores.values[[i, j]];
            let s = tse.values[[i, j]];
            total += clamped(p, s, k, margins);
            grad[[i, j]] = scale * clamped_grad(p, s, k, margins);
        }
    }
    Ok((total * scale, grad))
}
