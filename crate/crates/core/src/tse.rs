//! Time-shift encoding: for every frame and class, the signed frame offset to
//! the past or future action of that class with the dominant influence.

use std::io::Write;

use ndarray::Array2;

use crate::config::{SlicingParams, SpottingConfig};
use crate::domain::VideoAnnotations;
use crate::error::{Error, Result};

/// `values[[i, c]]` is the time shift of frame `i` for class `c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TseMap {
    pub values: Array2<i64>,
    /// Action frames per class used to build the map.
    pub action_frames: Vec<Vec<i64>>,
}

impl TseMap {
    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }

    /// CSV with header `frame_index,s_class_0,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "frame_index")?;
        for c in 0..self.num_classes() {
            write!(out, ",s_class_{c}")?;
        }
        writeln!(out)?;
        for (i, row) in self.values.outer_iter().enumerate() {
            write!(out, "{i}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Selects the time shift of `frame` given its closest past action
/// (`past <= frame`) and closest future action (`future > frame`).
///
/// The past shift is kept when the frame is just after the past action, or
/// in the transition zone after it while the future action is still far, or
/// when it is relatively closer to the just-after region than to the
/// just-before region of the future action (strict comparison, evaluated by
/// cross-multiplication). Otherwise the future shift wins. With no action
/// at all the result is `K1`.
pub fn tse_frame(
    frame: i64,
    past: Option<i64>,
    future: Option<i64>,
    k: &SlicingParams,
) -> Result<i64> {
    k.validate()?;
    if let Some(p) = past {
        if p > frame {
            return Err(Error::InvalidInput(format!(
                "past action {p} lies after frame {frame}"
            )));
        }
    }
    if let Some(f) = future {
        if f <= frame {
            return Err(Error::InvalidInput(format!(
                "future action {f} does not lie after frame {frame}"
            )));
        }
    }
    Ok(select_shift(frame, past, future, k))
}

fn select_shift(frame: i64, past: Option<i64>, future: Option<i64>, k: &SlicingParams) -> i64 {
    match (past, future) {
        (None, None) => k.k1,
        (Some(p), None) => frame - p,
        (None, Some(f)) => frame - f,
        (Some(p), Some(f)) => {
            let sp = frame - p;
            let sf = frame - f;
            if sp < k.k3 {
                sp
            } else if sp < k.k4 {
                if sf <= k.k1 {
                    sp
                } else {
                    // (sp - K3) / (K4 - K3) < (K2 - sf) / (K2 - K1), both denominators > 0
                    let lhs = (sp - k.k3) as i128 * (k.k2 - k.k1) as i128;
                    let rhs = (k.k2 - sf) as i128 * (k.k4 - k.k3) as i128;
                    if lhs < rhs {
                        sp
                    } else {
                        sf
                    }
                }
            } else {
                sf
            }
        }
    }
}

/// Encodes frames `start .. start + len` of a video. Positions outside the
/// video (chunk padding) are encoded relative to the video's actions as well.
pub fn tse_window(
    annotations: &VideoAnnotations,
    cfg: &SpottingConfig,
    start: i64,
    len: usize,
) -> Result<TseMap> {
    let num_classes = cfg.num_classes;
    annotations.check_classes(num_classes)?;
    let action_frames: Vec<Vec<i64>> = (0..num_classes)
        .map(|c| annotations.class_frames(c).into_iter().map(|f| f as i64).collect())
        .collect();
    let mut values = Array2::zeros((len, num_classes));
    for (c, frames) in action_frames.iter().enumerate() {
        let k = &cfg.slicing[c];
        k.validate()?;
        // index of the first action strictly after the current position
        let mut next = frames.partition_point(|&f| f <= start);
        for i in 0..len {
            let x = start + i as i64;
            while next < frames.len() && frames[next] <= x {
                next += 1;
            }
            let past = next.checked_sub(1).map(|j| frames[j]);
            let future = frames.get(next).copied();
            values[[i, c]] = select_shift(x, past, future, k);
        }
    }
    Ok(TseMap {
        values,
        action_frames,
    })
}

/// Encodes every frame of the video.
pub fn tse_video(annotations: &VideoAnnotations, cfg: &SpottingConfig) -> Result<TseMap> {
    tse_window(annotations, cfg, 0, annotations.num_frames)
}
