//! YOLO-like action encoding, iterative one-to-one matching and the spotting
//! loss.

use ndarray::Array2;

use crate::domain::Action;
use crate::error::{Error, Result};

/// Ground truth of a chunk, `N_GT x (2 + C)`: presence (always 1),
/// location `frame / N_F`, then the one-hot class. Rows are chronological.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionMatrix {
    pub rows: Array2<f64>,
}

impl ActionMatrix {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn locations(&self) -> Vec<f64> {
        self.rows.column(1).to_vec()
    }
}

/// Network spotting output, `N_pred x (2 + C)`: confidence, location, class
/// distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    pub rows: Array2<f64>,
}

impl PredictionMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.ncols() < 3 {
            return Err(Error::ShapeMismatch(format!("prediction rows have {} columns", rows.ncols())));
        }
        for (i, row) in rows.outer_iter().enumerate() {
            if !(0.0..=1.0).contains(&row[0]) || !(0.0..=1.0).contains(&row[1]) {
                return Err(Error::InvalidInput(format!(
                    "prediction {i}: confidence/location outside [0, 1]"
                )));
            }
            let total: f64 = row.iter().skip(2).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "prediction {i}: class distribution sums to {total}"
                )));
            }
        }
        Ok(PredictionMatrix { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn locations(&self) -> Vec<f64> {
        self.rows.column(1).to_vec()
    }
}

/// Encodes chunk actions given as `(class, offset)`.
pub fn yolo_encode(actions: &[Action], chunk_frames: usize, num_classes: usize) -> Result<ActionMatrix> {
    let mut sorted = actions.to_vec();
    sorted.sort_by_key(|a| (a.frame, a.class));
    let mut rows = Array2::zeros((sorted.len(), 2 + num_classes));
    for (i, a) in sorted.iter().enumerate() {
        if a.class >= num_classes {
            return Err(Error::InvalidInput(format!("class {} out of range", a.class)));
        }
        if a.frame >= chunk_frames {
            return Err(Error::FrameOutOfRange {
                field: format!("actions[{i}].frame"),
                frame: a.frame as i64,
                num_frames: chunk_frames,
            });
        }
        rows[[i, 0]] = 1.0;
        rows[[i, 1]] = a.frame as f64 / chunk_frames as f64;
        rows[[i, 2 + a.class]] = 1.0;
    }
    Ok(ActionMatrix { rows })
}

/// Pairing of every ground-truth row with a distinct prediction row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    /// `(gt_row, pred_row)`, sorted by ground-truth row.
    pub pairs: Vec<(usize, usize)>,
    /// Prediction rows left over, ascending.
    pub unmatched_pred_rows: Vec<usize>,
    /// Rounds the iterative procedure needed.
    pub iterations: usize,
}

impl Matching {
    /// Ground-truth row `i` paired with prediction row `i` (matching disabled).
    pub fn identity(n_gt: usize, n_pred: usize) -> Result<Self> {
        if n_gt > n_pred {
            return Err(Error::InvalidInput(format!(
                "{n_gt} ground truths but only {n_pred} predictions"
            )));
        }
        Ok(Matching {
            pairs: (0..n_gt).map(|i| (i, i)).collect(),
            unmatched_pred_rows: (n_gt..n_pred).collect(),
            iterations: 0,
        })
    }

    pub fn pred_for_gt(&self, gt: usize) -> Option<usize> {
        self.pairs.iter().find(|&&(g, _)| g == gt).map(|&(_, p)| p)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "gt_row,pred_row")?;
        for (g, p) in &self.pairs {
            writeln!(out, "{g},{p}")?;
        }
        for p in &self.unmatched_pred_rows {
            writeln!(out, ",{p}")?;
        }
        Ok(())
    }
}

/// Index of the element of `candidates` closest to `x`; ties go to the
/// lower index.
fn nearest(x: f64, candidates: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, y) in candidates {
        let d = (x - y).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Iterative one-to-one matching between ground-truth and predicted
/// locations.
///
/// Each round maps every remaining ground truth to its closest remaining
/// prediction. Each prediction chosen by at least one ground truth is then
/// paired with the closest of those ground truths, and both leave the pool.
/// Every round fixes at least one pair.
pub fn iterative_match(gt_locs: &[f64], pred_locs: &[f64]) -> Result<Matching> {
    if gt_locs.len() > pred_locs.len() {
        return Err(Error::InvalidInput(format!(
            "{} ground truths but only {} predictions",
            gt_locs.len(),
            pred_locs.len()
        )));
    }
    let mut gt_left = vec![true; gt_locs.len()];
    let mut pred_left = vec![true; pred_locs.len()];
    let mut remaining = gt_locs.len();
    let mut pairs = Vec::with_capacity(gt_locs.len());
    let mut iterations = 0;
    while remaining > 0 {
        iterations += 1;
        let choice: Vec<Option<usize>> = gt_locs
            .iter()
            .enumerate()
            .map(|(g, &y)| {
                if !gt_left[g] {
                    return None;
                }
                let preds = pred_locs
                    .iter()
                    .enumerate()
                    .filter(|&(p, _)| pred_left[p])
                    .map(|(p, &v)| (p, v));
                nearest(y, preds)
            })
            .collect();
        for p in 0..pred_locs.len() {
            if !pred_left[p] {
                continue;
            }
            let preimage = choice
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c == Some(p))
                .map(|(g, _)| (g, gt_locs[g]));
            if let Some(g) = nearest(pred_locs[p], preimage) {
                pairs.push((g, p));
                gt_left[g] = false;
                pred_left[p] = false;
                remaining -= 1;
            }
        }
    }
    pairs.sort_unstable();
    let unmatched_pred_rows = (0..pred_locs.len()).filter(|&p| pred_left[p]).collect();
    Ok(Matching {
        pairs,
        unmatched_pred_rows,
        iterations,
    })
}

fn check_shapes(y: &ActionMatrix, yhat: &PredictionMatrix, m: &Matching, alpha: &[f64]) -> Result<()> {
    if !y.is_empty() && y.rows.ncols() != yhat.rows.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "ground truth has {} columns, predictions {}",
            y.rows.ncols(),
            yhat.rows.ncols()
        )));
    }
    if alpha.len() != yhat.rows.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} columns",
            alpha.len(),
            yhat.rows.ncols()
        )));
    }
    if m.pairs.len() != y.len()
        || m.pairs.iter().enumerate().any(|(i, &(g, p))| g != i || p >= yhat.len())
        || m.unmatched_pred_rows.iter().any(|&p| p >= yhat.len())
    {
        return Err(Error::ShapeMismatch("matching does not cover the ground truth".into()));
    }
    Ok(())
}

/// Weighted squared error of matched rows plus `beta` times the squared
/// confidence of every unmatched prediction.
pub fn spotting_loss(
    y: &ActionMatrix,
    yhat: &PredictionMatrix,
    m: &Matching,
    alpha: &[f64],
    beta: f64,
) -> Result<f64> {
    check_shapes(y, yhat, m, alpha)?;
    let mut loss = 0.0;
    for &(g, p) in &m.pairs {
        for (j, &a) in alpha.iter().enumerate() {
            let d = y.rows[[g, j]] - yhat.rows[[p, j]];
            loss += a * d * d;
        }
    }
    for &p in &m.unmatched_pred_rows {
        let c = yhat.rows[[p, 0]];
        loss += beta * c * c;
    }
    Ok(loss)
}

/// Gradient of [`spotting_loss`] with respect to the prediction matrix; the
/// matching is held fixed.
pub fn spotting_grad(
    y: &ActionMatrix,
    yhat: &PredictionMatrix,
    m: &Matching,
    alpha: &[f64],
    beta: f64,
) -> Result<Array2<f64>> {
    check_shapes(y, yhat, m, alpha)?;
    let mut grad = Array2::zeros(yhat.rows.dim());
    for &(g, p) in &m.pairs {
        for (j, &a) in alpha.iter().enumerate() {
            grad[[p, j]] = -2.0 * a * (y.rows[[g, j]] - yhat.rows[[p, j]]);
        }
    }
    for &p in &m.unmatched_pred_rows {
        grad[[p, 0]] = 2.0 * beta * yhat.rows[[p, 0]];
    }
    Ok(grad)
}

/// `L_as + lambda_seg * L_seg`.
pub fn total_loss(spotting: f64, segmentation: f64, lambda_seg: f64) -> f64 {
    spotting + lambda_seg * segmentation
}
