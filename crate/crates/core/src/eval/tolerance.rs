use crate::config::ToleranceWindow;
use crate::domain::{Action, Spot};

/// A prediction after tolerance matching.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledPrediction {
    /// Position in the input prediction list.
    pub index: usize,
    pub class: usize,
    pub confidence: f64,
    /// Ground-truth row claimed by this prediction, `None` for a false positive.
    pub gt: Option<usize>,
}

impl LabeledPrediction {
    pub fn is_tp(&self) -> bool {
        self.gt.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToleranceMatch {
    /// Predictions by descending confidence (stable on ties).
    pub labeled: Vec<LabeledPrediction>,
    pub false_negatives: usize,
}

/// Greedy one-to-one assignment at tolerance `delta` seconds.
///
/// Predictions are visited by descending confidence; each claims the nearest
/// unclaimed ground truth of its class lying within the tolerance window
/// (ties go to the earlier ground-truth row) or is a false positive.
pub fn match_tolerance(
    preds: &[Spot],
    gts: &[Action],
    delta: f64,
    fps: f64,
    window: ToleranceWindow,
) -> ToleranceMatch {
    let half = window.half_width(delta);
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    let mut claimed = vec![false; gts.len()];
    let labeled = order
        .into_iter()
        .map(|i| {
            let p = preds[i];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if claimed[g] || gt.class != p.class {
                    continue;
                }
                let offset = (p.frame as f64 - gt.frame as f64).abs() / fps;
                if offset <= half && best.is_none_or(|(_, d)| offset < d) {
                    best = Some((g, offset));
                }
            }
            if let Some((g, _)) = best {
                claimed[g] = true;
            }
            LabeledPrediction {
                index: i,
                class: p.class,
                confidence: p.confidence,
                gt: best.map(|(g, _)| g),
            }
        })
        .collect();
    ToleranceMatch {
        labeled,
        false_negatives: claimed.iter().filter(|&&c| !c).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: ToleranceWindow = ToleranceWindow::HalfDelta;

    #[test]
    fn identical_predictions_are_all_true_positives() {
        let gts = [Action::new(0, 10), Action::new(1, 10), Action::new(0, 90)];
        let preds: Vec<Spot> = gts.iter().map(|a| Spot::new(a.class, a.frame, 0.7)).collect();
        let m = match_tolerance(&preds, &gts, 5.0, 2.0, W);
        assert!(m.labeled.iter().all(|l| l.is_tp()));
        assert_eq!(m.false_negatives, 0);
    }

    #[test]
    fn half_window_cases() {
        let gts = [Action::new(0, 200)];
        let preds = [Spot::new(0, 204, 0.9), Spot::new(0, 280, 0.8)];
        let m = match_tolerance(&preds, &gts, 20.0, 2.0, W);
        assert_eq!(m.labeled[0].gt, Some(0));
        assert_eq!(m.labeled[1].gt, None);
        assert_eq!(m.false_negatives, 0);

        let preds = [Spot::new(0, 208, 0.9), Spot::new(0, 280, 0.8)];
        let m = match_tolerance(&preds, &gts, 5.0, 2.0, W);
        assert!(m.labeled.iter().all(|l| !l.is_tp()));
        assert_eq!(m.false_negatives, 1);
    }

    #[test]
    fn window_edge_is_inclusive_and_full_delta_widens() {
        let gts = [Action::new(0, 100)];
        let preds = [Spot::new(0, 105, 0.5)];
        assert!(match_tolerance(&preds, &gts, 5.0, 2.0, W).labeled[0].is_tp());
        let preds = [Spot::new(0, 108, 0.5)];
        assert!(!match_tolerance(&preds, &gts, 5.0, 2.0, W).labeled[0].is_tp());
        assert!(match_tolerance(&preds, &gts, 5.0, 2.0, ToleranceWindow::FullDelta).labeled[0].is_tp());
    }

    #[test]
    fn confident_prediction_claims_first_and_classes_do_not_mix() {
        let gts = [Action::new(0, 100), Action::new(1, 100)];
        let preds = [Spot::new(0, 101, 0.2), Spot::new(0, 100, 0.9), Spot::new(1, 140, 0.5)];
        let m = match_tolerance(&preds, &gts, 10.0, 2.0, W);
        assert_eq!(m.labeled[0].index, 1);
        assert_eq!(m.labeled[0].gt, Some(0));
        assert_eq!(m.labeled[1].gt, None);
        assert_eq!(m.labeled[2].gt, None);
        assert_eq!(m.false_negatives, 1);
    }
}
