//! Tracking evaluation metrics.
//!
//! All metrics compare a per-frame list of optional predictions against a
//! per-frame list of optional ground-truth boxes of the same length; `None`
//! means the tracker reported the target lost (predictions) or the target is
//! not visible (ground truth).
//!
//! Conventions, chosen once and used everywhere:
//!
//! * **Precision rate** counts frames whose centre error is *strictly below*
//!   the pixel threshold, over frames where ground truth is present. An
//!   absent prediction on a counted frame is a miss.
//! * **Success rate** counts frames whose overlap is *at least* the
//!   threshold, so perfect tracking scores 1 even at threshold 1. The AUC
//!   variant averages the success rate over the 21 thresholds
//!   `0, 0.05, ..., 1`.
//! * **Precision / recall / F-score** average the per-frame overlap over
//!   prediction-present respectively truth-present frames, with the overlap
//!   against a missing box defined as 0. Degenerate denominators (no
//!   predictions at all, no visible ground truth, or precision + recall = 0)
//!   yield 0 and set [`PrecisionRecallF::degenerate`].

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

pub use crate::bbox::iou;

/// Per-frame tracker output; `None` marks a reported target loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    boxes: Vec<Option<BoundingBox>>,
}

/// Per-frame annotation; `None` marks frames where the target is invisible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    boxes: Vec<Option<BoundingBox>>,
}

macro_rules! frame_list {
    ($name:ident) => {
        impl $name {
            pub fn new(boxes: Vec<Option<BoundingBox>>) -> Self {
                $name { boxes }
            }

            pub fn len(&self) -> usize {
                self.boxes.len()
            }

            pub fn is_empty(&self) -> bool {
                self.boxes.is_empty()
            }

            pub fn boxes(&self) -> &[Option<BoundingBox>] {
                &self.boxes
            }
        }

        impl From<Vec<Option<BoundingBox>>> for $name {
            fn from(boxes: Vec<Option<BoundingBox>>) -> Self {
                $name::new(boxes)
            }
        }
    };
}

frame_list!(TrackResult);
frame_list!(GroundTruth);

fn require_paired(res: &TrackResult, gt: &GroundTruth) -> Result<()> {
    if res.len() != gt.len() {
        return Err(Error::arg(format!(
            "{} predictions paired with {} ground-truth frames",
            res.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Overlap used by precision/recall: IoU when both boxes exist, 0 otherwise.
fn overlap(a: &Option<BoundingBox>, b: &Option<BoundingBox>) -> Result<f64> {
    match (a, b) {
        (Some(a), Some(b)) => iou(a, b),
        _ => Ok(0.0),
    }
}

/// Fraction of truth-present frames with centre error strictly below
/// `threshold` pixels. Errors when no frame has ground truth.
pub fn precision_rate(res: &TrackResult, gt: &GroundTruth, threshold: f64) -> Result<f64> {
    require_paired(res, gt)?;
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::arg(format!(
            "precision threshold must be finite and non-negative, got {threshold}"
        )));
    }
    let mut counted = 0usize;
    let mut hits = 0usize;
    for (pred, truth) in res.boxes().iter().zip(gt.boxes()) {
        let Some(truth) = truth else { continue };
        counted += 1;
        if let Some(pred) = pred {
            if pred.center_distance(truth) < threshold {
                hits += 1;
            }
        }
    }
    if counted == 0 {
        return Err(Error::arg(
            "precision rate needs at least one frame with visible ground truth",
        ));
    }
    Ok(hits as f64 / counted as f64)
}

/// Fraction of truth-present frames whose overlap is at least
/// `iou_threshold`. An absent prediction counts as overlap 0, so it still
/// succeeds at threshold 0.
pub fn success_rate(res: &TrackResult, gt: &GroundTruth, iou_threshold: f64) -> Result<f64> {
    require_paired(res, gt)?;
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::arg(format!(
            "success threshold must lie in [0, 1], got {iou_threshold}"
        )));
    }
    let mut counted = 0usize;
    let mut hits = 0usize;
    for (pred, truth) in res.boxes().iter().zip(gt.boxes()) {
        if truth.is_none() {
            continue;
        }
        counted += 1;
        if overlap(pred, truth)? >= iou_threshold {
            hits += 1;
        }
    }
    if counted == 0 {
        return Err(Error::arg(
            "success rate needs at least one frame with visible ground truth",
        ));
    }
    Ok(hits as f64 / counted as f64)
}

/// Mean success rate over the thresholds `{i/20 : i = 0..=20}`.
pub fn success_auc(res: &TrackResult, gt: &GroundTruth) -> Result<f64> {
    let mut sum = 0.0;
    for i in 0..=20 {
        sum += success_rate(res, gt, i as f64 / 20.0)?;
    }
    Ok(sum / 21.0)
}

/// Long-term precision, recall, and F-score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecallF {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// True when any denominator collapsed (no predictions, no visible
    /// ground truth, or precision + recall = 0) and the affected value was
    /// defined as 0.
    pub degenerate: bool,
}

/// Mean overlap over prediction-present frames (precision) and over
/// truth-present frames (recall), combined into the harmonic-mean F-score.
pub fn precision_recall_f(res: &TrackResult, gt: &GroundTruth) -> Result<PrecisionRecallF> {
    require_paired(res, gt)?;
    let mut n_pred = 0usize;
    let mut n_truth = 0usize;
    let mut sum_pred = 0.0;
    let mut sum_truth = 0.0;
    for (pred, truth) in res.boxes().iter().zip(gt.boxes()) {
        let omega = overlap(pred, truth)?;
        if pred.is_some() {
            n_pred += 1;
            sum_pred += omega;
        }
        if truth.is_some() {
            n_truth += 1;
            sum_truth += omega;
        }
    }
    let mut degenerate = false;
    let precision = if n_pred > 0 {
        sum_pred / n_pred as f64
    } else {
        degenerate = true;
        0.0
    };
    let recall = if n_truth > 0 {
        sum_truth / n_truth as f64
    } else {
        degenerate = true;
        0.0
    };
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        degenerate = true;
        0.0
    };
    if degenerate {
        log::warn!("degenerate precision/recall denominator; affected values reported as 0");
    }
    Ok(PrecisionRecallF {
        precision,
        recall,
        f_score,
        degenerate,
    })
}

/// Everything the evaluator reports for one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub frames: usize,
    pub precision_rate: f64,
    pub pr_threshold: f64,
    pub success_rate: f64,
    pub sr_threshold: f64,
    pub success_auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub degenerate: bool,
}

/// Evaluates every metric at the given thresholds in one pass.
pub fn evaluate(
    res: &TrackResult,
    gt: &GroundTruth,
    pr_threshold: f64,
    sr_threshold: f64,
) -> Result<SequenceMetrics> {
    let prf = precision_recall_f(res, gt)?;
    Ok(SequenceMetrics {
        frames: res.len(),
        precision_rate: precision_rate(res, gt, pr_threshold)?,
        pr_threshold,
        success_rate: success_rate(res, gt, sr_threshold)?,
        sr_threshold,
        success_auc: success_auc(res, gt)?,
        precision: prf.precision,
        recall: prf.recall,
        f_score: prf.f_score,
        degenerate: prf.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> Option<BoundingBox> {
        Some(BoundingBox::new(x, y, w, h).unwrap())
    }

    /// Prediction centres offset from a fixed ground truth by the given
    /// pixel distances (along x, so the centre error equals the offset).
    fn offset_pair(distances: &[f64]) -> (TrackResult, GroundTruth) {
        let gt: Vec<_> = distances.iter().map(|_| b(100.0, 100.0, 10.0, 10.0)).collect();
        let pred: Vec<_> = distances
            .iter()
            .map(|d| b(100.0 + d, 100.0, 10.0, 10.0))
            .collect();
        (TrackResult::new(pred), GroundTruth::new(gt))
    }

    #[test]
    fn precision_counts_errors_below_threshold() {
        // Distances 5 and 10 fall under 20; 25 and 30 do not.
        let (res, gt) = offset_pair(&[5.0, 25.0, 10.0, 30.0]);
        assert_eq!(precision_rate(&res, &gt, 20.0).unwrap(), 0.5);
    }

    #[test]
    fn precision_is_one_for_perfect_tracking() {
        let (res, gt) = offset_pair(&[0.0, 0.0, 0.0]);
        assert_eq!(precision_rate(&res, &gt, 20.0).unwrap(), 1.0);
    }

    #[test]
    fn precision_threshold_boundary_is_exclusive() {
        let (res, gt) = offset_pair(&[20.0]);
        assert_eq!(precision_rate(&res, &gt, 20.0).unwrap(), 0.0);
        let (res, gt) = offset_pair(&[19.999]);
        assert_eq!(precision_rate(&res, &gt, 20.0).unwrap(), 1.0);
    }

    #[test]
    fn precision_treats_absent_prediction_as_miss() {
        let gt = GroundTruth::new(vec![b(0.0, 0.0, 4.0, 4.0), b(0.0, 0.0, 4.0, 4.0)]);
        let res = TrackResult::new(vec![b(0.0, 0.0, 4.0, 4.0), None]);
        assert_eq!(precision_rate(&res, &gt, 20.0).unwrap(), 0.5);
    }

    #[test]
    fn precision_skips_frames_without_ground_truth() {
        let gt = GroundTruth::new(vec![b(0.0, 0.0, 4.0, 4.0), None, b(0.0, 0.0, 4.0, 4.0)]);
        let res = TrackResult::new(vec![
            b(0.0, 0.0, 4.0, 4.0),
            b(50.0, 50.0, 4.0, 4.0),
            b(100.0, 0.0, 4.0, 4.0),
        ]);
        // Two counted frames, one hit.
        assert_eq!(precision_rate(&res, &gt, 20.0).unwrap(), 0.5);
    }

    #[test]
    fn precision_rejects_empty_and_mismatched_input() {
        let empty = TrackResult::new(vec![]);
        let empty_gt = GroundTruth::new(vec![]);
        assert!(precision_rate(&empty, &empty_gt, 20.0).is_err());

        let all_absent_gt = GroundTruth::new(vec![None, None]);
        let res = TrackResult::new(vec![b(0.0, 0.0, 1.0, 1.0), None]);
        assert!(precision_rate(&res, &all_absent_gt, 20.0).is_err());

        let short_gt = GroundTruth::new(vec![b(0.0, 0.0, 1.0, 1.0)]);
        assert!(precision_rate(&res, &short_gt, 20.0).is_err());
        assert!(precision_rate(&res, &all_absent_gt, f64::NAN).is_err());
        assert!(precision_rate(&res, &all_absent_gt, -1.0).is_err());
    }

    /// Nested unit-height boxes give exact overlap ratios w_pred / w_gt.
    fn nested_pair(ratios: &[(f64, f64)]) -> (TrackResult, GroundTruth) {
        let gt: Vec<_> = ratios.iter().map(|&(_, w)| b(0.0, 0.0, w, 1.0)).collect();
        let pred: Vec<_> = ratios.iter().map(|&(w, _)| b(0.0, 0.0, w, 1.0)).collect();
        (TrackResult::new(pred), GroundTruth::new(gt))
    }

    #[test]
    fn success_counts_overlap_at_least_threshold() {
        // Overlaps 1/5, 3/5, 4/5 against threshold 0.5: two hits.
        let (res, gt) = nested_pair(&[(1.0, 5.0), (3.0, 5.0), (4.0, 5.0)]);
        let sr = success_rate(&res, &gt, 0.5).unwrap();
        assert!((sr - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn success_boundary_is_inclusive() {
        // Perfect overlap still succeeds at threshold 1.
        let (res, gt) = nested_pair(&[(5.0, 5.0), (5.0, 5.0)]);
        assert_eq!(success_rate(&res, &gt, 1.0).unwrap(), 1.0);
        assert_eq!(success_auc(&res, &gt).unwrap(), 1.0);
    }

    #[test]
    fn success_for_disjoint_boxes_is_zero_above_zero_threshold() {
        let gt = GroundTruth::new(vec![b(0.0, 0.0, 2.0, 2.0); 3]);
        let res = TrackResult::new(vec![b(10.0, 10.0, 2.0, 2.0); 3]);
        assert_eq!(success_rate(&res, &gt, 0.5).unwrap(), 0.0);
        assert_eq!(success_rate(&res, &gt, 0.05).unwrap(), 0.0);
        // Overlap 0 >= 0 holds, so the zero threshold always succeeds.
        assert_eq!(success_rate(&res, &gt, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn success_threshold_outside_unit_interval_is_rejected() {
        let (res, gt) = nested_pair(&[(1.0, 1.0)]);
        assert!(success_rate(&res, &gt, -0.1).is_err());
        assert!(success_rate(&res, &gt, 1.1).is_err());
        assert!(success_rate(&res, &gt, f64::NAN).is_err());
    }

    #[test]
    fn success_is_non_increasing_in_threshold() {
        let (res, gt) = nested_pair(&[(1.0, 5.0), (2.0, 5.0), (3.0, 5.0), (5.0, 5.0)]);
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let sr = success_rate(&res, &gt, i as f64 / 20.0).unwrap();
            assert!(sr <= prev);
            prev = sr;
        }
    }

    #[test]
    fn auc_averages_twenty_one_thresholds() {
        let (res, gt) = nested_pair(&[(3.0, 5.0)]);
        // Single frame with overlap 0.6: SR(tau) = 1 for tau <= 0.6
        // (13 thresholds: 0, 0.05, ..., 0.60), else 0.
        let auc = success_auc(&res, &gt).unwrap();
        assert!((auc - 13.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn crafted_four_frame_case_scores_half_everywhere() {
        // Truth on frames 0-2, prediction on frames 1-3; overlaps 0.5 and
        // 1.0 on the shared frames, and the frame-3 prediction has no truth.
        let gt = GroundTruth::new(vec![
            b(0.0, 0.0, 4.0, 1.0),
            b(0.0, 0.0, 4.0, 1.0),
            b(0.0, 0.0, 4.0, 1.0),
            None,
        ]);
        let res = TrackResult::new(vec![
            None,
            b(0.0, 0.0, 2.0, 1.0),
            b(0.0, 0.0, 4.0, 1.0),
            b(50.0, 50.0, 4.0, 1.0),
        ]);
        let prf = precision_recall_f(&res, &gt).unwrap();
        assert_eq!(prf.precision, 0.5);
        assert_eq!(prf.recall, 0.5);
        assert_eq!(prf.f_score, 0.5);
        assert!(!prf.degenerate);
    }

    #[test]
    fn perfect_always_present_tracking_scores_one() {
        let (res, gt) = nested_pair(&[(5.0, 5.0); 4]);
        let prf = precision_recall_f(&res, &gt).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f_score), (1.0, 1.0, 1.0));
        assert!(!prf.degenerate);
    }

    #[test]
    fn absent_predictions_degenerate_to_zero() {
        let gt = GroundTruth::new(vec![b(0.0, 0.0, 1.0, 1.0); 3]);
        let res = TrackResult::new(vec![None, None, None]);
        let prf = precision_recall_f(&res, &gt).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f_score), (0.0, 0.0, 0.0));
        assert!(prf.degenerate);
    }

    #[test]
    fn empty_sequences_degenerate_without_error() {
        let prf =
            precision_recall_f(&TrackResult::new(vec![]), &GroundTruth::new(vec![])).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f_score), (0.0, 0.0, 0.0));
        assert!(prf.degenerate);
    }

    #[test]
    fn f_score_matches_harmonic_mean_identity() {
        let (res, gt) = nested_pair(&[(1.0, 5.0), (4.0, 5.0), (2.0, 5.0)]);
        let prf = precision_recall_f(&res, &gt).unwrap();
        // Same counted set on both sides, so precision equals recall and
        // the harmonic mean collapses onto them.
        assert_eq!(prf.precision, prf.recall);
        assert!((prf.f_score - prf.precision).abs() < 1e-15);
    }

    #[test]
    fn metrics_are_permutation_covariant() {
        let (res, gt) = nested_pair(&[(1.0, 5.0), (3.0, 5.0), (4.0, 5.0), (5.0, 5.0)]);
        let perm = [2usize, 0, 3, 1];
        let res_p = TrackResult::new(perm.iter().map(|&i| res.boxes()[i]).collect());
        let gt_p = GroundTruth::new(perm.iter().map(|&i| gt.boxes()[i]).collect());
        assert_eq!(
            success_rate(&res, &gt, 0.5).unwrap(),
            success_rate(&res_p, &gt_p, 0.5).unwrap()
        );
        assert_eq!(
            precision_rate(&res, &gt, 20.0).unwrap(),
            precision_rate(&res_p, &gt_p, 20.0).unwrap()
        );
        assert_eq!(
            precision_recall_f(&res, &gt).unwrap(),
            precision_recall_f(&res_p, &gt_p).unwrap()
        );
    }

    #[test]
    fn evaluate_bundles_all_metrics_consistently() {
        let (res, gt) = nested_pair(&[(3.0, 5.0), (4.0, 5.0)]);
        let m = evaluate(&res, &gt, 20.0, 0.5).unwrap();
        assert_eq!(m.frames, 2);
        assert_eq!(m.precision_rate, precision_rate(&res, &gt, 20.0).unwrap());
        assert_eq!(m.success_rate, success_rate(&res, &gt, 0.5).unwrap());
        assert_eq!(m.success_auc, success_auc(&res, &gt).unwrap());
        assert_eq!(m.precision, precision_recall_f(&res, &gt).unwrap().precision);
    }

    #[test]
    fn metric_values_stay_in_unit_interval() {
        let (res, gt) = nested_pair(&[(1.0, 5.0), (2.0, 4.0), (3.0, 3.0)]);
        let m = evaluate(&res, &gt, 20.0, 0.5).unwrap();
        for v in [
            m.precision_rate,
            m.success_rate,
            m.success_auc,
            m.precision,
            m.recall,
            m.f_score,
        ] {
            assert!((0.0..=1.0).contains(&v), "{v} outside [0,1]");
        }
    }
}
