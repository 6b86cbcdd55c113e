//! Training losses: focal classification loss, L1 + GIoU box regression,
//! their sum, and analytic gradients.
//!
//! The gradients exist so the loss implementations can be held to a
//! finite-difference oracle; there is no optimiser here. Gradient evaluation
//! refuses points where the loss is not differentiable (L1 kinks, tied box
//! edges) instead of returning a subgradient silently.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::bbox::{giou, BoundingBox};
use crate::error::{Error, Result};

/// Probabilities are clamped to at least this before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// L1 differences at or below this magnitude count as kinks.
pub const KINK_TOLERANCE: f64 = 1e-6;

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Focal-loss class weight, in `(0, 1]`.
    pub alpha: f64,
    /// Focal-loss focusing exponent, `>= 0`.
    pub gamma: f64,
    /// Weight of the L1 term.
    pub lambda1: f64,
    /// Weight of the `1 - GIoU` term.
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.25,
            gamma: 2.0,
            lambda1: 5.0,
            lambda2: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::arg(format!(
                "focal alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::arg(format!(
                "focal gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.lambda1 > 0.0) || !(self.lambda2 > 0.0) {
            return Err(Error::arg(format!(
                "regression weights must be positive, got {} and {}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

/// True-class probability of one sample: the foreground probability for
/// positive samples, its complement for negatives.
fn true_class_prob(p_foreground: f64, label: bool) -> f64 {
    if label {
        p_foreground
    } else {
        1.0 - p_foreground
    }
}

/// Focal loss `-sum alpha * (1 - p_t)^gamma * ln(p_t)` over all samples,
/// with `p_t` the probability each sample assigns to its true class.
/// Probabilities of zero are clamped to [`PROB_FLOOR`] with a warning.
pub fn focal_loss(p_foreground: &[f64], labels: &[bool], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    if p_foreground.is_empty() {
        return Err(Error::arg("focal loss over an empty sample set"));
    }
    if p_foreground.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} probabilities vs {} labels",
            p_foreground.len(),
            labels.len()
        )));
    }
    if let Some(bad) = p_foreground.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::arg(format!(
            "probability {bad} outside [0, 1]"
        )));
    }
    let mut total = 0.0;
    for (&p, &label) in p_foreground.iter().zip(labels) {
        let mut p_t = true_class_prob(p, label);
        if p_t < PROB_FLOOR {
            warn!("focal loss clamping true-class probability {p_t} to {PROB_FLOOR}");
            p_t = PROB_FLOOR;
        }
        total += -cfg.alpha * (1.0 - p_t).powf(cfg.gamma) * p_t.ln();
    }
    Ok(total)
}

/// Box regression loss `lambda1 * L1 + lambda2 * (1 - GIoU)`, with L1 the
/// sum of absolute differences over `(x, y, w, h)`.
pub fn regression_loss(
    pred: &BoundingBox,
    target: &BoundingBox,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let l1 = (pred.x - target.x).abs()
        + (pred.y - target.y).abs()
        + (pred.w - target.w).abs()
        + (pred.h - target.h).abs();
    let g = giou(pred, target)?;
    Ok(cfg.lambda1 * l1 + cfg.lambda2 * (1.0 - g))
}

/// Sum of the classification and regression losses over batched inputs.
pub fn total_loss(
    p_foreground: &[f64],
    labels: &[bool],
    box_pairs: &[(BoundingBox, BoundingBox)],
    cfg: &LossConfig,
) -> Result<f64> {
    let mut total = focal_loss(p_foreground, labels, cfg)?;
    for (pred, target) in box_pairs {
        total += regression_loss(pred, target, cfg)?;
    }
    Ok(total)
}

/// Partial derivatives of the single-sample total loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGradients {
    /// d loss / d (pred.x, pred.y, pred.w, pred.h).
    pub d_box: [f64; 4],
    /// d loss / d p_t for the focal term.
    pub d_prob: f64,
}

/// Derivative of the focal term with respect to the true-class probability.
fn focal_gradient(p_t: f64, cfg: &LossConfig) -> f64 {
    if p_t >= 1.0 {
        // (1 - p)^gamma and its gamma-weighted companion both vanish for
        // gamma > 0; the gamma = 0 case reduces to plain NLL.
        return if cfg.gamma == 0.0 { -cfg.alpha } else { 0.0 };
    }
    let one_minus = 1.0 - p_t;
    let term1 = if cfg.gamma == 0.0 {
        0.0
    } else {
        cfg.alpha * cfg.gamma * one_minus.powf(cfg.gamma - 1.0) * p_t.ln()
    };
    let term2 = -cfg.alpha * one_minus.powf(cfg.gamma) / p_t;
    term1 + term2
}

/// Edge coordinates of a box in corner form.
fn edges(b: &BoundingBox) -> (f64, f64, f64, f64) {
    (b.x, b.y, b.x2(), b.y2())
}

/// Analytic gradient of `regression_loss + focal(p_t)` with respect to the
/// predicted box and `p_t`.
///
/// Errors with [`Error::NonDifferentiable`] when any L1 component difference
/// lies within [`KINK_TOLERANCE`] of zero, or when a pair of box edges used
/// by the GIoU min/max selections is tied (within `1e-9`).
pub fn loss_gradients(
    pred: &BoundingBox,
    target: &BoundingBox,
    p_t: f64,
    cfg: &LossConfig,
) -> Result<LossGradients> {
    cfg.validate()?;
    if !(p_t > 0.0 && p_t <= 1.0) {
        return Err(Error::arg(format!(
            "true-class probability must lie in (0, 1], got {p_t}"
        )));
    }
    // The GIoU path needs valid geometry; reuse its validation.
    giou(pred, target)?;

    let diffs = [
        pred.x - target.x,
        pred.y - target.y,
        pred.w - target.w,
        pred.h - target.h,
    ];
    for (i, d) in diffs.iter().enumerate() {
        if d.abs() <= KINK_TOLERANCE {
            let name = ["x", "y", "w", "h"][i];
            return Err(Error::NonDifferentiable(format!(
                "L1 component {name} within {KINK_TOLERANCE} of its kink"
            )));
        }
    }

    let (px1, py1, px2, py2) = edges(pred);
    let (tx1, ty1, tx2, ty2) = edges(target);
    const EDGE_TOL: f64 = 1e-9;
    for (a, b) in [(px1, tx1), (px2, tx2), (py1, ty1), (py2, ty2)] {
        if (a - b).abs() <= EDGE_TOL {
            return Err(Error::NonDifferentiable(
                "tied box edges make the GIoU min/max selection ambiguous".to_string(),
            ));
        }
    }

    // Intersection extents and their partials with respect to
    // (x, y, w, h) of the prediction. Indicators come from the strict
    // comparisons checked above.
    let iw_raw = px2.min(tx2) - px1.max(tx1);
    let ih_raw = py2.min(ty2) - py1.max(ty1);
    if iw_raw.abs() <= EDGE_TOL || ih_raw.abs() <= EDGE_TOL {
        return Err(Error::NonDifferentiable(
            "intersection extent sits on its clamp boundary".to_string(),
        ));
    }
    let right_inside = px2 < tx2; // prediction's right edge governs min
    let left_inside = px1 > tx1; // prediction's left edge governs max
    let bottom_inside = py2 < ty2;
    let top_inside = py1 > ty1;

    // d iw / d (x, w): min term moves with x and w when the prediction's
    // right edge is the smaller; max term moves with x when the prediction's
    // left edge is the larger.
    let (diw_dx, diw_dw);
    let (dih_dy, dih_dh);
    let (iw, ih);
    if iw_raw > 0.0 && ih_raw > 0.0 {
        iw = iw_raw;
        ih = ih_raw;
        diw_dx = (right_inside as i32 as f64) - (left_inside as i32 as f64);
        diw_dw = right_inside as i32 as f64;
        dih_dy = (bottom_inside as i32 as f64) - (top_inside as i32 as f64);
        dih_dh = bottom_inside as i32 as f64;
    } else {
        // Disjoint boxes: the clamped intersection is identically zero in a
        // neighbourhood, so its partials vanish.
        iw = 0.0;
        ih = 0.0;
        diw_dx = 0.0;
        diw_dw = 0.0;
        dih_dy = 0.0;
        dih_dh = 0.0;
    }
    let inter = iw * ih;
    let d_inter = [
        ih * diw_dx,
        iw * dih_dy,
        ih * diw_dw,
        iw * dih_dh,
    ];

    // Union and its partials.
    let area_pred = pred.area();
    let union = area_pred + target.area() - inter;
    let d_area = [0.0, 0.0, pred.h, pred.w];
    let d_union = [
        d_area[0] - d_inter[0],
        d_area[1] - d_inter[1],
        d_area[2] - d_inter[2],
        d_area[3] - d_inter[3],
    ];

    // Enclosing box and its partials.
    let ew = px2.max(tx2) - px1.min(tx1);
    let eh = py2.max(ty2) - py1.min(ty1);
    let encl = ew * eh;
    let right_outside = px2 > tx2;
    let left_outside = px1 < tx1;
    let bottom_outside = py2 > ty2;
    let top_outside = py1 < ty1;
    let dew_dx = (right_outside as i32 as f64) - (left_outside as i32 as f64);
    let dew_dw = right_outside as i32 as f64;
    let deh_dy = (bottom_outside as i32 as f64) - (top_outside as i32 as f64);
    let deh_dh = bottom_outside as i32 as f64;
    let d_encl = [
        eh * dew_dx,
        ew * deh_dy,
        eh * dew_dw,
        ew * deh_dh,
    ];

    // GIoU = inter/union - 1 + union/encl; quotient rule per component.
    let mut d_box = [0.0; 4];
    for i in 0..4 {
        let d_giou = (d_inter[i] * union - inter * d_union[i]) / (union * union)
            + (d_union[i] * encl - union * d_encl[i]) / (encl * encl);
        d_box[i] = cfg.lambda1 * diffs[i].signum() - cfg.lambda2 * d_giou;
    }

    Ok(LossGradients {
        d_box,
        d_prob: focal_gradient(p_t, cfg),
    })
}
