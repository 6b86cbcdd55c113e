//! Axis-aligned bounding boxes and the overlap measures built on them.
//!
//! Boxes are stored as `(x, y, w, h)` with `(x, y)` the top-left corner in
//! pixel coordinates. Overlap measures require strictly positive widths and
//! heights; degenerate boxes are rejected rather than silently treated as
//! empty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting non-finite components.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        for (name, v) in [("x", x), ("y", y), ("w", w), ("h", h)] {
            if !v.is_finite() {
                return Err(Error::arg(format!("box component {name} is not finite: {v}")));
            }
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Right edge.
    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    /// Bottom edge.
    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    /// Euclidean distance between the centers of two boxes.
    pub fn center_distance(&self, other: &BoundingBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    fn require_positive_area(&self, role: &str) -> Result<()> {
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::arg(format!(
                "{role} box must have positive width and height, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }
}

/// Overlap area of two boxes (zero when disjoint). No validation; callers
/// check areas first.
fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x.max(b.x)).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y.max(b.y)).max(0.0);
    iw * ih
}

/// Intersection over union. Both boxes must have positive area; the result
/// lies in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.require_positive_area("first")?;
    b.require_positive_area("second")?;
    // Exactly coincident boxes overlap exactly 1; the corner arithmetic
    // below can land one rounding step away (`(x + w) - x` need not be `w`),
    // which would wrongly fail an overlap-threshold sweep at 1.0.
    if a == b {
        return Ok(1.0);
    }
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    Ok(inter / union)
}

/// Generalised IoU: IoU minus the fraction of the smallest enclosing box not
/// covered by the union. Lies in `(-1, 1]`, equal to IoU when one box
/// contains the other's span (enclosing box == union support).
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.require_positive_area("first")?;
    b.require_positive_area("second")?;
    if a == b {
        return Ok(1.0); // see `iou`
    }
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    let encl_w = a.x2().max(b.x2()) - a.x.min(b.x);
    let encl_h = a.y2().max(b.y2()) - a.y.min(b.y);
    let encl = encl_w * encl_h;
    Ok(inter / union - (encl - union) / encl)
}
