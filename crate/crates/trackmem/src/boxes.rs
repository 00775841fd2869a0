//! Box geometry shared by the tracker, losses and metrics.
//!
//! Internal boxes are center-parameterized and normalized to [0,1]
//! (`BoxCwh`); pixel-space left-top-width-height boxes only appear at the
//! file-format boundary and in the evaluation metrics.

use serde::{Deserialize, Serialize};

/// Center/size box: (cx, cy, w, h), normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoxCwh {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BoxCwh {
    fn from(v: [f64; 4]) -> Self {
        BoxCwh { cx: v[0], cy: v[1], w: v[2], h: v[3] }
    }
}

impl From<BoxCwh> for [f64; 4] {
    fn from(b: BoxCwh) -> [f64; 4] {
        [b.cx, b.cy, b.w, b.h]
    }
}

impl BoxCwh {
    pub const ZERO: BoxCwh = BoxCwh { cx: 0.0, cy: 0.0, w: 0.0, h: 0.0 };

    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoxCwh { cx, cy, w, h }
    }

    /// (x1, y1, x2, y2) corners.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.cx == 0.0 && self.cy == 0.0 && self.w == 0.0 && self.h == 0.0
    }
}

/// Intersection-over-union of two center/size boxes. Degenerate boxes
/// (non-positive extent) have zero overlap with everything.
pub fn iou(a: &BoxCwh, b: &BoxCwh) -> f64 {
    if a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0 {
        return 0.0;
    }
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Generalized IoU: IoU − (|C| − |A∪B|)/|C| with C the smallest enclosing
/// box. Ranges over [−1, 1]. Both boxes degenerate → 0 by convention (the
/// loss layer maps that case to its maximum).
pub fn giou(a: &BoxCwh, b: &BoxCwh) -> f64 {
    let a_deg = a.w <= 0.0 || a.h <= 0.0;
    let b_deg = b.w <= 0.0 || b.h <= 0.0;
    if a_deg && b_deg {
        return 0.0;
    }
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    let cw = ax2.max(bx2) - ax1.min(bx1);
    let ch = ay2.max(by2) - ay1.min(by1);
    let enclose = cw * ch;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    if enclose <= 0.0 {
        return iou;
    }
    iou - (enclose - union) / enclose
}

/// IoU of two pixel-space (left, top, width, height) boxes; zero-area
/// boxes match nothing.
pub fn iou_ltwh(a: [f64; 4], b: [f64; 4]) -> f64 {
    if a[2] <= 0.0 || a[3] <= 0.0 || b[2] <= 0.0 || b[3] <= 0.0 {
        return 0.0;
    }
    let iw = ((a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0])).max(0.0);
    let ih = ((a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}
