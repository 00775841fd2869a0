//! Objective components for the tracking and auxiliary detection decoders:
//! focal objectness/uniqueness terms, L1 and generalized-IoU box terms,
//! their per-frame compositions, and the sequence-level fusion. Every
//! scalar component returns its analytic gradient; the tests pin each one
//! against central finite differences.

use serde::{Deserialize, Serialize};

use crate::boxes::BoxCwh;
use crate::error::{Error, Result};
use crate::tracker::{QueryEntry, SupervisionTarget};

/// Probabilities are clamped to [P_CLAMP, 1 - P_CLAMP] before the focal
/// terms; the clamp has zero derivative outside the open interval.
pub const P_CLAMP: f64 = 1e-7;

/// Weights of the composite losses plus the focal parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLossWeights")]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_l1: f64,
    pub lambda_iou: f64,
    pub lambda_track: f64,
    pub lambda_det: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawLossWeights {
    lambda_cls: f64,
    lambda_l1: f64,
    lambda_iou: f64,
    lambda_track: f64,
    lambda_det: f64,
    focal_alpha: f64,
    focal_gamma: f64,
}

impl Default for RawLossWeights {
    fn default() -> Self {
        let d = LossWeights::default();
        RawLossWeights {
            lambda_cls: d.lambda_cls,
            lambda_l1: d.lambda_l1,
            lambda_iou: d.lambda_iou,
            lambda_track: d.lambda_track,
            lambda_det: d.lambda_det,
            focal_alpha: d.focal_alpha,
            focal_gamma: d.focal_gamma,
        }
    }
}

impl TryFrom<RawLossWeights> for LossWeights {
    type Error = Error;

    fn try_from(r: RawLossWeights) -> Result<Self> {
        LossWeights::new(
            r.lambda_cls,
            r.lambda_l1,
            r.lambda_iou,
            r.lambda_track,
            r.lambda_det,
            r.focal_alpha,
            r.focal_gamma,
        )
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cls: 3.0,
            lambda_l1: 6.0,
            lambda_iou: 3.0,
            lambda_track: 2.0,
            lambda_det: 2.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossWeights {
    pub fn new(
        lambda_cls: f64,
        lambda_l1: f64,
        lambda_iou: f64,
        lambda_track: f64,
        lambda_det: f64,
        focal_alpha: f64,
        focal_gamma: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("lambda_cls", lambda_cls),
            ("lambda_l1", lambda_l1),
            ("lambda_iou", lambda_iou),
            ("lambda_track", lambda_track),
            ("lambda_det", lambda_det),
            ("focal_gamma", focal_gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::arg(format!("{} must be finite and non-negative, got {}", name, v)));
            }
        }
        if !focal_alpha.is_finite() || !(0.0..=1.0).contains(&focal_alpha) {
            return Err(Error::arg(format!("focal_alpha must lie in [0,1], got {}", focal_alpha)));
        }
        Ok(LossWeights {
            lambda_cls,
            lambda_l1,
            lambda_iou,
            lambda_track,
            lambda_det,
            focal_alpha,
            focal_gamma,
        })
    }

    /// Detach the auxiliary detection decoder at inference: the sequence
    /// loss then reduces to pure tracking.
    pub fn with_detached_aux(&self) -> Self {
        LossWeights { lambda_det: 0.0, ..self.clone() }
    }
}

/// Gradient of a composite loss with respect to one entry's predictions.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EntryGrad {
    pub d_objectness: f64,
    pub d_uniqueness: f64,
    pub d_bbox: [f64; 4],
}

/// One frame's loss breakdown. The component fields are unnormalized sums
/// over entries; `total` is the weighted composition divided by the
/// visible-instance count (1 when nothing is visible). Gradients are of
/// `total` with respect to each entry's (objectness, uniqueness, box).
#[derive(Clone, Debug, Serialize)]
pub struct LossReport {
    pub l_obj: f64,
    pub l_uni: f64,
    pub l_bbox: f64,
    pub l_iou: f64,
    pub n_visible: usize,
    pub total: f64,
    pub grads: Vec<EntryGrad>,
}

/// Focal loss on a single probability. y = 1: −α(1−p)^γ·ln p;
/// y = 0: −(1−α)·p^γ·ln(1−p). Returns (value, d value/d p).
pub fn focal_loss(p: f64, y: f64, alpha: f64, gamma: f64) -> Result<(f64, f64)> {
    if !p.is_finite() || p <= 0.0 || p >= 1.0 {
        return Err(Error::arg(format!("focal loss needs p strictly inside (0,1), got {}", p)));
    }
    if y != 0.0 && y != 1.0 {
        return Err(Error::arg(format!("focal target must be 0 or 1, got {}", y)));
    }
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::arg(format!("focal alpha must lie in [0,1], got {}", alpha)));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::arg(format!("focal gamma must be non-negative, got {}", gamma)));
    }
    if y == 1.0 {
        let q = 1.0 - p;
        let value = -alpha * q.powf(gamma) * p.ln();
        let modulating = if gamma == 0.0 {
            0.0
        } else {
            alpha * gamma * q.powf(gamma - 1.0) * p.ln()
        };
        Ok((value, modulating - alpha * q.powf(gamma) / p))
    } else {
        let value = -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln();
        let modulating = if gamma == 0.0 {
            0.0
        } else {
            -(1.0 - alpha) * gamma * p.powf(gamma - 1.0) * (1.0 - p).ln()
        };
        Ok((value, modulating + (1.0 - alpha) * p.powf(gamma) / (1.0 - p)))
    }
}

/// Sum of absolute coordinate differences in (cx, cy, w, h). The gradient
/// with respect to the prediction is the coordinate-wise sign, zero at
/// ties.
pub fn l1_box_loss(pred: &BoxCwh, gt: &BoxCwh) -> (f64, [f64; 4]) {
    let deltas = [gt.cx - pred.cx, gt.cy - pred.cy, gt.w - pred.w, gt.h - pred.h];
    let value = deltas.iter().map(|d| d.abs()).sum();
    let mut grad = [0.0; 4];
    for (g, d) in grad.iter_mut().zip(&deltas) {
        *g = if *d > 0.0 {
            -1.0
        } else if *d < 0.0 {
            1.0
        } else {
            0.0
        };
    }
    (value, grad)
}

/// Generalized-IoU loss 1 − GIoU with its analytic gradient with respect
/// to the predicted (cx, cy, w, h), derived through the corner
/// parameterization. Two fully degenerate boxes give the maximal plain-IoU
/// deficit (value 1) with zero gradient.
pub fn giou_loss(pred: &BoxCwh, gt: &BoxCwh) -> Result<(f64, [f64; 4])> {
    for (name, b) in [("pred", pred), ("gt", gt)] {
        let finite = [b.cx, b.cy, b.w, b.h].iter().all(|v| v.is_finite());
        if !finite || b.w < 0.0 || b.h < 0.0 {
            return Err(Error::arg(format!(
                "{} box must be finite with non-negative extent: {:?}",
                name, b
            )));
        }
    }
    let pred_deg = pred.w <= 0.0 || pred.h <= 0.0;
    let gt_deg = gt.w <= 0.0 || gt.h <= 0.0;
    if pred_deg && gt_deg {
        return Ok((1.0, [0.0; 4]));
    }

    let (px1, py1, px2, py2) = pred.corners();
    let (gx1, gy1, gx2, gy2) = gt.corners();
    // Derivatives of the prediction corners with respect to (cx,cy,w,h).
    let dpx1 = [1.0, 0.0, -0.5, 0.0];
    let dpx2 = [1.0, 0.0, 0.5, 0.0];
    let dpy1 = [0.0, 1.0, 0.0, -0.5];
    let dpy2 = [0.0, 1.0, 0.0, 0.5];
    let darea = [0.0, 0.0, pred.h, pred.w];

    let iw = (px2.min(gx2) - px1.max(gx1)).max(0.0);
    let ih = (py2.min(gy2) - py1.max(gy1)).max(0.0);
    let inter = iw * ih;
    let union = pred.area() + gt.area() - inter;
    let cw = px2.max(gx2) - px1.min(gx1);
    let ch = py2.max(gy2) - py1.min(gy1);
    let enclose = cw * ch;
    // One box is non-degenerate, so union and enclosure are positive.
    let giou = inter / union - (enclose - union) / enclose;
    let value = 1.0 - giou;

    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_iw = if iw > 0.0 {
            let d_hi = if px2 < gx2 { dpx2[k] } else { 0.0 };
            let d_lo = if px1 > gx1 { dpx1[k] } else { 0.0 };
            d_hi - d_lo
        } else {
            0.0
        };
        let d_ih = if ih > 0.0 {
            let d_hi = if py2 < gy2 { dpy2[k] } else { 0.0 };
            let d_lo = if py1 > gy1 { dpy1[k] } else { 0.0 };
            d_hi - d_lo
        } else {
            0.0
        };
        let d_inter = d_iw * ih + iw * d_ih;
        let d_union = darea[k] - d_inter;
        let d_iou = (d_inter * union - inter * d_union) / (union * union);
        let d_cw = {
            let d_hi = if px2 > gx2 { dpx2[k] } else { 0.0 };
            let d_lo = if px1 < gx1 { dpx1[k] } else { 0.0 };
            d_hi - d_lo
        };
        let d_ch = {
            let d_hi = if py2 > gy2 { dpy2[k] } else { 0.0 };
            let d_lo = if py1 < gy1 { dpy1[k] } else { 0.0 };
            d_hi - d_lo
        };
        let d_enclose = d_cw * ch + cw * d_ch;
        let d_penalty = -(d_union * enclose - union * d_enclose) / (enclose * enclose);
        grad[k] = -(d_iou - d_penalty);
    }
    Ok((value, grad))
}

enum LossForm {
    Track,
    Det,
}

fn track_unnormalized(l_obj: f64, l_uni: f64, l_bbox: f64, l_iou: f64, w: &LossWeights) -> f64 {
    w.lambda_cls * (l_obj + l_uni) + w.lambda_l1 * (l_bbox + l_iou)
}

fn det_unnormalized(l_obj: f64, l_bbox: f64, l_iou: f64, w: &LossWeights) -> f64 {
    w.lambda_cls * l_obj + w.lambda_l1 * l_bbox + w.lambda_iou * l_iou
}

fn clamp_prob(p: f64) -> (f64, f64) {
    if p < P_CLAMP {
        (P_CLAMP, 0.0)
    } else if p > 1.0 - P_CLAMP {
        (1.0 - P_CLAMP, 0.0)
    } else {
        (p, 1.0)
    }
}

fn composite_loss(
    entries: &[QueryEntry],
    targets: &[SupervisionTarget],
    w: &LossWeights,
    form: LossForm,
) -> Result<LossReport> {
    if entries.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} entries but {} supervision targets",
            entries.len(),
            targets.len()
        )));
    }
    let n_visible = targets.iter().filter(|t| t.objectness == 1.0).count();
    if n_visible == 0 && targets.iter().any(|t| t.bbox.is_some()) {
        return Err(Error::invariant(
            "box supervision present but no visible instances to normalize by",
        ));
    }
    let norm = if n_visible == 0 { 1.0 } else { n_visible as f64 };
    let iou_weight = match form {
        LossForm::Track => w.lambda_l1,
        LossForm::Det => w.lambda_iou,
    };

    let (mut l_obj, mut l_uni, mut l_bbox, mut l_iou) = (0.0, 0.0, 0.0, 0.0);
    let mut grads = vec![EntryGrad::default(); entries.len()];
    for (i, (e, t)) in entries.iter().zip(targets).enumerate() {
        let (p, dp) = clamp_prob(e.objectness);
        let (v, g) = focal_loss(p, t.objectness, w.focal_alpha, w.focal_gamma)?;
        l_obj += v;
        grads[i].d_objectness = w.lambda_cls * g * dp / norm;

        if matches!(form, LossForm::Track) {
            if let Some(u_star) = t.uniqueness {
                let (pu, dpu) = clamp_prob(e.uniqueness);
                let (vu, gu) = focal_loss(pu, u_star, w.focal_alpha, w.focal_gamma)?;
                l_uni += vu;
                grads[i].d_uniqueness = w.lambda_cls * gu * dpu / norm;
            }
        }

        if let Some(gt_box) = &t.bbox {
            let (v1, g1) = l1_box_loss(&e.bbox, gt_box);
            let (vg, gg) = giou_loss(&e.bbox, gt_box)?;
            l_bbox += v1;
            l_iou += vg;
            for k in 0..4 {
                grads[i].d_bbox[k] = (w.lambda_l1 * g1[k] + iou_weight * gg[k]) / norm;
            }
        }
    }
    let unnorm = match form {
        LossForm::Track => track_unnormalized(l_obj, l_uni, l_bbox, l_iou, w),
        LossForm::Det => det_unnormalized(l_obj, l_bbox, l_iou, w),
    };
    Ok(LossReport { l_obj, l_uni, l_bbox, l_iou, n_visible, total: unnorm / norm, grads })
}

/// Per-frame tracking loss: focal objectness and uniqueness terms plus L1
/// and GIoU box terms over the supervised entries, normalized by the
/// visible-instance count.
pub fn track_loss(
    entries: &[QueryEntry],
    targets: &[SupervisionTarget],
    w: &LossWeights,
) -> Result<LossReport> {
    composite_loss(entries, targets, w, LossForm::Track)
}

/// Per-frame auxiliary detection loss: like the tracking loss but without
/// a uniqueness term, and with the GIoU term carrying its own weight
/// instead of the L1 weight.
pub fn det_loss(
    entries: &[QueryEntry],
    targets: &[SupervisionTarget],
    w: &LossWeights,
) -> Result<LossReport> {
    composite_loss(entries, targets, w, LossForm::Det)
}

/// Sequence-level fusion of per-frame reports: the tracking sum is
/// renormalized by the total visible-instance count across the sequence,
/// the detection losses are summed per frame as-is, and the two are
/// weighted and added. Recomposes from the reports' unnormalized
/// components, so the weights given here are the ones that count.
pub fn seq_loss(
    track_reports: &[LossReport],
    det_reports: &[LossReport],
    w: &LossWeights,
) -> Result<f64> {
    if track_reports.is_empty() {
        return Err(Error::arg("sequence loss needs at least one frame"));
    }
    if track_reports.len() != det_reports.len() {
        return Err(Error::arg(format!(
            "{} tracking frames but {} detection frames",
            track_reports.len(),
            det_reports.len()
        )));
    }
    let n_total: usize = track_reports.iter().map(|r| r.n_visible).sum();
    let track_sum: f64 = track_reports
        .iter()
        .map(|r| track_unnormalized(r.l_obj, r.l_uni, r.l_bbox, r.l_iou, w))
        .sum();
    let track_norm = if n_total == 0 { 1.0 } else { n_total as f64 };
    let det_sum: f64 = det_reports
        .iter()
        .map(|r| {
            let norm = if r.n_visible == 0 { 1.0 } else { r.n_visible as f64 };
            det_unnormalized(r.l_obj, r.l_bbox, r.l_iou, w) / norm
        })
        .sum();
    Ok(w.lambda_track * track_sum / track_norm + w.lambda_det * det_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::giou;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    const H: f64 = 1e-6;

    fn embedding(d: usize) -> Tensor {
        Tensor::zeros(vec![d])
    }

    fn candidate(bbox: BoxCwh, o: f64, u: f64) -> QueryEntry {
        QueryEntry::candidate(embedding(4), bbox, o, u).unwrap()
    }

    fn matched(bbox: BoxCwh, u_star: f64) -> SupervisionTarget {
        SupervisionTarget { objectness: 1.0, uniqueness: Some(u_star), bbox: Some(bbox) }
    }

    fn background() -> SupervisionTarget {
        SupervisionTarget { objectness: 0.0, uniqueness: None, bbox: None }
    }

    fn random_box(rng: &mut impl Rng) -> BoxCwh {
        BoxCwh::new(
            rng.random_range(0.3..0.7),
            rng.random_range(0.3..0.7),
            rng.random_range(0.1..0.4),
            rng.random_range(0.1..0.4),
        )
    }

    #[test]
    fn focal_perfect_prediction_is_negligible() {
        let (v, _) = focal_loss(1.0 - 1e-7, 1.0, 0.25, 2.0).unwrap();
        assert!(v < 1e-12, "value {}", v);
        let (v0, _) = focal_loss(1e-7, 0.0, 0.25, 2.0).unwrap();
        assert!(v0 < 1e-12);
    }

    #[test]
    fn focal_hand_value_at_half() {
        // -0.25 * (1-0.5)^2 * ln(0.5) = 0.25 * 0.25 * ln 2
        let (v, _) = focal_loss(0.5, 1.0, 0.25, 2.0).unwrap();
        assert!((v - 0.0625 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((v - 0.043321698784996581).abs() < 1e-12);
    }

    #[test]
    fn focal_gradient_matches_fd_at_half() {
        let (_, g) = focal_loss(0.5, 1.0, 0.25, 2.0).unwrap();
        let (vp, _) = focal_loss(0.5 + H, 1.0, 0.25, 2.0).unwrap();
        let (vm, _) = focal_loss(0.5 - H, 1.0, 0.25, 2.0).unwrap();
        let fd = (vp - vm) / (2.0 * H);
        assert!((g - fd).abs() <= 1e-6 * fd.abs(), "analytic {} fd {}", g, fd);
    }

    #[test]
    fn focal_rejects_boundary_and_bad_parameters() {
        assert!(focal_loss(0.0, 1.0, 0.25, 2.0).is_err());
        assert!(focal_loss(1.0, 1.0, 0.25, 2.0).is_err());
        assert!(focal_loss(0.5, 0.5, 0.25, 2.0).is_err());
        assert!(focal_loss(0.5, 1.0, -0.1, 2.0).is_err());
        assert!(focal_loss(0.5, 1.0, 0.25, -1.0).is_err());
    }

    #[test]
    fn focal_gradient_fd_property_1000_points() {
        // Central differences at h=1e-6 have a roundoff floor near 1e-9,
        // so the relative tolerance gets an absolute guard of 1e-4.
        let mut rng = ChaCha12Rng::seed_from_u64(101);
        let gammas = [0.0, 0.5, 1.0, 2.0, 5.0];
        for i in 0..1000 {
            let p = rng.random_range(0.02..0.98);
            let y = if rng.random_range(0.0..1.0) < 0.5 { 0.0 } else { 1.0 };
            let alpha = rng.random_range(0.05..0.95);
            let gamma = gammas[i % gammas.len()];
            let (_, g) = focal_loss(p, y, alpha, gamma).unwrap();
            let (vp, _) = focal_loss(p + H, y, alpha, gamma).unwrap();
            let (vm, _) = focal_loss(p - H, y, alpha, gamma).unwrap();
            let fd = (vp - vm) / (2.0 * H);
            assert!(
                (g - fd).abs() <= 1e-4 * fd.abs().max(1e-4),
                "p={} y={} a={} g={}: analytic {} fd {}",
                p,
                y,
                alpha,
                gamma,
                g,
                fd
            );
        }
    }

    #[test]
    fn l1_identical_boxes_are_free() {
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.3);
        let (v, g) = l1_box_loss(&b, &b);
        assert_eq!(v, 0.0);
        assert_eq!(g, [0.0; 4]);
    }

    #[test]
    fn l1_single_coordinate_offset() {
        let gt = BoxCwh::new(0.5, 0.5, 0.2, 0.2);
        let pred = BoxCwh::new(0.6, 0.5, 0.2, 0.2);
        let (v, g) = l1_box_loss(&pred, &gt);
        assert!((v - 0.1).abs() < 1e-12);
        assert_eq!(g, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn l1_matches_direct_recomputation() {
        let mut rng = ChaCha12Rng::seed_from_u64(103);
        for _ in 0..20 {
            let a = random_box(&mut rng);
            let b = random_box(&mut rng);
            let (v, _) = l1_box_loss(&a, &b);
            let direct = (a.cx - b.cx).abs()
                + (a.cy - b.cy).abs()
                + (a.w - b.w).abs()
                + (a.h - b.h).abs();
            assert!((v - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn giou_loss_identical_boxes_are_free() {
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.3);
        let (v, _) = giou_loss(&b, &b).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn giou_loss_hand_worked_pair() {
        // Corner boxes (0,0)-(2,2) and (1,1)-(3,3): IoU 1/7, union 7,
        // enclosure 9, GIoU = 1/7 - 2/9 = -5/63.
        let a = BoxCwh::new(1.0, 1.0, 2.0, 2.0);
        let b = BoxCwh::new(2.0, 2.0, 2.0, 2.0);
        let (v, _) = giou_loss(&a, &b).unwrap();
        assert!((v - (1.0 + 5.0 / 63.0)).abs() < 1e-12, "value {}", v);
        assert!((v - (1.0 - giou(&a, &b))).abs() < 1e-15);
    }

    #[test]
    fn giou_loss_gradient_matches_fd_on_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(107);
        for _ in 0..100 {
            let pred = random_box(&mut rng);
            let gt = random_box(&mut rng);
            let (v, g) = giou_loss(&pred, &gt).unwrap();
            assert!((v - (1.0 - giou(&pred, &gt))).abs() < 1e-12);
            for k in 0..4 {
                let mut plus = pred;
                let mut minus = pred;
                match k {
                    0 => {
                        plus.cx += H;
                        minus.cx -= H;
                    }
                    1 => {
                        plus.cy += H;
                        minus.cy -= H;
                    }
                    2 => {
                        plus.w += H;
                        minus.w -= H;
                    }
                    _ => {
                        plus.h += H;
                        minus.h -= H;
                    }
                }
                let (vp, _) = giou_loss(&plus, &gt).unwrap();
                let (vm, _) = giou_loss(&minus, &gt).unwrap();
                let fd = (vp - vm) / (2.0 * H);
                assert!(
                    (g[k] - fd).abs() <= 1e-4 * fd.abs().max(1e-3),
                    "coord {}: analytic {} fd {} (pred {:?} gt {:?})",
                    k,
                    g[k],
                    fd,
                    pred,
                    gt
                );
            }
        }
    }

    #[test]
    fn giou_loss_degenerate_conventions() {
        let (v, g) = giou_loss(&BoxCwh::ZERO, &BoxCwh::ZERO).unwrap();
        assert_eq!((v, g), (1.0, [0.0; 4]));
        assert!(giou_loss(&BoxCwh::new(0.5, 0.5, -0.1, 0.2), &BoxCwh::ZERO).is_err());
        // One degenerate box still follows the shared GIoU definition.
        let a = BoxCwh::new(0.5, 0.5, 0.0, 0.2);
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.2);
        let (v1, _) = giou_loss(&a, &b).unwrap();
        assert!((v1 - (1.0 - giou(&a, &b))).abs() < 1e-12);
    }

    #[test]
    fn giou_loss_stays_within_its_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(109);
        for i in 0..300 {
            let mut pred = random_box(&mut rng);
            if i % 7 == 0 {
                pred.w = 0.0;
            }
            let gt = random_box(&mut rng);
            let (v, _) = giou_loss(&pred, &gt).unwrap();
            assert!((0.0..=2.0).contains(&v), "value {}", v);
            assert!((v - (1.0 - giou(&pred, &gt))).abs() < 1e-12);
        }
    }

    #[test]
    fn track_loss_perfect_predictions_are_negligible() {
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.3);
        let entries = vec![candidate(b, 1.0, 1.0), candidate(BoxCwh::new(0.8, 0.8, 0.1, 0.1), 0.0, 0.0)];
        let targets = vec![matched(b, 1.0), background()];
        let r = track_loss(&entries, &targets, &LossWeights::default()).unwrap();
        assert!(r.total < 1e-10, "total {}", r.total);
        assert_eq!(r.n_visible, 1);
    }

    #[test]
    fn track_loss_matches_scalar_composition() {
        let w = LossWeights::default();
        let pred = BoxCwh::new(0.45, 0.5, 0.25, 0.2);
        let gt = BoxCwh::new(0.5, 0.48, 0.2, 0.22);
        let entries = vec![candidate(pred, 0.7, 0.6), candidate(BoxCwh::new(0.1, 0.1, 0.05, 0.05), 0.2, 0.9)];
        let targets = vec![matched(gt, 1.0), background()];
        let r = track_loss(&entries, &targets, &w).unwrap();

        let e_obj = focal_loss(0.7, 1.0, w.focal_alpha, w.focal_gamma).unwrap().0
            + focal_loss(0.2, 0.0, w.focal_alpha, w.focal_gamma).unwrap().0;
        let e_uni = focal_loss(0.6, 1.0, w.focal_alpha, w.focal_gamma).unwrap().0;
        let (e_l1, _) = l1_box_loss(&pred, &gt);
        let (e_giou, _) = giou_loss(&pred, &gt).unwrap();
        assert!((r.l_obj - e_obj).abs() < 1e-12);
        assert!((r.l_uni - e_uni).abs() < 1e-12);
        assert!((r.l_bbox - e_l1).abs() < 1e-12);
        assert!((r.l_iou - e_giou).abs() < 1e-12);
        let expected = (w.lambda_cls * (e_obj + e_uni) + w.lambda_l1 * (e_l1 + e_giou)) / 1.0;
        assert!((r.total - expected).abs() < 1e-12);

        let g_obj = focal_loss(0.7, 1.0, w.focal_alpha, w.focal_gamma).unwrap().1;
        assert!((r.grads[0].d_objectness - w.lambda_cls * g_obj).abs() < 1e-12);
    }

    #[test]
    fn track_loss_is_linear_in_lambda_cls() {
        let pred = BoxCwh::new(0.45, 0.5, 0.25, 0.2);
        let gt = BoxCwh::new(0.5, 0.48, 0.2, 0.22);
        let entries = vec![candidate(pred, 0.7, 0.6)];
        let targets = vec![matched(gt, 1.0)];
        let totals: Vec<f64> = [0.0, 3.0, 6.0]
            .iter()
            .map(|&lc| {
                let w = LossWeights::new(lc, 6.0, 3.0, 2.0, 2.0, 0.25, 2.0).unwrap();
                track_loss(&entries, &targets, &w).unwrap().total
            })
            .collect();
        let once = totals[1] - totals[0];
        let twice = totals[2] - totals[0];
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn box_supervision_without_visible_instances_is_rejected() {
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.3);
        let entries = vec![candidate(b, 0.5, 0.5)];
        let bad = vec![SupervisionTarget { objectness: 0.0, uniqueness: None, bbox: Some(b) }];
        assert!(track_loss(&entries, &bad, &LossWeights::default()).is_err());
        // All-background frames are fine and use normalizer 1.
        let ok = vec![background()];
        let r = track_loss(&entries, &ok, &LossWeights::default()).unwrap();
        assert_eq!(r.n_visible, 0);
        assert!(r.total > 0.0);
    }

    #[test]
    fn det_loss_drops_uniqueness_and_reweights_iou() {
        let w = LossWeights::default();
        let pred = BoxCwh::new(0.45, 0.5, 0.25, 0.2);
        let gt = BoxCwh::new(0.52, 0.48, 0.2, 0.22);
        let entries = vec![candidate(pred, 0.7, 0.6), candidate(BoxCwh::new(0.1, 0.1, 0.05, 0.05), 0.2, 0.9)];
        let targets = vec![matched(gt, 1.0), background()];
        let tr = track_loss(&entries, &targets, &w).unwrap();
        let de = det_loss(&entries, &targets, &w).unwrap();
        assert_eq!(de.l_uni, 0.0);
        assert_eq!(de.grads[0].d_uniqueness, 0.0);
        let n = tr.n_visible as f64;
        let gap = (w.lambda_cls * tr.l_uni + (w.lambda_l1 - w.lambda_iou) * tr.l_iou) / n;
        assert!((tr.total - de.total - gap).abs() < 1e-12);
    }

    #[test]
    fn det_loss_zero_weights_zero_loss() {
        let w = LossWeights::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.25, 2.0).unwrap();
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.3);
        let entries = vec![candidate(b, 0.7, 0.6)];
        let targets = vec![matched(b, 1.0)];
        let r = det_loss(&entries, &targets, &w).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(r.grads.iter().all(|g| *g == EntryGrad::default()));
    }

    #[test]
    fn composite_gradients_match_fd_through_the_whole_frame_loss() {
        let w = LossWeights::default();
        let pred = BoxCwh::new(0.45, 0.5, 0.25, 0.2);
        let gt = BoxCwh::new(0.5, 0.48, 0.2, 0.22);
        let targets = vec![matched(gt, 1.0)];
        let base = |o: f64, u: f64, cx: f64| -> f64 {
            let e = vec![candidate(BoxCwh::new(cx, pred.cy, pred.w, pred.h), o, u)];
            track_loss(&e, &targets, &w).unwrap().total
        };
        let r = track_loss(&[candidate(pred, 0.7, 0.6)], &targets, &w).unwrap();
        let fd_o = (base(0.7 + H, 0.6, pred.cx) - base(0.7 - H, 0.6, pred.cx)) / (2.0 * H);
        assert!((r.grads[0].d_objectness - fd_o).abs() <= 1e-5 * fd_o.abs());
        let fd_u = (base(0.7, 0.6 + H, pred.cx) - base(0.7, 0.6 - H, pred.cx)) / (2.0 * H);
        assert!((r.grads[0].d_uniqueness - fd_u).abs() <= 1e-5 * fd_u.abs());
        let fd_cx = (base(0.7, 0.6, pred.cx + H) - base(0.7, 0.6, pred.cx - H)) / (2.0 * H);
        assert!((r.grads[0].d_bbox[0] - fd_cx).abs() <= 1e-5 * fd_cx.abs().max(1e-3));
    }

    #[test]
    fn seq_loss_single_frame_composes_directly() {
        let w = LossWeights::default();
        let pred = BoxCwh::new(0.45, 0.5, 0.25, 0.2);
        let gt = BoxCwh::new(0.5, 0.48, 0.2, 0.22);
        let entries = vec![candidate(pred, 0.7, 0.6)];
        let targets = vec![matched(gt, 1.0)];
        let tr = track_loss(&entries, &targets, &w).unwrap();
        let de = det_loss(&entries, &targets, &w).unwrap();
        let got = seq_loss(&[tr.clone()], &[de.clone()], &w).unwrap();
        let want = w.lambda_track * tr.total + w.lambda_det * de.total;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn seq_loss_detached_aux_is_pure_tracking() {
        let w = LossWeights::default();
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.3);
        let entries = vec![candidate(b, 0.7, 0.6)];
        let targets = vec![matched(b, 1.0)];
        let tr = track_loss(&entries, &targets, &w).unwrap();
        let de = det_loss(&entries, &targets, &w).unwrap();
        let detached = w.with_detached_aux();
        let got = seq_loss(&[tr.clone()], &[de], &detached).unwrap();
        assert!((got - detached.lambda_track * tr.total).abs() < 1e-12);
    }

    #[test]
    fn seq_loss_three_frames_matches_hand_composition() {
        let w = LossWeights::default();
        let mut rng = ChaCha12Rng::seed_from_u64(113);
        let mut track_reports = Vec::new();
        let mut det_reports = Vec::new();
        for f in 0..3 {
            let n = 1 + f; // varying visible counts across frames
            let mut entries = Vec::new();
            let mut targets = Vec::new();
            for _ in 0..n {
                let gt = random_box(&mut rng);
                let mut pred = gt;
                pred.cx = (pred.cx + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
                entries.push(candidate(pred, rng.random_range(0.4..0.9), rng.random_range(0.4..0.9)));
                targets.push(matched(gt, 1.0));
            }
            entries.push(candidate(random_box(&mut rng), 0.1, 0.5));
            targets.push(background());
            track_reports.push(track_loss(&entries, &targets, &w).unwrap());
            det_reports.push(det_loss(&entries, &targets, &w).unwrap());
        }
        let got = seq_loss(&track_reports, &det_reports, &w).unwrap();

        let n_total: usize = track_reports.iter().map(|r| r.n_visible).sum();
        let mut track_sum = 0.0;
        for r in &track_reports {
            track_sum += w.lambda_cls * (r.l_obj + r.l_uni) + w.lambda_l1 * (r.l_bbox + r.l_iou);
        }
        let mut det_sum = 0.0;
        for r in &det_reports {
            det_sum += r.total;
        }
        let want = w.lambda_track * track_sum / n_total as f64 + w.lambda_det * det_sum;
        assert!((got - want).abs() < 1e-12, "got {} want {}", got, want);
        assert_eq!(n_total, 6);
    }

    #[test]
    fn seq_loss_rejects_empty_and_unequal_sequences() {
        let w = LossWeights::default();
        assert!(seq_loss(&[], &[], &w).is_err());
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.3);
        let entries = vec![candidate(b, 0.7, 0.6)];
        let targets = vec![matched(b, 1.0)];
        let tr = track_loss(&entries, &targets, &w).unwrap();
        assert!(seq_loss(&[tr], &[], &w).is_err());
    }

    #[test]
    fn components_are_non_negative_on_random_frames() {
        let mut rng = ChaCha12Rng::seed_from_u64(127);
        let w = LossWeights::default();
        for _ in 0..50 {
            let mut entries = Vec::new();
            let mut targets = Vec::new();
            for j in 0..4 {
                let b = random_box(&mut rng);
                entries.push(candidate(b, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)));
                if j < 2 {
                    targets.push(matched(random_box(&mut rng), if j == 0 { 1.0 } else { 0.0 }));
                } else {
                    targets.push(background());
                }
            }
            let r = track_loss(&entries, &targets, &w).unwrap();
            assert!(r.l_obj >= 0.0 && r.l_uni >= 0.0 && r.l_bbox >= 0.0 && r.l_iou >= 0.0);
            assert!(r.total >= 0.0);
        }
    }

    #[test]
    fn loss_weights_validate_and_fill_defaults_from_json() {
        assert!(LossWeights::new(-1.0, 6.0, 3.0, 2.0, 2.0, 0.25, 2.0).is_err());
        assert!(LossWeights::new(3.0, 6.0, 3.0, 2.0, 2.0, 1.5, 2.0).is_err());
        let w: LossWeights = serde_json::from_str(r#"{"lambda_cls": 1.0}"#).unwrap();
        assert_eq!(w.lambda_cls, 1.0);
        assert_eq!(w.lambda_l1, 6.0);
        assert_eq!(w.focal_gamma, 2.0);
        assert!(serde_json::from_str::<LossWeights>(r#"{"lambda_bogus": 1.0}"#).is_err());
    }

    #[test]
    fn loss_report_serializes_to_json() {
        let b = BoxCwh::new(0.4, 0.4, 0.2, 0.3);
        let r = track_loss(&[candidate(b, 0.7, 0.6)], &[matched(b, 1.0)], &LossWeights::default())
            .unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert!(v.get("total").is_some());
        assert!(v.get("l_obj").is_some());
        assert_eq!(v["grads"].as_array().unwrap().len(), 1);
    }
}
