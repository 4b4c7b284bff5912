//! Box regression losses: plain IoU loss and Wise-IoU (v1).
//!
//! Wise-IoU scales the IoU loss by a distance attention factor
//! `R = exp(((cx_p - cx_g)^2 + (cy_p - cy_g)^2) / D)`, where `D = W^2 + H^2` of the
//! smallest box enclosing both. `D` is treated as a constant when differentiating.

use thiserror::Error;

use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("loss is not differentiable here: boxes must overlap with positive intersection (width {iw}, height {ih})")]
    NonDifferentiable { iw: f64, ih: f64 },
}

/// A prediction and its matched ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPair {
    pub pred: BBox,
    pub gt: BBox,
}

impl BoxPair {
    pub fn new(pred: BBox, gt: BBox) -> Self {
        Self { pred, gt }
    }
}

/// Gradient with respect to the predicted box: `[d/dcx, d/dcy, d/dw, d/dh]`.
pub type Gradient = [f64; 4];

/// `1 - IoU`.
pub fn iou_loss(p: &BoxPair) -> f64 {
    1.0 - p.pred.iou(&p.gt)
}

/// Distance attention factor `R >= 1`.
pub fn wiou_factor(p: &BoxPair) -> f64 {
    (center_dist2(p) / enclosing_diag2(p)).exp()
}

/// `R * (1 - IoU)`.
pub fn wiou_loss(p: &BoxPair) -> f64 {
    wiou_factor(p) * iou_loss(p)
}

fn center_dist2(p: &BoxPair) -> f64 {
    let dx = p.pred.cx() - p.gt.cx();
    let dy = p.pred.cy() - p.gt.cy();
    dx * dx + dy * dy
}

fn enclosing_diag2(p: &BoxPair) -> f64 {
    let e = p.pred.enclosing(&p.gt);
    e.w() * e.w() + e.h() * e.h()
}

/// Derivative of `min(hi_p, hi_g) - max(lo_p, lo_g)` with respect to the
/// predicted center and size along one axis. Coincident edges take the mean of
/// the one-sided derivatives.
fn overlap_1d(lo_p: f64, hi_p: f64, lo_g: f64, hi_g: f64) -> (f64, f64, f64) {
    let step = |a: f64, b: f64| match a.partial_cmp(&b) {
        Some(std::cmp::Ordering::Less) => 1.0,
        Some(std::cmp::Ordering::Equal) => 0.5,
        _ => 0.0,
    };
    let d_hi = step(hi_p, hi_g);
    let d_lo = step(lo_g, lo_p);
    let len = hi_p.min(hi_g) - lo_p.max(lo_g);
    (len, d_hi - d_lo, 0.5 * (d_hi + d_lo))
}

/// IoU and its gradient with respect to the predicted box.
fn iou_and_gradient(p: &BoxPair) -> Result<(f64, Gradient), LossError> {
    let (a, g) = (&p.pred, &p.gt);
    let (iw, diw_dcx, diw_dw) = overlap_1d(a.x1(), a.x2(), g.x1(), g.x2());
    let (ih, dih_dcy, dih_dh) = overlap_1d(a.y1(), a.y2(), g.y1(), g.y2());
    if !(iw > 0.0 && ih > 0.0) {
        return Err(LossError::NonDifferentiable { iw: iw.max(0.0), ih: ih.max(0.0) });
    }
    let inter = iw * ih;
    let union = a.area() + g.area() - inter;
    let d_inter = [diw_dcx * ih, dih_dcy * iw, diw_dw * ih, dih_dh * iw];
    let d_area = [0.0, 0.0, a.h(), a.w()];
    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        grad[k] = (d_inter[k] * union - inter * d_union) / (union * union);
    }
    Ok((inter / union, grad))
}

/// Gradient of [`iou_loss`] with respect to the predicted box.
pub fn iou_loss_gradient(p: &BoxPair) -> Result<Gradient, LossError> {
    let (_, d_iou) = iou_and_gradient(p)?;
    Ok(d_iou.map(|d| -d))
}

/// Gradient of [`wiou_loss`] with respect to the predicted box, holding the
/// enclosing-box diagonal fixed.
pub fn loss_gradient(p: &BoxPair) -> Result<Gradient, LossError> {
    let (iou, d_iou) = iou_and_gradient(p)?;
    let d = enclosing_diag2(p);
    let r = (center_dist2(p) / d).exp();
    let dr = [
        r * 2.0 * (p.pred.cx() - p.gt.cx()) / d,
        r * 2.0 * (p.pred.cy() - p.gt.cy()) / d,
        0.0,
        0.0,
    ];
    let mut grad = [0.0; 4];
    for k in 0..4 {
        grad[k] = dr[k] * (1.0 - iou) - r * d_iou[k];
    }
    Ok(grad)
}
