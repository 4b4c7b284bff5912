//! Axis-aligned boxes in center/size form.
//!
//! Every box that exists as a [`BBox`] has finite coordinates and strictly
//! positive width and height; degenerate boxes are rejected at construction so
//! that downstream area and size divisions never see zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid box (cx {cx}, cy {cy}, w {w}, h {h}): width and height must be positive and finite")]
    InvalidBox { cx: f64, cy: f64, w: f64, h: f64 },
    #[error("box lies entirely outside the {img_w}x{img_h} image")]
    EmptyBox { img_w: f64, img_h: f64 },
    #[error("image size must be positive, got {img_w}x{img_h}")]
    InvalidImage { img_w: f64, img_h: f64 },
}

/// Axis-aligned box stored as center and size, in pixels with `y` growing downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl TryFrom<RawBox> for BBox {
    type Error = GeometryError;

    fn try_from(raw: RawBox) -> Result<Self, Self::Error> {
        BBox::new(raw.cx, raw.cy, raw.w, raw.h)
    }
}

impl From<BBox> for RawBox {
    fn from(b: BBox) -> Self {
        RawBox { cx: b.cx, cy: b.cy, w: b.w, h: b.h }
    }
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let finite = cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::InvalidBox { cx, cy, w, h });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from corner form `[x1, y1, x2, y2]`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    #[inline]
    pub fn cx(&self) -> f64 {
        self.cx
    }

    #[inline]
    pub fn cy(&self) -> f64 {
        self.cy
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    #[inline]
    pub fn y1(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    #[inline]
    pub fn x2(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    #[inline]
    pub fn y2(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    /// Corner form `[x1, y1, x2, y2]`.
    pub fn corners(&self) -> [f64; 4] {
        [self.x1(), self.y1(), self.x2(), self.y2()]
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.x2().min(other.x2()) - self.x1().max(other.x1());
        let ih = self.y2().min(other.y2()) - self.y1().max(other.y1());
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Intersection over union, in `[0, 1]`.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        // Areas from corners, so that identical boxes give exactly 1.
        let area_a = (self.x2() - self.x1()) * (self.y2() - self.y1());
        let area_b = (other.x2() - other.x1()) * (other.y2() - other.y1());
        (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
    }

    /// Smallest axis-aligned box containing both boxes.
    pub fn enclosing(&self, other: &BBox) -> BBox {
        if self.contains(other) {
            return *self;
        }
        if other.contains(self) {
            return *other;
        }
        let x1 = self.x1().min(other.x1());
        let y1 = self.y1().min(other.y1());
        let x2 = self.x2().max(other.x2());
        let y2 = self.y2().max(other.y2());
        // Both inputs are valid, so the hull has positive extent.
        BBox { cx: (x1 + x2) / 2.0, cy: (y1 + y2) / 2.0, w: x2 - x1, h: y2 - y1 }
    }

    /// `true` if `other` lies inside `self` (edges may touch).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x1() <= other.x1() && self.y1() <= other.y1() && self.x2() >= other.x2() && self.y2() >= other.y2()
    }

    /// Intersects the box with `[0, img_w] x [0, img_h]`.
    pub fn clip_to_image(&self, img_w: f64, img_h: f64) -> Result<BBox, GeometryError> {
        if !(img_w > 0.0 && img_h > 0.0) {
            return Err(GeometryError::InvalidImage { img_w, img_h });
        }
        let x1 = self.x1().max(0.0);
        let y1 = self.y1().max(0.0);
        let x2 = self.x2().min(img_w);
        let y2 = self.y2().min(img_h);
        if x2 <= x1 || y2 <= y1 {
            return Err(GeometryError::EmptyBox { img_w, img_h });
        }
        if x1 == self.x1() && y1 == self.y1() && x2 == self.x2() && y2 == self.y2() {
            return Ok(*self);
        }
        BBox::from_corners(x1, y1, x2, y2)
    }

    /// Applies `x -> scale * x + dx`, `y -> scale * y + dy` to the box.
    pub fn scale_shift(&self, scale: f64, dx: f64, dy: f64) -> Result<BBox, GeometryError> {
        BBox::new(scale * self.cx + dx, scale * self.cy + dy, scale * self.w, scale * self.h)
    }

    /// Lexicographic total order on `(cx, cy, w, h)`, used as a final tie-break key.
    pub fn total_cmp(&self, other: &BBox) -> std::cmp::Ordering {
        self.cx
            .total_cmp(&other.cx)
            .then(self.cy.total_cmp(&other.cy))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

pub fn enclosing_box(a: &BBox, b: &BBox) -> BBox {
    a.enclosing(b)
}

pub fn clip_to_image(b: &BBox, img_w: f64, img_h: f64) -> Result<BBox, GeometryError> {
    b.clip_to_image(img_w, img_h)
}
