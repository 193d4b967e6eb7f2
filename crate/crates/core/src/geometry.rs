//! Points and boxes shared by the detector, tracker, and metrics.

use serde::{Deserialize, Serialize};

use crate::num::{real, Real};

/// 2-D point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2<F> {
    pub x: F,
    pub y: F,
}

impl<F: Real> Point2<F> {
    pub fn new(x: F, y: F) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> F {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Axis-aligned box in corner form. Units are whatever the caller uses
/// consistently (normalized or pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<F> {
    pub x1: F,
    pub y1: F,
    pub x2: F,
    pub y2: F,
}

impl<F: Real> BoundingBox<F> {
    pub fn new(x1: F, y1: F, x2: F, y2: F) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> F {
        self.x2 - self.x1
    }

    pub fn height(&self) -> F {
        self.y2 - self.y1
    }

    pub fn area(&self) -> F {
        let w = (self.x2 - self.x1).max(F::zero());
        let h = (self.y2 - self.y1).max(F::zero());
        w * h
    }

    pub fn center(&self) -> Point2<F> {
        let two = real::<F>(2.0);
        Point2::new((self.x1 + self.x2) / two, (self.y1 + self.y2) / two)
    }

    /// Clamp corners into `[0, 1]`, preserving corner ordering.
    pub fn clamped_unit(&self) -> Self {
        let clamp = |v: F| v.max(F::zero()).min(F::one());
        Self::new(clamp(self.x1), clamp(self.y1), clamp(self.x2), clamp(self.y2))
    }

    pub fn scaled(&self, sx: F, sy: F) -> Self {
        Self::new(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy)
    }
}

/// Intersection-over-union of two corner boxes. Zero when disjoint or when
/// the union is degenerate.
pub fn iou<F: Real>(a: &BoundingBox<F>, b: &BoundingBox<F>) -> F {
    let ix1 = a.x1.max(b.x1);
    let iy1 = a.y1.max(b.y1);
    let ix2 = a.x2.min(b.x2);
    let iy2 = a.y2.min(b.y2);
    let iw = (ix2 - ix1).max(F::zero());
    let ih = (iy2 - iy1).max(F::zero());
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= F::zero() {
        F::zero()
    } else {
        inter / union
    }
}

/// Face region of interest in pixel coordinates with a detection confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox<F> {
    pub x: F,
    pub y: F,
    pub w: F,
    pub h: F,
    pub score: F,
}

impl<F: Real> RoiBox<F> {
    /// Build a ROI, checking `w > 0`, `h > 0`, `score` in `[0, 1]`.
    pub fn new(x: F, y: F, w: F, h: F, score: F) -> Result<Self, GeometryError> {
        if w <= F::zero() || h <= F::zero() {
            return Err(GeometryError::EmptyExtent);
        }
        if score < F::zero() || score > F::one() {
            return Err(GeometryError::ScoreOutOfRange);
        }
        Ok(Self { x, y, w, h, score })
    }

    pub fn from_corners(b: &BoundingBox<F>, score: F) -> Result<Self, GeometryError> {
        Self::new(b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1, score)
    }

    pub fn corners(&self) -> BoundingBox<F> {
        BoundingBox::new(self.x, self.y, self.x + self.w, self.y + self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("box has non-positive width or height")]
    EmptyExtent,
    #[error("score outside [0, 1]")]
    ScoreOutOfRange,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox<f64> {
        BoundingBox::new(x1, y1, x2, y2)
    }

    #[test]
    fn iou_identical_is_one() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = bx(0.0, 0.0, 1.0, 1.0);
        let b = bx(5.0, 5.0, 6.0, 6.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_hand_geometry() {
        // (0,0,10,10) vs (1,1,11,11): intersection 81, union 119.
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(1.0, 1.0, 11.0, 11.0);
        let expected = 81.0 / 119.0;
        assert!((iou(&a, &b) - expected).abs() < 1e-12);
    }

    /// Rasterization cross-check of the closed-form IoU on integer boxes.
    fn iou_rasterized(a: &BoundingBox<f64>, b: &BoundingBox<f64>) -> f64 {
        let inside = |bx: &BoundingBox<f64>, x: i64, y: i64| {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            cx > bx.x1 && cx < bx.x2 && cy > bx.y1 && cy < bx.y2
        };
        let (mut inter, mut uni) = (0u64, 0u64);
        for x in -2..40 {
            for y in -2..40 {
                let ia = inside(a, x, y);
                let ib = inside(b, x, y);
                if ia && ib {
                    inter += 1;
                }
                if ia || ib {
                    uni += 1;
                }
            }
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn iou_matches_pixel_rasterization() {
        let cases = [
            (bx(0.0, 0.0, 10.0, 10.0), bx(1.0, 1.0, 11.0, 11.0)),
            (bx(0.0, 0.0, 4.0, 4.0), bx(2.0, 2.0, 6.0, 6.0)),
            (bx(0.0, 0.0, 8.0, 2.0), bx(0.0, 0.0, 2.0, 8.0)),
        ];
        for (a, b) in cases {
            assert!((iou(&a, &b) - iou_rasterized(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn roi_rejects_bad_extent_and_score() {
        assert_eq!(
            RoiBox::new(0.0, 0.0, 0.0, 5.0, 0.5),
            Err(GeometryError::EmptyExtent)
        );
        assert_eq!(
            RoiBox::new(0.0, 0.0, 5.0, 5.0, 1.5),
            Err(GeometryError::ScoreOutOfRange)
        );
        let roi = RoiBox::new(1.0, 2.0, 3.0, 4.0, 0.9).unwrap();
        let c = roi.corners();
        assert_eq!((c.x1, c.y1, c.x2, c.y2), (1.0, 2.0, 4.0, 6.0));
    }
}
