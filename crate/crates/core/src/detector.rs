//! Detection post-processing: anchor decoding and non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BoundingBox, RoiBox};
use crate::num::{real, Real};

/// Anchor in normalized center-size coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorBox<F> {
    pub cx: F,
    pub cy: F,
    pub w: F,
    pub h: F,
}

impl<F: Real> PriorBox<F> {
    pub fn new(cx: F, cy: F, w: F, h: F) -> Result<Self, DetectorError> {
        if w <= F::zero() || h <= F::zero() {
            return Err(DetectorError::DegeneratePrior);
        }
        Ok(Self { cx, cy, w, h })
    }
}

/// One scored face box in normalized corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<F> {
    pub bbox: BoundingBox<F>,
    pub score: F,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectorError {
    #[error("prior box has non-positive extent")]
    DegeneratePrior,
    #[error("loc has {loc} entries, conf {conf}, priors {priors}; counts must match")]
    LengthMismatch { loc: usize, conf: usize, priors: usize },
    #[error("non-finite score at detection {0}")]
    NonFiniteScore(usize),
}

/// Center-variance decode of per-prior regression offsets.
///
/// For each prior: `cx' = cx + dx*v0*w`, `w' = w*exp(dw*v1)` (and likewise
/// for y/h), converted to corner form and clamped to the unit square.
/// Detections scoring at or below `score_threshold` are dropped; boxes
/// that collapse to zero extent after clamping are dropped too.
pub fn decode_anchors<F: Real>(
    loc: &[[F; 4]],
    conf: &[F],
    priors: &[PriorBox<F>],
    variances: (F, F),
    score_threshold: F,
) -> Result<Vec<Detection<F>>, DetectorError> {
    if loc.len() != priors.len() || conf.len() != priors.len() {
        return Err(DetectorError::LengthMismatch {
            loc: loc.len(),
            conf: conf.len(),
            priors: priors.len(),
        });
    }
    let half = real::<F>(0.5);
    let mut out = Vec::new();
    for (i, ((d, &score), p)) in loc.iter().zip(conf).zip(priors).enumerate() {
        if !score.is_finite() {
            return Err(DetectorError::NonFiniteScore(i));
        }
        if score <= score_threshold {
            continue;
        }
        let cx = p.cx + d[0] * variances.0 * p.w;
        let cy = p.cy + d[1] * variances.0 * p.h;
        let w = p.w * (d[2] * variances.1).exp();
        let h = p.h * (d[3] * variances.1).exp();
        let bbox = BoundingBox::new(cx - half * w, cy - half * h, cx + half * w, cy + half * h)
            .clamped_unit();
        if bbox.width() > F::zero() && bbox.height() > F::zero() {
            out.push(Detection { bbox, score });
        }
    }
    Ok(out)
}

/// Greedy non-maximum suppression.
///
/// Repeatedly keeps the highest-scoring remaining detection and discards
/// every remaining one whose IoU with it is strictly above
/// `iou_threshold`. Score ties break by input order (earlier wins), so the
/// result is deterministic. Output is sorted by descending score, at most
/// `max_out` entries.
pub fn nms<F: Real>(dets: &[Detection<F>], iou_threshold: F, max_out: usize) -> Vec<Detection<F>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap().then(a.cmp(&b)));
    let mut kept: Vec<Detection<F>> = Vec::new();
    let mut suppressed = vec![false; dets.len()];
    for &i in &order {
        if suppressed[i] || kept.len() == max_out {
            continue;
        }
        kept.push(dets[i]);
        for &j in &order {
            if !suppressed[j] && j != i && iou(&dets[i].bbox, &dets[j].bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

/// Convert a kept detection into the ROI form used for face crops.
pub fn detection_to_roi<F: Real>(
    det: &Detection<F>,
) -> Result<RoiBox<F>, crate::geometry::GeometryError> {
    RoiBox::from_corners(&det.bbox, det.score)
}
