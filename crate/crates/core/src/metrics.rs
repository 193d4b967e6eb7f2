//! Offline evaluation metrics for comparing prediction files against
//! ground truth: landmark error normalized by interocular distance,
//! support-weighted accuracy, and circular angle error.

use crate::geometry::Point2;
use crate::indicators::{FaceIndicators, LandmarkSchema};
use crate::num::{real, real_usize, Real};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction has {pred} landmarks but ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("ground-truth interocular distance is degenerate")]
    DegenerateIod,
    #[error("supports sum to zero")]
    ZeroSupport,
    #[error("no evaluation pairs supplied")]
    Empty,
}

/// One prediction/ground-truth record pair.
#[derive(Debug, Clone)]
pub struct EvalPair<F> {
    pub predicted: FaceIndicators<F>,
    pub ground_truth: FaceIndicators<F>,
}

/// Mean landmark error normalized by the ground truth's interocular
/// distance (distance between the configured outer eye corners).
pub fn nme<F: Real>(
    pred: &[Point2<F>],
    gt: &[Point2<F>],
    schema: &LandmarkSchema,
) -> Result<F, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (a, b) = schema.iod;
    let iod = gt[a].distance(&gt[b]);
    if iod <= real::<F>(1e-9) {
        return Err(MetricsError::DegenerateIod);
    }
    let total = pred
        .iter()
        .zip(gt)
        .fold(F::zero(), |acc, (p, g)| acc + p.distance(g));
    Ok(total / (iod * real_usize(pred.len())))
}

/// Support-weighted mean of per-output accuracies: Σ aᵢsᵢ / Σ sᵢ.
pub fn weighted_accuracy<F: Real>(accuracies: &[F], supports: &[usize]) -> Result<F, MetricsError> {
    if accuracies.len() != supports.len() {
        return Err(MetricsError::LengthMismatch { pred: accuracies.len(), gt: supports.len() });
    }
    let total: usize = supports.iter().sum();
    if total == 0 {
        return Err(MetricsError::ZeroSupport);
    }
    let weighted = accuracies
        .iter()
        .zip(supports)
        .fold(F::zero(), |acc, (&a, &s)| acc + a * real_usize(s));
    Ok(weighted / real_usize(total))
}

/// Angular distance in degrees, wrapped to [0, 180]. Inputs are radians.
pub fn circular_error_deg<F: Real>(a: F, b: F) -> F {
    let full = real::<F>(360.0);
    let delta = ((a - b).to_degrees() % full).abs();
    delta.min(full - delta)
}

/// Per-component circular pose error (yaw, pitch, roll), degrees.
pub fn pose_error_deg<F: Real>(pred: &[F; 3], gt: &[F; 3]) -> [F; 3] {
    [
        circular_error_deg(pred[0], gt[0]),
        circular_error_deg(pred[1], gt[1]),
        circular_error_deg(pred[2], gt[2]),
    ]
}

/// Aggregate evaluation over record pairs: mean NME, mean pose errors, and
/// binarized eye-openness accuracy at `eye_threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary<F> {
    pub mean_nme: F,
    pub mean_pose_error_deg: [F; 3],
    pub eye_accuracy: F,
    pub pairs: usize,
}

pub fn evaluate_pairs<F: Real>(
    pairs: &[EvalPair<F>],
    schema: &LandmarkSchema,
    eye_threshold: F,
) -> Result<EvalSummary<F>, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut nme_sum = F::zero();
    let mut pose_sum = [F::zero(); 3];
    let mut eye_hits = 0usize;
    let mut eye_total = 0usize;
    for pair in pairs {
        nme_sum += nme(&pair.predicted.landmarks, &pair.ground_truth.landmarks, schema)?;
        let pe = pose_error_deg(&pair.predicted.head, &pair.ground_truth.head);
        for (s, e) in pose_sum.iter_mut().zip(pe) {
            *s += e;
        }
        for eye in 0..2 {
            eye_total += 1;
            let p = pair.predicted.eye_open[eye] >= eye_threshold;
            let g = pair.ground_truth.eye_open[eye] >= eye_threshold;
            if p == g {
                eye_hits += 1;
            }
        }
    }
    let n = real_usize::<F>(pairs.len());
    Ok(EvalSummary {
        mean_nme: nme_sum / n,
        mean_pose_error_deg: [pose_sum[0] / n, pose_sum[1] / n, pose_sum[2] / n],
        eye_accuracy: real_usize::<F>(eye_hits) / real_usize(eye_total),
        pairs: pairs.len(),
    })
}
