//! Face tracking with amortized detection.
//!
//! A constant-velocity Kalman filter coasts each face box between detector
//! runs, so detection can execute only every N-th frame. Fresh detections
//! are matched to predicted boxes by maximum-IoU assignment; unmatched
//! detections spawn tracks, and tracks that coast too long die. One track —
//! the highest-scoring — is reported as the driver.

mod assignment;
mod kalman;

pub use assignment::{associate, Association};
pub use kalman::KalmanBox;

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::geometry::RoiBox;
use crate::num::{real, Real};

/// Diagonal noise model of the box filter, in pixel units. Indices follow
/// the state layout (u, v, s, r, du, dv, ds); measurements are (u, v, s, r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig<F> {
    pub initial_covariance: [F; 7],
    pub process_noise: [F; 7],
    pub measurement_noise: [F; 4],
}

impl<F: Real> Default for NoiseConfig<F> {
    fn default() -> Self {
        let r = |v: f64| real::<F>(v);
        Self {
            // Positions start fairly trusted, velocities unknown.
            initial_covariance: [r(10.0), r(10.0), r(10.0), r(10.0), r(1e4), r(1e4), r(1e4)],
            process_noise: [r(1.0), r(1.0), r(1.0), r(1.0), r(0.01), r(0.01), r(1e-4)],
            // Center sigma 1 px, scale sigma 10 px² (variance 100), aspect
            // loosely trusted.
            measurement_noise: [r(1.0), r(1.0), r(100.0), r(10.0)],
        }
    }
}

/// Tracker behavior knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig<F> {
    /// Run detection every N-th frame (1 = every frame).
    pub detection_interval: u64,
    /// Minimum IoU for a track/detection pairing to hold.
    pub iou_min: F,
    /// Frames a track may coast unseen before it dies.
    pub max_coast: u64,
    /// Updates required before a track is reported.
    pub min_hits: u64,
    pub noise: NoiseConfig<F>,
}

impl<F: Real> Default for TrackerConfig<F> {
    fn default() -> Self {
        Self {
            detection_interval: 1,
            iou_min: real(0.3),
            max_coast: 10,
            min_hits: 1,
            noise: NoiseConfig::default(),
        }
    }
}

impl<F: Real> TrackerConfig<F> {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.detection_interval == 0 {
            return Err(TrackerError::InvalidConfig("detection_interval must be >= 1".into()));
        }
        if !(self.iou_min > F::zero() && self.iou_min < F::one()) {
            return Err(TrackerError::InvalidConfig("iou_min must lie in (0, 1)".into()));
        }
        if self.min_hits == 0 {
            return Err(TrackerError::InvalidConfig("min_hits must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrackerError {
    #[error("frame {frame}: detections {} but the schedule {}",
        if *.supplied { "supplied" } else { "absent" },
        if *.supplied { "did not ask for them" } else { "requires them" })]
    SchedulerViolation { frame: u64, supplied: bool },
    #[error("innovation covariance is not invertible; check noise configuration")]
    NumericalFailure,
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
}

/// One live track.
#[derive(Debug, Clone)]
pub struct Track<F> {
    pub id: u64,
    pub kalman: KalmanBox<F>,
    /// Detection confidence of the last matched measurement.
    pub score: F,
}

/// Multi-track state machine; see the module docs for the lifecycle.
#[derive(Debug, Clone)]
pub struct SortTracker<F> {
    cfg: TrackerConfig<F>,
    tracks: Vec<Track<F>>,
    next_id: u64,
}

impl<F: Real> SortTracker<F> {
    pub fn new(cfg: TrackerConfig<F>) -> Result<Self, TrackerError> {
        cfg.validate()?;
        Ok(Self { cfg, tracks: Vec::new(), next_id: 0 })
    }

    pub fn config(&self) -> &TrackerConfig<F> {
        &self.cfg
    }

    /// Whether `step(frame_idx, ...)` must receive detections: on the
    /// N-frame cadence, and always when no track is alive (a lost face
    /// re-triggers detection immediately rather than waiting out the
    /// cadence).
    pub fn needs_detections(&self, frame_idx: u64) -> bool {
        frame_idx % self.cfg.detection_interval == 0 || self.tracks.is_empty()
    }

    /// Advance one frame. `dets` must be `Some` exactly when
    /// [`needs_detections`](Self::needs_detections) says so. Returns the
    /// reported driver box, if any track is mature enough.
    pub fn step(
        &mut self,
        frame_idx: u64,
        dets: Option<&[Detection<F>]>,
    ) -> Result<Option<RoiBox<F>>, TrackerError> {
        let needs = self.needs_detections(frame_idx);
        if needs != dets.is_some() {
            return Err(TrackerError::SchedulerViolation { frame: frame_idx, supplied: dets.is_some() });
        }
        let noise = self.cfg.noise;
        let predicted: Vec<_> = self.tracks.iter_mut().map(|t| t.kalman.predict(&noise)).collect();
        if let Some(dets) = dets {
            let assoc = associate(&predicted, dets, self.cfg.iou_min);
            for (ti, di) in assoc.matches {
                self.tracks[ti].kalman.update(&dets[di].bbox, &noise)?;
                self.tracks[ti].score = dets[di].score;
            }
            for di in assoc.unmatched_dets {
                self.tracks.push(Track {
                    id: self.next_id,
                    kalman: KalmanBox::new(&dets[di].bbox, &noise),
                    score: dets[di].score,
                });
                self.next_id += 1;
            }
        }
        self.tracks.retain(|t| t.kalman.time_since_update <= self.cfg.max_coast);
        Ok(self.driver().map(|t| {
            let b = t.kalman.bbox();
            RoiBox::new(b.x1, b.y1, b.width(), b.height(), t.score)
                .expect("track boxes have positive extent and valid scores")
        }))
    }

    /// The reported track: highest score among mature tracks, oldest id on
    /// ties (determinism).
    pub fn driver(&self) -> Option<&Track<F>> {
        self.tracks
            .iter()
            .filter(|t| t.kalman.hits >= self.cfg.min_hits)
            .max_by(|a, b| a.score.partial_cmp(&b.score).unwrap().then(b.id.cmp(&a.id)))
    }

    pub fn tracks(&self) -> &[Track<F>] {
        &self.tracks
    }
}
