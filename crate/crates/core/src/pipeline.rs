//! Frame-driven orchestration: detection scheduling, tracking, indicator
//! production, decision + alert state updates, and analytic latency
//! accounting.
//!
//! Per-frame perception work (payload validation, detection jitter) is
//! parallelizable across worker threads because it is a pure function of
//! the frame; tracking, decision, and the alert machine always run
//! strictly in frame order, so the output log is bit-identical no matter
//! how many workers are configured.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{
    DecisionConfig, DecisionError, DecisionOutput, DecisionUnit, ModuleId, RiskScores,
};
use crate::detector::Detection;
use crate::fsm::{DmsFsm, FsmConfig, FsmError, Phase, TransitionEvent};
use crate::geometry::{iou, BoundingBox, RoiBox};
use crate::indicators::{decode_output_vector, FaceIndicators, IndicatorError};
use crate::micronet::{MicronetError, Model, Tensor3};
use crate::num::{real, Real};
use crate::tracker::{SortTracker, TrackerConfig, TrackerError};

/// One face visible in a scenario frame: where it is and what the
/// perception stack would have reported for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFace<F> {
    pub bbox: BoundingBox<F>,
    pub score: F,
    pub indicators: FaceIndicators<F>,
}

/// Frame payload: either a raw image for the full perception stack, or
/// precomputed per-face indicators from a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub enum FramePayload<F> {
    Image(Tensor3<F>),
    Scenario { faces: Vec<ScenarioFace<F>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput<F> {
    pub frame: u64,
    pub timestamp_ms: u64,
    pub payload: FramePayload<F>,
}

/// What runs on a given frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    DetectAndInfer,
    InferOnly,
}

/// Detection runs on the N-frame cadence, and immediately when no track
/// is alive — a lost face must not wait out the cadence.
pub fn schedule(frame_idx: u64, track_alive: bool, detection_interval: u64) -> Schedule {
    debug_assert!(detection_interval >= 1);
    if frame_idx % detection_interval == 0 || !track_alive {
        Schedule::DetectAndInfer
    } else {
        Schedule::InferOnly
    }
}

/// Analytic per-stage cost model, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    /// Face detection network (amortized by the cadence).
    pub detect_ms: f64,
    /// Multi-task network inference.
    pub mt_infer_ms: f64,
    pub track_ms: f64,
    pub decide_ms: f64,
    /// Everything else per frame: pre/post-processing, transport.
    pub overhead_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { detect_ms: 7.58, mt_infer_ms: 1.73, track_ms: 0.30, decide_ms: 0.20, overhead_ms: 13.92 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let costs =
            [self.detect_ms, self.mt_infer_ms, self.track_ms, self.decide_ms, self.overhead_ms];
        if costs.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(PipelineError::InvalidConfig("latency costs must be finite and >= 0".into()))
        }
    }

    /// Cost paid on every frame regardless of scheduling.
    pub fn base_ms(&self) -> f64 {
        self.mt_infer_ms + self.track_ms + self.decide_ms + self.overhead_ms
    }

    pub fn frame_ms(&self, s: Schedule) -> f64 {
        match s {
            Schedule::DetectAndInfer => self.base_ms() + self.detect_ms,
            Schedule::InferOnly => self.base_ms(),
        }
    }
}

/// Output of the analytic latency simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub per_frame_ms: Vec<f64>,
    pub mean_ms: f64,
    pub frames: u64,
    pub detect_frames: u64,
}

/// Simulate the steady-state pipeline: detection every `n`-th frame with
/// the track alive throughout. For frame counts divisible by `n` the mean
/// is exactly `base + detect/n`.
pub fn simulate_latency(model: &LatencyModel, n: u64, frames: u64) -> LatencySummary {
    assert!(n >= 1, "detection interval must be >= 1");
    let per_frame_ms: Vec<f64> = (0..frames)
        .map(|i| model.frame_ms(schedule(i, true, n)))
        .collect();
    let detect_frames = frames.div_ceil(n);
    let mean_ms = if frames == 0 {
        0.0
    } else {
        model.base_ms() + model.detect_ms * detect_frames as f64 / frames as f64
    };
    LatencySummary { per_frame_ms, mean_ms, frames, detect_frames }
}

/// One processed frame in the state log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLogRecord<F> {
    pub frame: u64,
    pub timestamp_ms: u64,
    /// Driver track box, when a mature track exists.
    pub track: Option<RoiBox<F>>,
    /// Risk scores; absent while calibrating.
    pub scores: Option<RiskScores<F>>,
    pub global: Option<u8>,
    pub phase: Phase,
    pub cause: Option<ModuleId>,
    pub latency_ms: f64,
}

/// Full run output: one record per frame plus every committed transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLog<F> {
    pub records: Vec<StateLogRecord<F>>,
    pub events: Vec<TransitionEvent>,
}

impl<F> Default for StateLog<F> {
    fn default() -> Self {
        Self { records: Vec::new(), events: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig<F> {
    pub tracker: TrackerConfig<F>,
    pub decision: DecisionConfig<F>,
    pub fsm: FsmConfig,
    pub latency: LatencyModel,
    /// Worker threads for per-frame perception preparation.
    pub workers: usize,
    /// Uniform jitter half-width applied to scenario detection boxes.
    pub noise_std: F,
    pub noise_seed: u64,
    /// Square ROI expansion around the track box before resampling.
    pub roi_expand: F,
    /// Side length of the multi-task model input.
    pub roi_size: usize,
}

impl<F: Real> Default for PipelineConfig<F> {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            decision: DecisionConfig::default(),
            fsm: FsmConfig::default(),
            latency: LatencyModel::default(),
            workers: 1,
            noise_std: F::zero(),
            noise_seed: 0,
            roi_expand: real(0.25),
            roi_size: 160,
        }
    }
}

impl<F: Real> PipelineConfig<F> {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.latency.validate()?;
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.into()));
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        if !(self.noise_std >= F::zero()) {
            return bad("noise_std must be >= 0");
        }
        if !(self.roi_expand >= F::zero()) {
            return bad("roi_expand must be >= 0");
        }
        if self.roi_size == 0 {
            return bad("roi_size must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("frame {frame}: {source}")]
    Tracker { frame: u64, source: TrackerError },
    #[error("frame {frame}: {source}")]
    Decision { frame: u64, source: DecisionError },
    #[error("frame {frame}: {source}")]
    Fsm { frame: u64, source: FsmError },
    #[error("frame {frame}: {source}")]
    Model { frame: u64, source: MicronetError },
    #[error("frame {frame}: {source}")]
    Indicator { frame: u64, source: IndicatorError },
    #[error("frame indices must be consecutive from 0: expected {expected}, got {got}")]
    FrameOrder { expected: u64, got: u64 },
    #[error("frame {frame}: timestamp {got} precedes {prev}")]
    TimestampOrder { frame: u64, prev: u64, got: u64 },
    #[error("image payload supplied but no model is loaded")]
    MissingModel { frame: u64 },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

/// Per-frame pure perception output, computed before the sequential fold.
#[derive(Debug, Clone)]
struct Prepared<F> {
    detections: Vec<Detection<F>>,
    faces: Vec<(BoundingBox<F>, FaceIndicators<F>)>,
    image: bool,
}

/// The assembled frame processor. Owns every stateful stage.
pub struct Pipeline<F> {
    cfg: PipelineConfig<F>,
    tracker: SortTracker<F>,
    decision: DecisionUnit<F>,
    fsm: DmsFsm,
    model: Option<Model<F>>,
    last_timestamp: Option<u64>,
    next_frame: u64,
}

impl<F: Real> Pipeline<F> {
    pub fn new(cfg: PipelineConfig<F>) -> Result<Self, PipelineError> {
        Self::with_model(cfg, None)
    }

    pub fn with_model(cfg: PipelineConfig<F>, model: Option<Model<F>>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let tracker = SortTracker::new(cfg.tracker.clone())
            .map_err(|source| PipelineError::Tracker { frame: 0, source })?;
        let decision = DecisionUnit::new(cfg.decision.clone())
            .map_err(|source| PipelineError::Decision { frame: 0, source })?;
        let fsm = DmsFsm::new(cfg.fsm);
        Ok(Self { cfg, tracker, decision, fsm, model, last_timestamp: None, next_frame: 0 })
    }

    pub fn config(&self) -> &PipelineConfig<F> {
        &self.cfg
    }

    pub fn fsm(&self) -> &DmsFsm {
        &self.fsm
    }

    /// Process one frame end to end. Prefer [`run`](Self::run) for whole
    /// scenarios — it prepares perception in parallel.
    pub fn run_frame(
        &mut self,
        input: &FrameInput<F>,
    ) -> Result<(StateLogRecord<F>, Vec<TransitionEvent>), PipelineError> {
        let prepared = prepare_frame(input, self.cfg.noise_seed, self.cfg.noise_std);
        self.step_prepared(input, prepared)
    }

    /// Fold a whole frame stream into a state log.
    pub fn run(&mut self, inputs: &[FrameInput<F>]) -> Result<StateLog<F>, PipelineError> {
        let prepared = self.prepare_all(inputs);
        let mut log = StateLog::default();
        for (input, prep) in inputs.iter().zip(prepared) {
            let (record, events) = self.step_prepared(input, prep)?;
            log.records.push(record);
            log.events.extend(events);
        }
        Ok(log)
    }

    /// Pure per-frame stage, chunked across worker threads. Results are
    /// keyed by position, so thread count cannot affect the output.
    fn prepare_all(&self, inputs: &[FrameInput<F>]) -> Vec<Prepared<F>> {
        let workers = self.cfg.workers.min(inputs.len()).max(1);
        let seed = self.cfg.noise_seed;
        let noise = self.cfg.noise_std;
        if workers == 1 {
            return inputs.iter().map(|i| prepare_frame(i, seed, noise)).collect();
        }
        let chunk = inputs.len().div_ceil(workers);
        let mut out: Vec<Option<Prepared<F>>> = vec![None; inputs.len()];
        std::thread::scope(|scope| {
            let mut slots = out.as_mut_slice();
            let mut rest = inputs;
            for _ in 0..workers {
                let take = chunk.min(rest.len());
                let (ins, next_in) = rest.split_at(take);
                let (outs, next_out) = slots.split_at_mut(take);
                rest = next_in;
                slots = next_out;
                scope.spawn(move || {
                    for (slot, input) in outs.iter_mut().zip(ins) {
                        *slot = Some(prepare_frame(input, seed, noise));
                    }
                });
            }
        });
        out.into_iter().map(|p| p.expect("every slot prepared")).collect()
    }

    fn step_prepared(
        &mut self,
        input: &FrameInput<F>,
        prepared: Prepared<F>,
    ) -> Result<(StateLogRecord<F>, Vec<TransitionEvent>), PipelineError> {
        let frame = input.frame;
        if frame != self.next_frame {
            return Err(PipelineError::FrameOrder { expected: self.next_frame, got: frame });
        }
        if let Some(prev) = self.last_timestamp {
            if input.timestamp_ms < prev {
                return Err(PipelineError::TimestampOrder { frame, prev, got: input.timestamp_ms });
            }
        }
        self.next_frame += 1;
        self.last_timestamp = Some(input.timestamp_ms);
        let now = input.timestamp_ms;

        // Scheduling and tracking.
        let plan = schedule(frame, !self.tracker.tracks().is_empty(), self.cfg.tracker.detection_interval);
        debug_assert_eq!(plan == Schedule::DetectAndInfer, self.tracker.needs_detections(frame));
        let detections: Option<Vec<Detection<F>>> = match plan {
            Schedule::DetectAndInfer if prepared.image => {
                // No face-detection network is bundled; an image frame is
                // treated as a full-frame face candidate.
                Some(vec![Detection {
                    bbox: BoundingBox::new(F::zero(), F::zero(), F::one(), F::one()),
                    score: F::one(),
                }])
            }
            Schedule::DetectAndInfer => Some(prepared.detections.clone()),
            Schedule::InferOnly => None,
        };
        let driver = self
            .tracker
            .step(frame, detections.as_deref())
            .map_err(|source| PipelineError::Tracker { frame, source })?;

        // Indicator production for the tracked driver.
        let indicators: Option<FaceIndicators<F>> = match (&driver, prepared.image) {
            (Some(roi), true) => {
                let model = self.model.as_ref().ok_or(PipelineError::MissingModel { frame })?;
                let FramePayload::Image(image) = &input.payload else { unreachable!() };
                let crop = crop_roi(image, roi, self.cfg.roi_expand, self.cfg.roi_size);
                let raw = model.forward(&crop).map_err(|source| PipelineError::Model { frame, source })?;
                let ind = decode_output_vector(&raw, false)
                    .map_err(|source| PipelineError::Indicator { frame, source })?;
                Some(ind)
            }
            (Some(roi), false) => best_face(&prepared.faces, &roi.corners()),
            (None, _) => None,
        };

        // Decision and alert machine, strictly sequential.
        let output = match &indicators {
            Some(ind) => self.decision.observe(now, ind),
            None => self.decision.observe_absent(now),
        }
        .map_err(|source| PipelineError::Decision { frame, source })?;

        let mut events = Vec::new();
        let (scores, global, cause_in) = match output {
            DecisionOutput::Calibrating { .. } => (None, None, None),
            DecisionOutput::Report(r) => (Some(r.scores), Some(r.global), Some(r.cause)),
        };
        if let (Some(g), Some(c)) = (global, cause_in) {
            if let Some(e) = self.fsm.calibration_done(now) {
                events.push(e);
            }
            if let Some(e) =
                self.fsm.step(g, c, now).map_err(|source| PipelineError::Fsm { frame, source })?
            {
                events.push(e);
            }
        }

        let report = self.fsm.report(now);
        let record = StateLogRecord {
            frame,
            timestamp_ms: now,
            track: driver,
            scores,
            global,
            phase: report.phase,
            cause: report.cause,
            latency_ms: self.cfg.latency.frame_ms(plan),
        };
        Ok((record, events))
    }
}

/// Pure per-frame perception preparation. Scenario detections receive
/// deterministic jitter keyed by (seed, frame) so that runs are
/// reproducible no matter how frames are distributed over workers.
fn prepare_frame<F: Real>(input: &FrameInput<F>, seed: u64, noise_std: F) -> Prepared<F> {
    match &input.payload {
        FramePayload::Image(_) => Prepared { detections: Vec::new(), faces: Vec::new(), image: true },
        FramePayload::Scenario { faces } => {
            let mut rng = frame_rng(seed, input.frame);
            let detections = faces
                .iter()
                .map(|f| Detection {
                    bbox: jitter_box(&f.bbox, &mut rng, noise_std),
                    score: f.score,
                })
                .collect();
            let faces = faces.iter().map(|f| (f.bbox, f.indicators.clone())).collect();
            Prepared { detections, faces, image: false }
        }
    }
}

/// Independent stream per frame: a counter-mode RNG seeded by a mix of the
/// run seed and the frame index.
fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mixed = seed ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn jitter_box<F: Real>(bbox: &BoundingBox<F>, rng: &mut ChaCha8Rng, std: F) -> BoundingBox<F> {
    if std == F::zero() {
        return *bbox;
    }
    let mut draw = || real::<F>(rng.gen::<f64>() * 2.0 - 1.0) * std;
    let jittered = BoundingBox::new(
        bbox.x1 + draw(),
        bbox.y1 + draw(),
        bbox.x2 + draw(),
        bbox.y2 + draw(),
    );
    let eps = real::<F>(1e-3);
    if jittered.width() < eps || jittered.height() < eps {
        *bbox
    } else {
        jittered
    }
}

/// Indicators of the scenario face overlapping the tracked driver box, if
/// any overlaps at all.
fn best_face<F: Real>(
    faces: &[(BoundingBox<F>, FaceIndicators<F>)],
    driver: &BoundingBox<F>,
) -> Option<FaceIndicators<F>> {
    faces
        .iter()
        .map(|(b, ind)| (iou(b, driver), ind))
        .filter(|(overlap, _)| *overlap > F::zero())
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .map(|(_, ind)| ind.clone())
}

/// Square crop around the track box, expanded by `expand` on each side's
/// scale, bilinearly resampled to `size`×`size`. Box coordinates are
/// normalized to the image; sampling clamps at the image border.
pub fn crop_roi<F: Real>(image: &Tensor3<F>, roi: &RoiBox<F>, expand: F, size: usize) -> Tensor3<F> {
    let (c, h, w) = (image.channels(), image.height(), image.width());
    let (hf, wf) = (h as f64, w as f64);
    let to = |v: F| v.to_f64().unwrap();
    let cx = (to(roi.x) + to(roi.w) / 2.0) * wf;
    let cy = (to(roi.y) + to(roi.h) / 2.0) * hf;
    let side = (to(roi.w) * wf).max(to(roi.h) * hf) * (1.0 + to(expand));
    let left = cx - side / 2.0;
    let top = cy - side / 2.0;
    let step = side / size as f64;

    Tensor3::from_fn(c, size, size, |ch, oy, ox| {
        let sx = (left + (ox as f64 + 0.5) * step - 0.5).clamp(0.0, wf - 1.0);
        let sy = (top + (oy as f64 + 0.5) * step - 0.5).clamp(0.0, hf - 1.0);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        let p = |yy: usize, xx: usize| image.get(ch, yy, xx);
        let top_row = p(y0, x0) * real::<F>(1.0 - fx) + p(y0, x1) * real::<F>(fx);
        let bot_row = p(y1, x0) * real::<F>(1.0 - fx) + p(y1, x1) * real::<F>(fx);
        top_row * real::<F>(1.0 - fy) + bot_row * real::<F>(fy)
    })
}
