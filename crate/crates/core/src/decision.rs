//! Driver-state heuristics: calibration, PERCLOS, yawn/action frequencies,
//! head deviation, two-tier risk scores, worst-case arbitration, and the
//! composite safeness score.
//!
//! All metrics are computed over sliding time windows keyed by millisecond
//! timestamps, so frame rate never changes the semantics. The composite
//! safeness value is telemetry only; state transitions are driven purely by
//! the worst component level (see [`global_state`]).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::indicators::{ActionClass, FaceIndicators, MouthState};
use crate::num::{real, real_usize, Real};

/// Risk modules, in root-cause priority order (highest first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModuleId {
    Perclos,
    HeadPose,
    Mouth,
    Cellphone,
    Smoking,
}

impl ModuleId {
    pub const ALL: [ModuleId; 5] = [
        ModuleId::Perclos,
        ModuleId::HeadPose,
        ModuleId::Mouth,
        ModuleId::Cellphone,
        ModuleId::Smoking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModuleId::Perclos => "perclos",
            ModuleId::HeadPose => "headpose",
            ModuleId::Mouth => "mouth",
            ModuleId::Cellphone => "cellphone",
            ModuleId::Smoking => "smoking",
        }
    }
}

/// Per-driver reference levels captured while the driver is alert.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline<F> {
    /// Typical openness level of the driver's eyes.
    pub ear_open: F,
    /// Resting head pose (yaw, pitch, roll), radians.
    pub head_zero: [F; 3],
    pub sample_count: usize,
    pub completed: bool,
}

/// Two-tier threshold pair; scores compare strictly against each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierThresholds<F> {
    pub low: F,
    pub high: F,
}

impl<F: Real> TierThresholds<F> {
    pub fn new(low: F, high: F) -> Self {
        Self { low, high }
    }

    fn validate(&self, name: &str) -> Result<(), DecisionError> {
        if self.low < self.high {
            Ok(())
        } else {
            Err(DecisionError::InvalidConfig(format!("{name}: low must be < high")))
        }
    }
}

/// Every tunable of the decision stage. Defaults are desk-calibrated
/// working values; deployments override them via the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionConfig<F> {
    /// PERCLOS percent thresholds.
    pub perclos: TierThresholds<F>,
    /// Yawns-per-minute thresholds.
    pub yawn_rate: TierThresholds<F>,
    /// Normalized head-deviation thresholds.
    pub head: TierThresholds<F>,
    /// Phone-use frame-fraction thresholds.
    pub cellphone: TierThresholds<F>,
    /// Smoking frame-fraction thresholds.
    pub smoking: TierThresholds<F>,
    /// Safeness weights (perclos, mouth, head, action).
    pub lambda: [F; 4],
    /// An eye counts as closed below (1 - closed_fraction) of baseline.
    pub closed_fraction: F,
    /// Mouth must stay open this long to count as a yawn.
    pub yawn_min_ms: u64,
    pub perclos_window_ms: u64,
    /// Window for yawn and action frequencies.
    pub event_window_ms: u64,
    pub head_window_ms: u64,
    /// Head deviation normalizer, radians.
    pub theta_max: F,
    pub min_calibration_samples: usize,
    /// Eye visibility required for the eye to count as observed.
    pub eye_viz_min: F,
}

impl<F: Real> Default for DecisionConfig<F> {
    fn default() -> Self {
        let r = |v: f64| real::<F>(v);
        Self {
            perclos: TierThresholds::new(r(15.0), r(40.0)),
            yawn_rate: TierThresholds::new(r(0.5), r(2.5)),
            head: TierThresholds::new(r(0.4), r(0.8)),
            cellphone: TierThresholds::new(r(0.3), r(0.6)),
            smoking: TierThresholds::new(r(0.3), r(0.6)),
            lambda: [F::one(); 4],
            closed_fraction: r(0.8),
            yawn_min_ms: 400,
            perclos_window_ms: 60_000,
            event_window_ms: 60_000,
            head_window_ms: 10_000,
            theta_max: r(std::f64::consts::FRAC_PI_6),
            min_calibration_samples: 100,
            eye_viz_min: r(0.5),
        }
    }
}

impl<F: Real> DecisionConfig<F> {
    pub fn validate(&self) -> Result<(), DecisionError> {
        self.perclos.validate("perclos")?;
        self.yawn_rate.validate("yawn_rate")?;
        self.head.validate("head")?;
        self.cellphone.validate("cellphone")?;
        self.smoking.validate("smoking")?;
        let bad = |m: String| Err(DecisionError::InvalidConfig(m));
        if self.lambda.iter().any(|&l| l < F::zero()) {
            return bad("lambda weights must be non-negative".into());
        }
        if !(self.closed_fraction > F::zero() && self.closed_fraction < F::one()) {
            return bad("closed_fraction must lie in (0, 1)".into());
        }
        if self.theta_max <= F::zero() {
            return bad("theta_max must be positive".into());
        }
        if self.perclos_window_ms == 0 || self.event_window_ms == 0 || self.head_window_ms == 0 {
            return bad("window lengths must be positive".into());
        }
        if self.min_calibration_samples == 0 {
            return bad("min_calibration_samples must be >= 1".into());
        }
        Ok(())
    }
}

/// Component risk levels plus the composite safeness value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskScores<F> {
    pub perclos: u8,
    pub mouth: u8,
    pub headpose: u8,
    pub cellphone: u8,
    pub smoking: u8,
    pub safeness: F,
}

impl<F: Real> RiskScores<F> {
    pub fn component(&self, m: ModuleId) -> u8 {
        match m {
            ModuleId::Perclos => self.perclos,
            ModuleId::HeadPose => self.headpose,
            ModuleId::Mouth => self.mouth,
            ModuleId::Cellphone => self.cellphone,
            ModuleId::Smoking => self.smoking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecisionError {
    #[error("baseline calibration has not completed")]
    NotCalibrated,
    #[error("sample has no observable eyes")]
    InvalidSample,
    #[error("sliding window holds no samples")]
    EmptyWindow,
    #[error("timestamps must increase strictly: {prev} then {got}")]
    NonMonotonicTime { prev: u64, got: u64 },
    #[error("invalid decision configuration: {0}")]
    InvalidConfig(String),
}

/// Two-tier level: `[metric > low] + [metric > high]`, both strict.
pub fn tiered_score<F: Real>(metric: F, tiers: &TierThresholds<F>) -> u8 {
    u8::from(metric > tiers.low) + u8::from(metric > tiers.high)
}

/// Worst component level — the value that drives alert transitions.
pub fn global_state<F: Real>(s: &RiskScores<F>) -> u8 {
    ModuleId::ALL.iter().map(|&m| s.component(m)).max().unwrap()
}

/// Component attaining the worst level; ties break by the fixed priority
/// perclos > headpose > mouth > cellphone > smoking.
pub fn root_cause<F: Real>(s: &RiskScores<F>) -> ModuleId {
    let top = global_state(s);
    ModuleId::ALL.into_iter().find(|&m| s.component(m) == top).unwrap()
}

/// Composite telemetry value, evaluated with the documented literal signs:
/// `λ1·S_perclos − λ2·S_mouth − λ3·(1 − S_head) − λ4·(1 − S_action)` where
/// `S_action = max(cellphone, smoking)`. It never drives transitions.
pub fn safeness_score<F: Real>(
    perclos: u8,
    mouth: u8,
    head: u8,
    cellphone: u8,
    smoking: u8,
    lambda: &[F; 4],
) -> F {
    let s = |v: u8| real_usize::<F>(v as usize);
    let action = cellphone.max(smoking);
    lambda[0] * s(perclos) - lambda[1] * s(mouth) - lambda[2] * (F::one() - s(head))
        - lambda[3] * (F::one() - s(action))
}

/// Per-frame eye observation derived from the indicator vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EyeFrame {
    /// At least one eye was visible.
    pub observed: bool,
    /// Every visible eye was under the closed threshold.
    pub closed: bool,
}

/// Classify one frame's eyes against the calibrated baseline.
pub fn classify_eye_closed<F: Real>(
    eye_open: &[F; 2],
    eye_viz: &[F; 2],
    baseline: &Baseline<F>,
    closed_fraction: F,
    viz_min: F,
) -> Result<EyeFrame, DecisionError> {
    if !baseline.completed {
        return Err(DecisionError::NotCalibrated);
    }
    let threshold = (F::one() - closed_fraction) * baseline.ear_open;
    let mut observed = false;
    let mut closed = true;
    for eye in 0..2 {
        if eye_viz[eye] >= viz_min {
            observed = true;
            closed = closed && eye_open[eye] < threshold;
        }
    }
    Ok(EyeFrame { observed, closed: observed && closed })
}

/// Normalized head deviation: worst of |yaw − yaw0| and |pitch − pitch0|,
/// over `theta_max`. Roll is ignored — tilting the head in-plane is not a
/// gaze diversion.
pub fn head_deviation<F: Real>(
    pose: &[F; 3],
    baseline: &Baseline<F>,
    theta_max: F,
) -> Result<F, DecisionError> {
    if !baseline.completed {
        return Err(DecisionError::NotCalibrated);
    }
    let dy = (pose[0] - baseline.head_zero[0]).abs();
    let dp = (pose[1] - baseline.head_zero[1]).abs();
    Ok(dy.max(dp) / theta_max)
}

/// Events per minute: onsets within `(now − window_ms, now]`, rescaled.
pub fn event_frequency<F: Real>(onsets: &[u64], window_ms: u64, now: u64) -> F {
    let cutoff = now.saturating_sub(window_ms);
    let count = onsets.iter().filter(|&&t| t > cutoff && t <= now).count();
    real_usize::<F>(count) * real::<F>(60_000.0) / real_usize::<F>(window_ms as usize)
}

/// PERCLOS reading; `sufficient` is false when too little of the window was
/// observed to trust the percentage (the percent is then 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerclosReading<F> {
    pub percent: F,
    pub sufficient: bool,
    pub observed_ms: u64,
    pub closed_ms: u64,
}

/// Time-weighted ring of per-frame eye observations.
///
/// Each sample holds from its own timestamp until the next sample (the
/// final sample holds until `now`), so PERCLOS is a true time ratio and
/// uneven frame spacing is handled for free.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    window_ms: u64,
    samples: VecDeque<(u64, bool, bool)>,
}

impl SlidingWindow {
    pub fn new(window_ms: u64) -> Self {
        Self { window_ms, samples: VecDeque::new() }
    }

    pub fn push(&mut self, timestamp_ms: u64, observed: bool, closed: bool) -> Result<(), DecisionError> {
        if let Some(&(prev, _, _)) = self.samples.back() {
            if timestamp_ms <= prev {
                return Err(DecisionError::NonMonotonicTime { prev, got: timestamp_ms });
            }
        }
        self.samples.push_back((timestamp_ms, observed, observed && closed));
        self.evict(timestamp_ms);
        Ok(())
    }

    fn evict(&mut self, now: u64) {
        let cutoff = now.saturating_sub(self.window_ms);
        while let Some(&(t, _, _)) = self.samples.front() {
            if t < cutoff {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Percentage of observed time with eyes closed; see [`PerclosReading`].
    pub fn perclos<F: Real>(&mut self, now: u64) -> Result<PerclosReading<F>, DecisionError> {
        self.evict(now);
        if self.samples.is_empty() {
            return Err(DecisionError::EmptyWindow);
        }
        let mut observed_ms = 0u64;
        let mut closed_ms = 0u64;
        let mut it = self.samples.iter().peekable();
        while let Some(&(t, observed, closed)) = it.next() {
            let until = it.peek().map_or(now.max(t), |&&(next, _, _)| next);
            let span = until - t;
            if observed {
                observed_ms += span;
                if closed {
                    closed_ms += span;
                }
            }
        }
        if observed_ms * 4 < self.window_ms {
            return Ok(PerclosReading { percent: F::zero(), sufficient: false, observed_ms, closed_ms });
        }
        let percent = real::<F>(100.0) * real_usize::<F>(closed_ms as usize)
            / real_usize::<F>(observed_ms as usize);
        Ok(PerclosReading { percent, sufficient: true, observed_ms, closed_ms })
    }
}

/// Running calibration of a driver's baseline.
#[derive(Debug, Clone)]
pub struct Calibrator<F> {
    openness: Vec<F>,
    head: Vec<[F; 3]>,
    min_samples: usize,
    viz_min: F,
}

impl<F: Real> Calibrator<F> {
    pub fn new(min_samples: usize, viz_min: F) -> Self {
        Self { openness: Vec::new(), head: Vec::new(), min_samples, viz_min }
    }

    pub fn samples(&self) -> usize {
        self.openness.len()
    }

    pub fn required(&self) -> usize {
        self.min_samples
    }

    /// Accumulate one sample; completes with `Some(baseline)` once the
    /// minimum count is reached. A sample with no visible eye is rejected
    /// (and not counted) — calibration simply waits for a usable frame.
    pub fn step(&mut self, ind: &FaceIndicators<F>) -> Result<Option<Baseline<F>>, DecisionError> {
        let visible: Vec<F> = (0..2)
            .filter(|&e| ind.eye_viz[e] >= self.viz_min)
            .map(|e| ind.eye_open[e])
            .collect();
        if visible.is_empty() {
            return Err(DecisionError::InvalidSample);
        }
        let mean = visible.iter().fold(F::zero(), |a, &b| a + b) / real_usize(visible.len());
        self.openness.push(mean);
        self.head.push(ind.head);
        if self.openness.len() < self.min_samples {
            return Ok(None);
        }
        Ok(Some(Baseline {
            ear_open: median(&mut self.openness.clone()),
            head_zero: circular_mean(&self.head),
            sample_count: self.openness.len(),
            completed: true,
        }))
    }
}

fn median<F: Real>(values: &mut [F]) -> F {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / real::<F>(2.0)
    }
}

/// Per-component circular mean, robust to angle wrap-around.
fn circular_mean<F: Real>(angles: &[[F; 3]]) -> [F; 3] {
    let mut out = [F::zero(); 3];
    for (i, o) in out.iter_mut().enumerate() {
        let (mut s, mut c) = (F::zero(), F::zero());
        for a in angles {
            s += a[i].sin();
            c += a[i].cos();
        }
        *o = s.atan2(c);
    }
    out
}

/// Everything the decision stage says about one frame, post-calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport<F> {
    pub perclos_pct: F,
    pub perclos_sufficient: bool,
    pub yawn_rate_per_min: F,
    pub head_deviation: F,
    pub cellphone_fraction: F,
    pub smoking_fraction: F,
    pub scores: RiskScores<F>,
    /// Worst component level in {0, 1, 2}.
    pub global: u8,
    pub cause: ModuleId,
}

/// Per-frame outcome of [`DecisionUnit::observe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionOutput<F> {
    /// Still collecting the baseline.
    Calibrating { samples: usize, required: usize },
    Report(DecisionReport<F>),
}

/// Stateful per-driver decision engine; feed it one sample per frame.
#[derive(Debug, Clone)]
pub struct DecisionUnit<F> {
    cfg: DecisionConfig<F>,
    calibrator: Calibrator<F>,
    baseline: Option<Baseline<F>>,
    eyes: SlidingWindow,
    yawn_onsets: Vec<u64>,
    mouth_open_since: Option<u64>,
    yawn_counted: bool,
    head_window: VecDeque<(u64, F)>,
    action_window: VecDeque<(u64, ActionClass)>,
}

impl<F: Real> DecisionUnit<F> {
    pub fn new(cfg: DecisionConfig<F>) -> Result<Self, DecisionError> {
        cfg.validate()?;
        Ok(Self {
            calibrator: Calibrator::new(cfg.min_calibration_samples, cfg.eye_viz_min),
            eyes: SlidingWindow::new(cfg.perclos_window_ms),
            cfg,
            baseline: None,
            yawn_onsets: Vec::new(),
            mouth_open_since: None,
            yawn_counted: false,
            head_window: VecDeque::new(),
            action_window: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &DecisionConfig<F> {
        &self.cfg
    }

    pub fn baseline(&self) -> Option<&Baseline<F>> {
        self.baseline.as_ref()
    }

    /// Process a frame with a visible face.
    pub fn observe(
        &mut self,
        now_ms: u64,
        ind: &FaceIndicators<F>,
    ) -> Result<DecisionOutput<F>, DecisionError> {
        if self.baseline.is_none() {
            match self.calibrator.step(ind) {
                Ok(Some(b)) => self.baseline = Some(b),
                Ok(None) | Err(DecisionError::InvalidSample) => {
                    return Ok(DecisionOutput::Calibrating {
                        samples: self.calibrator.samples(),
                        required: self.calibrator.required(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        let baseline = self.baseline.unwrap();

        let eye = classify_eye_closed(
            &ind.eye_open,
            &ind.eye_viz,
            &baseline,
            self.cfg.closed_fraction,
            self.cfg.eye_viz_min,
        )?;
        self.eyes.push(now_ms, eye.observed, eye.closed)?;

        match ind.mouth_state() {
            MouthState::Open => {
                let since = *self.mouth_open_since.get_or_insert(now_ms);
                if !self.yawn_counted && now_ms - since >= self.cfg.yawn_min_ms {
                    self.yawn_onsets.push(since);
                    self.yawn_counted = true;
                }
            }
            _ => {
                self.mouth_open_since = None;
                self.yawn_counted = false;
            }
        }

        let deviation = head_deviation(&ind.head, &baseline, self.cfg.theta_max)?;
        self.head_window.push_back((now_ms, deviation));
        self.action_window.push_back((now_ms, ind.action_class()));
        self.report(now_ms).map(DecisionOutput::Report)
    }

    /// Process a frame where no face was available (track lost, occlusion).
    /// The eye timeline records unobserved time; mouth/head/action windows
    /// receive nothing and any running yawn is broken.
    pub fn observe_absent(&mut self, now_ms: u64) -> Result<DecisionOutput<F>, DecisionError> {
        if self.baseline.is_none() {
            return Ok(DecisionOutput::Calibrating {
                samples: self.calibrator.samples(),
                required: self.calibrator.required(),
            });
        }
        self.eyes.push(now_ms, false, false)?;
        self.mouth_open_since = None;
        self.yawn_counted = false;
        self.report(now_ms).map(DecisionOutput::Report)
    }

    fn report(&mut self, now: u64) -> Result<DecisionReport<F>, DecisionError> {
        let event_cutoff = now.saturating_sub(self.cfg.event_window_ms);
        self.yawn_onsets.retain(|&t| t > event_cutoff);
        while self.action_window.front().is_some_and(|&(t, _)| t <= event_cutoff) {
            self.action_window.pop_front();
        }
        let head_cutoff = now.saturating_sub(self.cfg.head_window_ms);
        while self.head_window.front().is_some_and(|&(t, _)| t <= head_cutoff) {
            self.head_window.pop_front();
        }

        let perclos = self.eyes.perclos::<F>(now)?;
        let yawn_rate = event_frequency::<F>(&self.yawn_onsets, self.cfg.event_window_ms, now);
        let head_metric = if self.head_window.is_empty() {
            F::zero()
        } else {
            self.head_window.iter().fold(F::zero(), |a, &(_, d)| a + d)
                / real_usize(self.head_window.len())
        };
        let fraction = |class: ActionClass| -> F {
            if self.action_window.is_empty() {
                return F::zero();
            }
            let hits = self.action_window.iter().filter(|&&(_, c)| c == class).count();
            real_usize::<F>(hits) / real_usize(self.action_window.len())
        };
        let phone = fraction(ActionClass::Phone);
        let smoke = fraction(ActionClass::Smoking);

        let s_perclos = tiered_score(perclos.percent, &self.cfg.perclos);
        let s_mouth = tiered_score(yawn_rate, &self.cfg.yawn_rate);
        let s_head = tiered_score(head_metric, &self.cfg.head);
        let s_phone = tiered_score(phone, &self.cfg.cellphone);
        let s_smoke = tiered_score(smoke, &self.cfg.smoking);
        let scores = RiskScores {
            perclos: s_perclos,
            mouth: s_mouth,
            headpose: s_head,
            cellphone: s_phone,
            smoking: s_smoke,
            safeness: safeness_score(s_perclos, s_mouth, s_head, s_phone, s_smoke, &self.cfg.lambda),
        };
        Ok(DecisionReport {
            perclos_pct: perclos.percent,
            perclos_sufficient: perclos.sufficient,
            yawn_rate_per_min: yawn_rate,
            head_deviation: head_metric,
            cellphone_fraction: phone,
            smoking_fraction: smoke,
            global: global_state(&scores),
            cause: root_cause(&scores),
            scores,
        })
    }
}
