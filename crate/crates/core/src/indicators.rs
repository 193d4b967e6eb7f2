//! Multi-task output schema and landmark-derived ratios.
//!
//! The network emits a single 209-element vector: 98 landmark points (196
//! scalars, normalized to the face ROI), per-eye visibility and openness,
//! a 3-way mouth state, three head Euler angles, and a 3-way action class.
//! [`decode_output_vector`] turns the raw vector into a validated
//! [`FaceIndicators`], applying the output activations when the producer
//! left them off.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, RoiBox};
use crate::num::{real, Real};

/// Total output vector length.
pub const OUTPUT_LEN: usize = 209;
/// Number of facial landmark points.
pub const NUM_LANDMARKS: usize = 98;

// Field layout of the output vector, in row order:
// landmarks[196], eye_viz[2], eye_open[2], mouth[3], head[3], action[3].
const LANDMARKS_END: usize = 2 * NUM_LANDMARKS;
const EYE_VIZ_END: usize = LANDMARKS_END + 2;
const EYE_OPEN_END: usize = EYE_VIZ_END + 2;
const MOUTH_END: usize = EYE_OPEN_END + 3;
const HEAD_END: usize = MOUTH_END + 3;

/// Mouth opening classes, by simplex index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MouthState {
    Closed,
    SemiOpen,
    Open,
}

impl MouthState {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Closed),
            1 => Some(Self::SemiOpen),
            2 => Some(Self::Open),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Closed => 0,
            Self::SemiOpen => 1,
            Self::Open => 2,
        }
    }
}

/// Driver action classes, by simplex index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionClass {
    Normal,
    Phone,
    Smoking,
}

impl ActionClass {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Normal),
            1 => Some(Self::Phone),
            2 => Some(Self::Smoking),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Normal => 0,
            Self::Phone => 1,
            Self::Smoking => 2,
        }
    }
}

/// Decoded multi-task output for one face crop.
///
/// Invariants hold after construction: exactly 98 landmarks with
/// coordinates in `[0, 1]`, eye components in `[0, 1]`, mouth and action
/// simplexes summing to one, head angles in `[-pi/2, pi/2]`. Inputs that
/// violated a range were clamped and the `clamped` flag set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceIndicators<F> {
    /// 98 points, normalized to the face ROI.
    pub landmarks: Vec<Point2<F>>,
    /// Visibility probability per eye (left, right).
    pub eye_viz: [F; 2],
    /// Eyelid opening level per eye (left, right); 0 is fully closed.
    pub eye_open: [F; 2],
    /// Mouth state simplex (closed, semi-open, open).
    pub mouth: [F; 3],
    /// Head Euler angles (yaw, pitch, roll) in radians.
    pub head: [F; 3],
    /// Action simplex (normal, phone use, smoking).
    pub action: [F; 3],
    /// True when any input value had to be clamped into its range.
    pub clamped: bool,
}

impl<F: Real> FaceIndicators<F> {
    /// Most likely mouth state.
    pub fn mouth_state(&self) -> MouthState {
        MouthState::from_index(argmax3(&self.mouth)).unwrap()
    }

    /// Most likely action class.
    pub fn action_class(&self) -> ActionClass {
        ActionClass::from_index(argmax3(&self.action)).unwrap()
    }

    /// Check every type invariant; used by tests and scenario validation.
    pub fn validate(&self) -> Result<(), IndicatorError> {
        if self.landmarks.len() != NUM_LANDMARKS {
            return Err(IndicatorError::WrongLength {
                expected: NUM_LANDMARKS,
                got: self.landmarks.len(),
            });
        }
        let unit = |v: F| v >= F::zero() && v <= F::one();
        if !self.landmarks.iter().all(|p| unit(p.x) && unit(p.y)) {
            return Err(IndicatorError::OutOfRange("landmarks"));
        }
        if !self.eye_viz.iter().all(|&v| unit(v)) || !self.eye_open.iter().all(|&v| unit(v)) {
            return Err(IndicatorError::OutOfRange("eye"));
        }
        let tol = real::<F>(1e-6);
        for (name, simplex) in [("mouth", &self.mouth), ("action", &self.action)] {
            if simplex.iter().any(|&v| v < F::zero()) {
                return Err(IndicatorError::OutOfRange(name));
            }
            let sum = simplex.iter().fold(F::zero(), |a, &b| a + b);
            if (sum - F::one()).abs() > tol {
                return Err(IndicatorError::NotASimplex(name));
            }
        }
        let half_pi = real::<F>(std::f64::consts::FRAC_PI_2);
        if self.head.iter().any(|&a| a < -half_pi || a > half_pi) {
            return Err(IndicatorError::OutOfRange("head"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndicatorError {
    #[error("output vector has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("non-finite value at output index {0}")]
    NonFinite(usize),
    #[error("{0} component outside its range")]
    OutOfRange(&'static str),
    #[error("{0} components do not sum to 1")]
    NotASimplex(&'static str),
    #[error("eye width below tolerance, landmarks unusable")]
    DegenerateEye,
    #[error("mouth width below tolerance, landmarks unusable")]
    DegenerateMouth,
    #[error("landmark index {0} out of bounds")]
    InvalidIndex(usize),
}

/// Decode the raw 209-element network output.
///
/// When `activations_applied` is false the producer emitted pre-activation
/// logits: sigmoid is applied to the eye fields and softmax to the mouth
/// and action fields. Landmarks and head angles pass through either way.
/// Out-of-range landmarks and head angles are clamped and flagged.
pub fn decode_output_vector<F: Real>(
    raw: &[F],
    activations_applied: bool,
) -> Result<FaceIndicators<F>, IndicatorError> {
    if raw.len() != OUTPUT_LEN {
        return Err(IndicatorError::WrongLength {
            expected: OUTPUT_LEN,
            got: raw.len(),
        });
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(IndicatorError::NonFinite(i));
    }

    let mut clamped = false;
    let mut clamp_unit = |v: F| {
        if v < F::zero() || v > F::one() {
            clamped = true;
        }
        v.max(F::zero()).min(F::one())
    };

    let landmarks: Vec<Point2<F>> = raw[..LANDMARKS_END]
        .chunks_exact(2)
        .map(|xy| Point2::new(clamp_unit(xy[0]), clamp_unit(xy[1])))
        .collect();

    let activate2 = |src: &[F], clamped: &mut bool| -> [F; 2] {
        let mut out = [F::zero(); 2];
        for (o, &v) in out.iter_mut().zip(src) {
            *o = if activations_applied {
                if v < F::zero() || v > F::one() {
                    *clamped = true;
                }
                v.max(F::zero()).min(F::one())
            } else {
                sigmoid(v)
            };
        }
        out
    };
    let eye_viz = activate2(&raw[LANDMARKS_END..EYE_VIZ_END], &mut clamped);
    let eye_open = activate2(&raw[EYE_VIZ_END..EYE_OPEN_END], &mut clamped);

    let activate3 = |src: &[F], clamped: &mut bool| -> [F; 3] {
        let v = [src[0], src[1], src[2]];
        if activations_applied {
            normalize_simplex(v, clamped)
        } else {
            softmax3(v)
        }
    };
    let mouth = activate3(&raw[EYE_OPEN_END..MOUTH_END], &mut clamped);
    let half_pi = real::<F>(std::f64::consts::FRAC_PI_2);
    let mut head = [F::zero(); 3];
    for (o, &v) in head.iter_mut().zip(&raw[MOUTH_END..HEAD_END]) {
        if v < -half_pi || v > half_pi {
            clamped = true;
        }
        *o = v.max(-half_pi).min(half_pi);
    }
    let action = activate3(&raw[HEAD_END..OUTPUT_LEN], &mut clamped);

    Ok(FaceIndicators {
        landmarks,
        eye_viz,
        eye_open,
        mouth,
        head,
        action,
        clamped,
    })
}

/// Inverse of [`decode_output_vector`]: lay the indicators back out as a
/// 209-element vector. With `activations_applied` the values are written
/// verbatim; otherwise the eye fields are written as logits and the
/// simplexes as log-probabilities, so decoding recovers the original.
pub fn encode_output_vector<F: Real>(ind: &FaceIndicators<F>, activations_applied: bool) -> Vec<F> {
    let mut out = Vec::with_capacity(OUTPUT_LEN);
    for p in &ind.landmarks {
        out.push(p.x);
        out.push(p.y);
    }
    for group in [&ind.eye_viz[..], &ind.eye_open[..]] {
        for &v in group {
            out.push(if activations_applied { v } else { logit(v) });
        }
    }
    let push3 = |out: &mut Vec<F>, s: &[F; 3]| {
        for &v in s {
            out.push(if activations_applied { v } else { v.ln() });
        }
    };
    push3(&mut out, &ind.mouth);
    out.extend_from_slice(&ind.head);
    push3(&mut out, &ind.action);
    out
}

/// Index layout of the eye/mouth landmark groups: one horizontal corner
/// pair plus one or more (top, bottom) vertical pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub corners: (usize, usize),
    pub vertical_pairs: Vec<(usize, usize)>,
}

impl FeatureSchema {
    fn validate(&self, name: &'static str) -> Result<(), SchemaError> {
        let mut seen = Vec::new();
        let mut check = |i: usize| -> Result<(), SchemaError> {
            if i >= NUM_LANDMARKS {
                return Err(SchemaError::IndexOutOfRange { feature: name, index: i });
            }
            if seen.contains(&i) {
                return Err(SchemaError::DuplicateIndex { feature: name, index: i });
            }
            seen.push(i);
            Ok(())
        };
        check(self.corners.0)?;
        check(self.corners.1)?;
        if self.vertical_pairs.is_empty() {
            return Err(SchemaError::NoVerticalPairs(name));
        }
        for &(t, b) in &self.vertical_pairs {
            check(t)?;
            check(b)?;
        }
        Ok(())
    }
}

/// Which of the 98 landmarks bound the eyes and mouth, plus the outer eye
/// corners used for the interocular distance. The layout is configuration:
/// the 98-point convention fixes the count, not the indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkSchema {
    pub left_eye: FeatureSchema,
    pub right_eye: FeatureSchema,
    pub mouth: FeatureSchema,
    /// Outer eye corner indices defining the interocular distance.
    pub iod: (usize, usize),
}

impl LandmarkSchema {
    pub fn validate(&self) -> Result<(), SchemaError> {
        self.left_eye.validate("left_eye")?;
        self.right_eye.validate("right_eye")?;
        self.mouth.validate("mouth")?;
        for i in [self.iod.0, self.iod.1] {
            if i >= NUM_LANDMARKS {
                return Err(SchemaError::IndexOutOfRange { feature: "iod", index: i });
            }
        }
        if self.iod.0 == self.iod.1 {
            return Err(SchemaError::DuplicateIndex { feature: "iod", index: self.iod.0 });
        }
        Ok(())
    }
}

impl Default for LandmarkSchema {
    /// WFLW-style layout: left eye 60..=67, right eye 68..=75, outer lip
    /// 76..=87, outer eye corners 60 and 72.
    fn default() -> Self {
        Self {
            left_eye: FeatureSchema {
                corners: (60, 64),
                vertical_pairs: vec![(61, 67), (62, 66), (63, 65)],
            },
            right_eye: FeatureSchema {
                corners: (68, 72),
                vertical_pairs: vec![(69, 75), (70, 74), (71, 73)],
            },
            mouth: FeatureSchema {
                corners: (76, 82),
                vertical_pairs: vec![(78, 86), (79, 85), (80, 84)],
            },
            iod: (60, 72),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("{feature} index {index} outside the 98-point array")]
    IndexOutOfRange { feature: &'static str, index: usize },
    #[error("{feature} index {index} listed twice")]
    DuplicateIndex { feature: &'static str, index: usize },
    #[error("{0} has no vertical pairs")]
    NoVerticalPairs(&'static str),
}

const WIDTH_EPS: f64 = 1e-6;

fn aspect_ratio<F: Real>(
    landmarks: &[Point2<F>],
    feature: &FeatureSchema,
    degenerate: IndicatorError,
) -> Result<F, IndicatorError> {
    let fetch = |i: usize| -> Result<Point2<F>, IndicatorError> {
        landmarks
            .get(i)
            .copied()
            .ok_or(IndicatorError::InvalidIndex(i))
    };
    let left = fetch(feature.corners.0)?;
    let right = fetch(feature.corners.1)?;
    let width = left.distance(&right);
    if width <= real(WIDTH_EPS) {
        return Err(degenerate);
    }
    let mut sum = F::zero();
    for &(t, b) in &feature.vertical_pairs {
        sum += fetch(t)?.distance(&fetch(b)?);
    }
    Ok(sum / real_len::<F>(feature.vertical_pairs.len()) / width)
}

fn real_len<F: Real>(n: usize) -> F {
    crate::num::real_usize(n)
}

/// Eye aspect ratio: mean vertical extent over horizontal extent.
pub fn compute_ear<F: Real>(
    landmarks: &[Point2<F>],
    eye: &FeatureSchema,
) -> Result<F, IndicatorError> {
    aspect_ratio(landmarks, eye, IndicatorError::DegenerateEye)
}

/// Mouth aspect ratio, same construction over the mouth indices.
pub fn compute_mar<F: Real>(
    landmarks: &[Point2<F>],
    mouth: &FeatureSchema,
) -> Result<F, IndicatorError> {
    aspect_ratio(landmarks, mouth, IndicatorError::DegenerateMouth)
}

/// Map ROI-normalized landmarks into image pixels.
pub fn denormalize_landmarks<F: Real>(
    ind: &FaceIndicators<F>,
    roi: &RoiBox<F>,
) -> Vec<Point2<F>> {
    ind.landmarks
        .iter()
        .map(|p| Point2::new(roi.x + p.x * roi.w, roi.y + p.y * roi.h))
        .collect()
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Inverse of [`sigmoid`]; saturates at the representable extremes.
pub fn logit<F: Real>(p: F) -> F {
    (p / (F::one() - p)).ln()
}

/// Stable 3-way softmax.
pub fn softmax3<F: Real>(v: [F; 3]) -> [F; 3] {
    let m = v[0].max(v[1]).max(v[2]);
    let e = [(v[0] - m).exp(), (v[1] - m).exp(), (v[2] - m).exp()];
    let sum = e[0] + e[1] + e[2];
    [e[0] / sum, e[1] / sum, e[2] / sum]
}

fn normalize_simplex<F: Real>(v: [F; 3], clamped: &mut bool) -> [F; 3] {
    let tol = real::<F>(1e-6);
    let clipped = [
        v[0].max(F::zero()),
        v[1].max(F::zero()),
        v[2].max(F::zero()),
    ];
    let sum = clipped[0] + clipped[1] + clipped[2];
    if sum <= F::zero() {
        *clamped = true;
        let third = F::one() / real::<F>(3.0);
        return [third; 3];
    }
    if (sum - F::one()).abs() > tol || clipped != v {
        *clamped = true;
    }
    [clipped[0] / sum, clipped[1] / sum, clipped[2] / sum]
}

/// Index of the largest component; first wins on ties.
pub fn argmax3<F: Real>(v: &[F; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}
