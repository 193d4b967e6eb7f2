//! Driver monitoring decision engine and pipeline simulator.
//!
//! The crate covers the full in-process chain of a camera-based DMS:
//!
//! - [`indicators`] — the 209-element multi-task output schema, decoding,
//!   and landmark-derived aspect ratios (EAR/MAR)
//! - [`micronet`] — a from-scratch inference engine for depthwise-separable
//!   CNNs (inverted residual stacks, multi-scale GAP fusion) with exact
//!   parameter and MAC accounting
//! - [`detector`] — SSD-style anchor decoding and greedy IoU NMS
//! - [`tracker`] — SORT-style face tracking (constant-velocity Kalman box
//!   filter, Hungarian IoU association, coasting between detections)
//! - [`decision`] — per-driver calibration, PERCLOS over a sliding window,
//!   yawn/action frequencies, head deviation, two-tier risk scores and the
//!   safeness score
//! - [`fsm`] — the four-state alert machine with worst-case arbitration and
//!   temporal hysteresis
//! - [`pipeline`] — frame-driven orchestration with amortized detection
//!   scheduling and the analytic latency simulator
//! - [`metrics`] — offline evaluation metrics (NME, weighted accuracy,
//!   circular error)
//!
//! All numeric code is generic over the scalar type through [`num::Real`];
//! concrete aliases for the common instantiations are exported below.

pub mod decision;
pub mod detector;
pub mod fsm;
pub mod geometry;
pub mod indicators;
pub mod metrics;
pub mod micronet;
pub mod num;
pub mod pipeline;
pub mod tracker;

pub use num::Real;

/// Image tensor in 32-bit floats, the storage precision of weight files.
pub type Tensor3f = micronet::Tensor3<f32>;
/// Image tensor in 64-bit floats, used by oracle-grade tests.
pub type Tensor3d = micronet::Tensor3<f64>;
/// Decoded multi-task output at the pipeline's working precision.
pub type FaceIndicators64 = indicators::FaceIndicators<f64>;
/// Detection box at the pipeline's working precision.
pub type Detection64 = detector::Detection<f64>;
/// Face tracker at the pipeline's working precision.
pub type SortTracker64 = tracker::SortTracker<f64>;
/// Assembled frame processor at the pipeline's working precision.
pub type Pipeline64 = pipeline::Pipeline<f64>;
