//! Line-delimited JSON scenario files: one record per frame carrying the
//! perception outputs the pipeline would have produced, so decision logic
//! can be driven without camera input or trained weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dms_core::geometry::{BoundingBox, Point2};
use dms_core::indicators::{FaceIndicators, NUM_LANDMARKS};
use dms_core::pipeline::{FrameInput, FramePayload, ScenarioFace};

use crate::CliError;

/// One frame of a scenario. Angles are radians; `bbox` is `[x, y, w, h]`
/// normalized to the image; a missing `bbox` means no face is visible this
/// frame (the indicator fields are then ignored). `landmarks` holds 196
/// interleaved x/y values when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub frame: u64,
    pub t_ms: u64,
    pub eye_open_l: f64,
    pub eye_open_r: f64,
    pub eye_viz_l: f64,
    pub eye_viz_r: f64,
    /// 0 = closed, 1 = semi-open, 2 = open.
    pub mouth: u8,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// 0 = normal, 1 = phone use, 2 = smoking.
    pub action: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<Vec<f64>>,
}

/// Detection confidence attributed to scenario faces.
const SCENARIO_SCORE: f64 = 0.9;

pub fn read_scenario(path: &Path) -> Result<Vec<ScenarioRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read scenario {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn parse_scenario(text: &str) -> Result<Vec<ScenarioRecord>, String> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScenarioRecord = serde_json::from_str(line)
            .map_err(|e| format!("parse error at line {}: {e}", i + 1))?;
        if rec.frame != records.len() as u64 {
            return Err(format!(
                "parse error at line {}: frame {} out of order (expected {})",
                i + 1,
                rec.frame,
                records.len()
            ));
        }
        records.push(rec);
    }
    Ok(records)
}

/// Decode the indicator fields of one record, validating value ranges.
pub fn indicators_of(rec: &ScenarioRecord) -> Result<FaceIndicators<f64>, CliError> {
    let bad = |m: String| CliError::Data(format!("frame {}: {m}", rec.frame));
    let landmarks = match &rec.landmarks {
        None => vec![Point2::new(0.5, 0.5); NUM_LANDMARKS],
        Some(flat) => {
            if flat.len() != 2 * NUM_LANDMARKS {
                return Err(bad(format!("landmarks must hold 196 values, got {}", flat.len())));
            }
            flat.chunks_exact(2).map(|p| Point2::new(p[0], p[1])).collect()
        }
    };
    let one_hot = |idx: u8, what: &str| -> Result<[f64; 3], CliError> {
        if idx > 2 {
            return Err(bad(format!("{what} class {idx} out of range")));
        }
        let mut v = [0.0; 3];
        v[idx as usize] = 1.0;
        Ok(v)
    };
    let ind = FaceIndicators {
        landmarks,
        eye_viz: [rec.eye_viz_l, rec.eye_viz_r],
        eye_open: [rec.eye_open_l, rec.eye_open_r],
        mouth: one_hot(rec.mouth, "mouth")?,
        head: [rec.yaw, rec.pitch, rec.roll],
        action: one_hot(rec.action, "action")?,
        clamped: false,
    };
    ind.validate().map_err(|e| bad(e.to_string()))?;
    Ok(ind)
}

/// Convert scenario records into pipeline frame inputs.
pub fn to_frame_inputs(records: &[ScenarioRecord]) -> Result<Vec<FrameInput<f64>>, CliError> {
    records
        .iter()
        .map(|rec| {
            let faces = match rec.bbox {
                None => Vec::new(),
                Some([x, y, w, h]) => {
                    if !(w > 0.0 && h > 0.0) {
                        return Err(CliError::Data(format!(
                            "frame {}: bbox extent must be positive",
                            rec.frame
                        )));
                    }
                    vec![ScenarioFace {
                        bbox: BoundingBox::new(x, y, x + w, y + h),
                        score: SCENARIO_SCORE,
                        indicators: indicators_of(rec)?,
                    }]
                }
            };
            Ok(FrameInput {
                frame: rec.frame,
                timestamp_ms: rec.t_ms,
                payload: FramePayload::Scenario { faces },
            })
        })
        .collect()
}
