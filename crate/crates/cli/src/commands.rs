//! Implementations behind the four subcommands. Each returns structured
//! data; rendering to text or JSON happens at the edge so every report is
//! available machine-readable via `--format json`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dms_core::fsm::TransitionEvent;
use dms_core::metrics::{evaluate_pairs, weighted_accuracy, EvalPair};
use dms_core::micronet::{layer_costs, ModelSpec};
use dms_core::pipeline::{simulate_latency, Pipeline, StateLog};

use crate::config::Config;
use crate::scenario::{indicators_of, read_scenario, to_frame_inputs, ScenarioRecord};
use crate::CliError;

/// Output rendering selected by `--format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization cannot fail")
}

// ---------------------------------------------------------------------------
// run

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: PathBuf,
    pub out: Option<PathBuf>,
    /// Override for the detection interval N.
    pub interval: Option<u64>,
    /// Override for the detection-noise seed.
    pub seed: Option<u64>,
}

/// End-of-run digest; the per-frame records go to `--out` (or stdout).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    pub final_phase: String,
    pub final_cause: Option<String>,
    pub events: Vec<TransitionEvent>,
}

pub fn cmd_run(cfg: &Config, args: &RunArgs) -> Result<(RunSummary, String), CliError> {
    let records = read_scenario(&args.scenario)?;
    let inputs = to_frame_inputs(&records)?;

    let mut pipe_cfg = cfg.pipeline();
    if let Some(n) = args.interval {
        pipe_cfg.tracker.detection_interval = n;
    }
    if let Some(s) = args.seed {
        pipe_cfg.noise_seed = s;
    }
    pipe_cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let mut pipeline = Pipeline::new(pipe_cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let log: StateLog<f64> = pipeline.run(&inputs).map_err(|e| CliError::Data(e.to_string()))?;

    let mut lines = String::new();
    for rec in &log.records {
        lines.push_str(&serde_json::to_string(rec).expect("log serialization cannot fail"));
        lines.push('\n');
    }

    let last = log.records.last();
    let summary = RunSummary {
        frames: log.records.len(),
        final_phase: last.map_or("calibration", |r| r.phase.name()).to_string(),
        final_cause: last.and_then(|r| r.cause).map(|c| c.name().to_string()),
        events: log.events,
    };
    Ok((summary, lines))
}

/// Write the run log to its destination and render the summary.
pub fn render_run(
    summary: &RunSummary,
    lines: &str,
    out: Option<&Path>,
    format: Format,
) -> Result<String, CliError> {
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
            file.write_all(lines.as_bytes())
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        }
        None => print!("{lines}"),
    }
    Ok(match format {
        Format::Json => to_json(summary),
        Format::Text => {
            let mut s = format!(
                "frames: {}\nfinal phase: {}\nfinal cause: {}\n",
                summary.frames,
                summary.final_phase,
                summary.final_cause.as_deref().unwrap_or("-")
            );
            for e in &summary.events {
                s.push_str(&format!(
                    "event: {} -> {} at {} ms ({})\n",
                    e.from.name(),
                    e.to.name(),
                    e.timestamp_ms,
                    e.cause.map_or("-", |c| c.name()),
                ));
            }
            s
        }
    })
}

// ---------------------------------------------------------------------------
// bench

/// One latency table row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub interval: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub detect_frames: u64,
}

/// Nearest-rank percentile of an unsorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn cmd_bench(cfg: &Config, intervals: &[u64], frames: u64) -> Result<Vec<BenchRow>, CliError> {
    if frames == 0 {
        return Err(CliError::Config("frame count must be >= 1".into()));
    }
    intervals
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(CliError::Config("detection interval must be >= 1".into()));
            }
            let summary = simulate_latency(&cfg.latency, n, frames);
            let mut sorted = summary.per_frame_ms.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            Ok(BenchRow {
                interval: n,
                mean_ms: summary.mean_ms,
                p50_ms: percentile(&sorted, 50.0),
                p99_ms: percentile(&sorted, 99.0),
                detect_frames: summary.detect_frames,
            })
        })
        .collect()
}

pub fn render_bench(rows: &[BenchRow], format: Format) -> String {
    match format {
        Format::Json => to_json(&rows),
        Format::Text => {
            let mut s = format!(
                "{:>8} {:>10} {:>10} {:>10} {:>14}\n",
                "interval", "mean_ms", "p50_ms", "p99_ms", "detect_frames"
            );
            for r in rows {
                s.push_str(&format!(
                    "{:>8} {:>10.2} {:>10.2} {:>10.2} {:>14}\n",
                    r.interval, r.mean_ms, r.p50_ms, r.p99_ms, r.detect_frames
                ));
            }
            s
        }
    }
}

// ---------------------------------------------------------------------------
// model-info

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRow {
    pub name: String,
    pub out_h: usize,
    pub out_w: usize,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub input: [usize; 3],
    pub head_in: usize,
    pub head_out: usize,
    pub layers: Vec<LayerRow>,
    pub total_params: u64,
    pub total_macs: u64,
}

pub fn cmd_model_info(spec_path: &Path) -> Result<ModelReport, CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Data(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let spec: ModelSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("invalid spec {}: {e}", spec_path.display())))?;
    spec.validate()
        .map_err(|e| CliError::Data(format!("invalid spec {}: {e}", spec_path.display())))?;

    let layers: Vec<LayerRow> = layer_costs(&spec)
        .into_iter()
        .map(|l| LayerRow { name: l.name, out_h: l.out_h, out_w: l.out_w, params: l.params, macs: l.macs })
        .collect();
    Ok(ModelReport {
        name: spec.name.clone(),
        input: [spec.input.channels, spec.input.height, spec.input.width],
        head_in: spec.head_in(),
        head_out: spec.head_out,
        total_params: layers.iter().map(|l| l.params).sum(),
        total_macs: layers.iter().map(|l| l.macs).sum(),
        layers,
    })
}

pub fn render_model_info(report: &ModelReport, format: Format) -> String {
    match format {
        Format::Json => to_json(report),
        Format::Text => {
            let mut s = format!(
                "model: {} (input {}x{}x{}, head {} -> {})\n{:<20} {:>9} {:>12} {:>14}\n",
                report.name,
                report.input[0],
                report.input[1],
                report.input[2],
                report.head_in,
                report.head_out,
                "layer",
                "out",
                "params",
                "macs"
            );
            for l in &report.layers {
                s.push_str(&format!(
                    "{:<20} {:>4}x{:<4} {:>12} {:>14}\n",
                    l.name,
                    l.out_h,
                    l.out_w,
                    l.params,
                    l.macs
                ));
            }
            s.push_str(&format!(
                "{:<20} {:>9} {:>12} {:>14}\n",
                "total", "", report.total_params, report.total_macs
            ));
            s
        }
    }
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub mean_nme: f64,
    pub eye_accuracy: f64,
    pub mouth_accuracy: f64,
    /// Mean circular error per angle (yaw, pitch, roll), degrees.
    pub pose_error_deg: [f64; 3],
}

pub fn cmd_eval(cfg: &Config, pred_path: &Path, gt_path: &Path) -> Result<EvalReport, CliError> {
    let pred = read_scenario(pred_path)?;
    let gt = read_scenario(gt_path)?;
    if pred.len() != gt.len() {
        return Err(CliError::Data(format!(
            "record counts differ: {} predictions vs {} ground-truth",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(CliError::Data("no records to evaluate".into()));
    }
    let require_landmarks = |rec: &ScenarioRecord, which: &str| {
        if rec.landmarks.is_none() {
            return Err(CliError::Data(format!(
                "frame {}: {which} record lacks landmarks, required for evaluation",
                rec.frame
            )));
        }
        Ok(())
    };
    let mut eval_pairs = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(&gt) {
        require_landmarks(p, "prediction")?;
        require_landmarks(g, "ground-truth")?;
        eval_pairs.push(EvalPair {
            predicted: indicators_of(p)?,
            ground_truth: indicators_of(g)?,
        });
    }
    let summary = evaluate_pairs(&eval_pairs, &cfg.schema, cfg.runtime.eval_eye_threshold)
        .map_err(|e| CliError::Data(e.to_string()))?;

    // Support-weighted mouth accuracy over the three classes, with the
    // support of each class taken from the ground truth.
    let mut hits = [0usize; 3];
    let mut supports = [0usize; 3];
    for (p, g) in pred.iter().zip(&gt) {
        let class = g.mouth as usize;
        supports[class] += 1;
        if p.mouth == g.mouth {
            hits[class] += 1;
        }
    }
    let accuracies: Vec<f64> = hits
        .iter()
        .zip(&supports)
        .map(|(&h, &s)| if s == 0 { 0.0 } else { h as f64 / s as f64 })
        .collect();
    let mouth_accuracy = weighted_accuracy(&accuracies, &supports)
        .map_err(|e| CliError::Data(e.to_string()))?;

    Ok(EvalReport {
        pairs: summary.pairs,
        mean_nme: summary.mean_nme,
        eye_accuracy: summary.eye_accuracy,
        mouth_accuracy,
        pose_error_deg: summary.mean_pose_error_deg,
    })
}

pub fn render_eval(report: &EvalReport, format: Format) -> String {
    match format {
        Format::Json => to_json(report),
        Format::Text => format!(
            "pairs: {}\nmean NME: {:.6}\neye accuracy: {:.4}\nmouth accuracy: {:.4}\n\
             pose error (deg): yaw {:.3} pitch {:.3} roll {:.3}\n",
            report.pairs,
            report.mean_nme,
            report.eye_accuracy,
            report.mouth_accuracy,
            report.pose_error_deg[0],
            report.pose_error_deg[1],
            report.pose_error_deg[2],
        ),
    }
}
