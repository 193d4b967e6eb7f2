//! Versioned JSON configuration. Every key is required and unknown keys
//! are rejected, so a config file is always a complete, self-documenting
//! record of the run parameters. `config.default` at the repository root
//! is the serialized form of [`Config::default`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dms_core::decision::DecisionConfig;
use dms_core::fsm::FsmConfig;
use dms_core::indicators::LandmarkSchema;
use dms_core::pipeline::{LatencyModel, PipelineConfig};
use dms_core::tracker::TrackerConfig;

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Execution knobs that belong to the simulator rather than to any one
/// algorithm stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Worker threads for per-frame perception preparation.
    pub workers: usize,
    /// Uniform jitter half-width applied to scenario detection boxes.
    pub noise_std: f64,
    pub noise_seed: u64,
    /// Square ROI expansion around the track box before resampling.
    pub roi_expand: f64,
    /// Side length of the multi-task model input.
    pub roi_size: usize,
    /// Openness level at which an eye counts as open during evaluation.
    pub eval_eye_threshold: f64,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            noise_std: 0.0,
            noise_seed: 0,
            roi_expand: 0.25,
            roi_size: 160,
            eval_eye_threshold: 0.5,
        }
    }
}

/// Optional file references for image-mode runs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub model_spec: Option<PathBuf>,
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub decision: DecisionConfig<f64>,
    pub fsm: FsmConfig,
    pub tracker: TrackerConfig<f64>,
    pub schema: LandmarkSchema,
    pub latency: LatencyModel,
    pub runtime: RuntimeConfig,
    pub paths: Paths,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            decision: DecisionConfig::default(),
            fsm: FsmConfig::default(),
            tracker: TrackerConfig::default(),
            schema: LandmarkSchema::default(),
            latency: LatencyModel::default(),
            runtime: RuntimeConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.schema
            .validate()
            .map_err(|e| CliError::Config(format!("invalid landmark schema: {e}")))?;
        self.pipeline().validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Assemble the pipeline configuration from the file sections.
    pub fn pipeline(&self) -> PipelineConfig<f64> {
        PipelineConfig {
            tracker: self.tracker.clone(),
            decision: self.decision.clone(),
            fsm: self.fsm,
            latency: self.latency,
            workers: self.runtime.workers,
            noise_std: self.runtime.noise_std,
            noise_seed: self.runtime.noise_seed,
            roi_expand: self.runtime.roi_expand,
            roi_size: self.runtime.roi_size,
        }
    }
}
