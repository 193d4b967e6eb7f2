//! Four-phase alert state machine with temporal hysteresis.
//!
//! Escalations apply within the same step they are observed; de-escalations
//! must be earned by a continuous stretch of lower input lasting at least
//! the cooling period. This makes alerts fast on onset and stable against
//! flickering metrics.

use serde::{Deserialize, Serialize};

use crate::decision::ModuleId;

/// Alert phase, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Calibration,
    Safe,
    LowAwareness,
    Danger,
}

impl Phase {
    /// Risk level driving comparisons; calibration has none.
    pub fn level(self) -> Option<u8> {
        match self {
            Phase::Calibration => None,
            Phase::Safe => Some(0),
            Phase::LowAwareness => Some(1),
            Phase::Danger => Some(2),
        }
    }

    pub fn from_level(level: u8) -> Phase {
        match level {
            0 => Phase::Safe,
            1 => Phase::LowAwareness,
            _ => Phase::Danger,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Calibration => "calibration",
            Phase::Safe => "safe",
            Phase::LowAwareness => "low_awareness",
            Phase::Danger => "danger",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsmConfig {
    /// Continuous lower input required before a downgrade commits.
    pub cooling_ms: u64,
    /// Expected calibration length, carried for reporting.
    pub min_calibration_samples: usize,
}

impl Default for FsmConfig {
    fn default() -> Self {
        Self { cooling_ms: 3_000, min_calibration_samples: 100 }
    }
}

/// A downgrade waiting out the cooling period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingDowngrade {
    /// Highest below-phase level seen since the run started.
    pub target: Phase,
    /// Timestamp of the first below-phase reading of the run.
    pub since: u64,
}

/// Snapshot of the machine. `cause` is populated exactly when the phase is
/// an alert phase (low awareness or danger).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmsState {
    pub phase: Phase,
    pub cause: Option<ModuleId>,
    pub entered_at: u64,
    pub pending_downgrade: Option<PendingDowngrade>,
}

/// Committed phase change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub from: Phase,
    pub to: Phase,
    pub cause: Option<ModuleId>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FsmError {
    #[error("received a risk score before calibration completed")]
    NotCalibrated,
}

/// Read-only view for user-facing output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub phase: Phase,
    pub cause: Option<ModuleId>,
    pub dwell_ms: u64,
}

#[derive(Debug, Clone)]
pub struct DmsFsm {
    cfg: FsmConfig,
    state: DmsState,
}

impl DmsFsm {
    pub fn new(cfg: FsmConfig) -> Self {
        Self {
            cfg,
            state: DmsState {
                phase: Phase::Calibration,
                cause: None,
                entered_at: 0,
                pending_downgrade: None,
            },
        }
    }

    pub fn config(&self) -> &FsmConfig {
        &self.cfg
    }

    pub fn state(&self) -> &DmsState {
        &self.state
    }

    pub fn report(&self, now: u64) -> StateReport {
        StateReport {
            phase: self.state.phase,
            cause: self.state.cause,
            dwell_ms: now.saturating_sub(self.state.entered_at),
        }
    }

    /// Leave the calibration phase. Idempotent after the first call.
    pub fn calibration_done(&mut self, now: u64) -> Option<TransitionEvent> {
        if self.state.phase != Phase::Calibration {
            return None;
        }
        self.state =
            DmsState { phase: Phase::Safe, cause: None, entered_at: now, pending_downgrade: None };
        Some(TransitionEvent {
            from: Phase::Calibration,
            to: Phase::Safe,
            cause: None,
            timestamp_ms: now,
        })
    }

    /// Feed one arbitration result. At most one transition commits per step.
    pub fn step(
        &mut self,
        level: u8,
        cause: ModuleId,
        now: u64,
    ) -> Result<Option<TransitionEvent>, FsmError> {
        let current = self.state.phase.level().ok_or(FsmError::NotCalibrated)?;
        let level = level.min(2);
        let target = Phase::from_level(level);

        if level > current {
            // Escalate immediately; any cooling run is void.
            let event = TransitionEvent {
                from: self.state.phase,
                to: target,
                cause: Some(cause),
                timestamp_ms: now,
            };
            self.state = DmsState {
                phase: target,
                cause: Some(cause),
                entered_at: now,
                pending_downgrade: None,
            };
            return Ok(Some(event));
        }

        if level == current {
            self.state.pending_downgrade = None;
            // Same-level readings refresh which module is to blame.
            if self.state.phase > Phase::Safe {
                self.state.cause = Some(cause);
            }
            return Ok(None);
        }

        // Lower reading: extend or open the cooling run. The run's target
        // only ever rises — the commit goes to the worst level that was
        // still below the current phase.
        let pending = match self.state.pending_downgrade {
            Some(p) => PendingDowngrade { target: p.target.max(target), since: p.since },
            None => PendingDowngrade { target, since: now },
        };
        if now - pending.since >= self.cfg.cooling_ms {
            let to = pending.target;
            let new_cause = if to > Phase::Safe { Some(cause) } else { None };
            let event = TransitionEvent {
                from: self.state.phase,
                to,
                cause: new_cause,
                timestamp_ms: now,
            };
            // If the triggering reading sits below the committed phase, it
            // opens the next run immediately.
            let next_run = if target < to {
                Some(PendingDowngrade { target, since: now })
            } else {
                None
            };
            self.state =
                DmsState { phase: to, cause: new_cause, entered_at: now, pending_downgrade: next_run };
            return Ok(Some(event));
        }
        self.state.pending_downgrade = Some(pending);
        Ok(None)
    }
}
