//! The closed feedback loop over a running system.
//!
//! Every control period the [`Controller`] evaluates the SLO conditions of
//! its descriptor. On a failing verdict it ranks root-cause candidates from
//! the anomaly analysis, picks one remediation action, applies it through an
//! [`Actuator`](crate::actuation::Actuator) and later scores its effect into
//! the [`KnowledgeBase`].

mod action;
mod cause;
mod knowledge;
mod runner;
mod status;

pub use action::{
    evaluate_outcome, infer_actions, ActionHistory, EvalWindows, Outcome, PlannedAction,
};
pub use cause::{infer_root_cause, RootCause, FALLBACK_SCORE};
pub use knowledge::{CauseSummary, KnowledgeBase, KnowledgeFilter, KnowledgeRecord};
pub use runner::{run_loop, Controller, LoopConfig, LoopReport, Phase, TraceEvent};
pub use status::{
    evaluate_condition, infer_status, ConditionOutcome, ConditionReport, DebounceState,
    SystemStatus, Verdict, Violation, DEFAULT_EVAL_WINDOW,
};

use std::io;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::descriptor::MetricKey;
use crate::telemetry::{MetricStore, TelemetryError, Tick};

#[derive(Debug, Error)]
pub enum ControllerError {
    /// Strict mode only: a condition's metric had no data.
    #[error("no data for `{key}` in the evaluation window ending at tick {tick}")]
    MissingMetric { key: MetricKey, tick: Tick },
    #[error("post window for `{key}` incomplete: need data through tick {needed}")]
    InsufficientPostWindow { key: MetricKey, needed: Tick },
    #[error("no data for `{key}` in the pre window")]
    InsufficientPreWindow { key: MetricKey },
    #[error("knowledge log: {0}")]
    Io(#[from] io::Error),
    #[error("knowledge log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
}

/// The system under control, as seen by [`run_loop`]: something that can
/// be advanced one tick at a time, publishing its telemetry into a store.
pub trait Plant {
    /// Simulate or wait out one tick and return its timestamp.
    fn advance(&mut self, store: &MetricStore) -> Result<Tick, TelemetryError>;
}
