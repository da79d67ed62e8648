//! The boundary through which planned actions change the managed system.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::Plant;
use crate::descriptor::{ActionSpec, Verb};
use crate::telemetry::{MetricStore, TelemetryError, Tick};

/// Parameter value of `switch_model` selecting the heavy model.
pub const MODEL_HEAVY: f64 = 0.0;
/// Parameter value of `switch_model` selecting the light model.
pub const MODEL_LIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rejection {
    UnsupportedVerb { verb: Verb },
    UnknownTarget { target: String },
    OutOfRange { parameter: f64, reason: String },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::UnsupportedVerb { verb } => write!(f, "unsupported verb `{verb}`"),
            Rejection::UnknownTarget { target } => write!(f, "unknown target `{target}`"),
            Rejection::OutOfRange { parameter, reason } => {
                write!(f, "parameter {parameter} out of range: {reason}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Ack {
    /// `changed` is false when the target already had the requested setting.
    Applied { changed: bool },
    /// Policy rejection; the target was not touched.
    Rejected { reason: Rejection },
    /// Runtime failure while applying; the target was not touched.
    Failed { reason: String },
}

impl Ack {
    pub fn is_applied(&self) -> bool {
        matches!(self, Ack::Applied { .. })
    }

    pub fn token(&self) -> &'static str {
        match self {
            Ack::Applied { changed: true } => "applied",
            Ack::Applied { changed: false } => "unchanged",
            Ack::Rejected { .. } => "rejected",
            Ack::Failed { .. } => "failed",
        }
    }
}

pub trait Actuator {
    fn capabilities(&self) -> BTreeSet<Verb>;

    /// Apply one action. Implementations must reject verbs outside
    /// [`Actuator::capabilities`] with [`Rejection::UnsupportedVerb`] and
    /// leave state untouched on anything other than `Applied`.
    fn apply(&mut self, action: &ActionSpec, tick: Tick) -> Ack;
}

impl<A: Actuator + ?Sized> Actuator for &mut A {
    fn capabilities(&self) -> BTreeSet<Verb> {
        (**self).capabilities()
    }

    fn apply(&mut self, action: &ActionSpec, tick: Tick) -> Ack {
        (**self).apply(action, tick)
    }
}

/// Range checks shared by every actuator.
pub fn check_parameter(verb: Verb, p: f64) -> Result<(), Rejection> {
    let bad = |reason: &str| {
        Err(Rejection::OutOfRange {
            parameter: p,
            reason: reason.to_string(),
        })
    };
    if !p.is_finite() {
        return bad("not finite");
    }
    match verb {
        Verb::ScaleReplicas if p < 1.0 || p.fract() != 0.0 => bad("replicas must be an integer >= 1"),
        Verb::SetQueueCap if p < 1.0 || p.fract() != 0.0 => bad("queue cap must be an integer >= 1"),
        Verb::SetFrameRate if p <= 0.0 => bad("frame rate must be > 0"),
        Verb::SetResourceLimit if p <= 0.0 => bad("resource limit must be > 0"),
        Verb::SwitchModel if p != MODEL_HEAVY && p != MODEL_LIGHT => {
            bad("model must be 0 (heavy) or 1 (light)")
        }
        _ => Ok(()),
    }
}

/// Stand-in for an external orchestrator client. It validates requests,
/// remembers the last setting per (verb, target) and logs what it would ask
/// the cluster to do, but touches nothing.
#[derive(Debug, Clone, Default)]
pub struct OrchestratorStub {
    targets: Option<BTreeSet<String>>,
    state: BTreeMap<(Verb, String), f64>,
}

impl OrchestratorStub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Restrict accepted targets to the given component ids.
    pub fn with_targets(targets: impl IntoIterator<Item = String>) -> Self {
        OrchestratorStub {
            targets: Some(targets.into_iter().collect()),
            state: BTreeMap::new(),
        }
    }

    pub fn setting(&self, verb: Verb, target: &str) -> Option<f64> {
        self.state.get(&(verb, target.to_string())).copied()
    }
}

impl Actuator for OrchestratorStub {
    fn capabilities(&self) -> BTreeSet<Verb> {
        Verb::ALL.into_iter().collect()
    }

    fn apply(&mut self, action: &ActionSpec, _tick: Tick) -> Ack {
        if let Some(t) = &self.targets {
            if !t.contains(&action.target) {
                return Ack::Rejected {
                    reason: Rejection::UnknownTarget {
                        target: action.target.clone(),
                    },
                };
            }
        }
        if let Err(reason) = check_parameter(action.verb, action.parameter) {
            return Ack::Rejected { reason };
        }
        log::info!(
            "orchestrator request: {} {} -> {}",
            action.verb,
            action.target,
            action.parameter
        );
        let prev = self
            .state
            .insert((action.verb, action.target.clone()), action.parameter);
        Ack::Applied {
            changed: prev != Some(action.parameter),
        }
    }
}

/// Decorator writing `tick,action_id,verb,target,parameter,ack` for every
/// action passed through to the inner actuator.
pub struct LoggingActuator<A, W> {
    inner: A,
    sink: W,
}

impl<A: Actuator, W: Write> LoggingActuator<A, W> {
    pub fn new(inner: A, sink: W) -> Self {
        LoggingActuator { inner, sink }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut A {
        &mut self.inner
    }

    pub fn into_parts(self) -> (A, W) {
        (self.inner, self.sink)
    }
}

impl<A: Actuator, W: Write> Actuator for LoggingActuator<A, W> {
    fn capabilities(&self) -> BTreeSet<Verb> {
        self.inner.capabilities()
    }

    fn apply(&mut self, action: &ActionSpec, tick: Tick) -> Ack {
        let ack = self.inner.apply(action, tick);
        let line = format!(
            "{},{},{},{},{},{}\n",
            tick,
            action.id,
            action.verb,
            action.target,
            action.parameter,
            ack.token()
        );
        if let Err(e) = self.sink.write_all(line.as_bytes()) {
            log::warn!("action log write failed: {e}");
        }
        ack
    }
}

/// A logged plant is still a plant, so the loop can drive and actuate it
/// through one handle.
impl<A: Actuator + Plant, W: Write> Plant for LoggingActuator<A, W> {
    fn advance(&mut self, store: &MetricStore) -> Result<Tick, TelemetryError> {
        self.inner.advance(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::Level;

    fn action(verb: Verb, target: &str, parameter: f64) -> ActionSpec {
        ActionSpec {
            id: "a1".into(),
            level: verb.level(),
            verb,
            target: target.into(),
            parameter,
            priority: 0,
            cooldown_ticks: 10,
        }
    }

    #[test]
    fn parameter_ranges() {
        assert!(check_parameter(Verb::ScaleReplicas, 2.0).is_ok());
        assert!(check_parameter(Verb::ScaleReplicas, 0.0).is_err());
        assert!(check_parameter(Verb::ScaleReplicas, 1.5).is_err());
        assert!(check_parameter(Verb::SetFrameRate, 0.0).is_err());
        assert!(check_parameter(Verb::SwitchModel, MODEL_LIGHT).is_ok());
        assert!(check_parameter(Verb::SwitchModel, 2.0).is_err());
    }

    #[test]
    fn stub_is_idempotent() {
        let mut stub = OrchestratorStub::with_targets(["recognizer".to_string()]);
        let a = action(Verb::ScaleReplicas, "recognizer", 2.0);
        assert_eq!(stub.apply(&a, 0), Ack::Applied { changed: true });
        assert_eq!(stub.apply(&a, 1), Ack::Applied { changed: false });
        assert_eq!(stub.setting(Verb::ScaleReplicas, "recognizer"), Some(2.0));
        let ghost = action(Verb::ScaleReplicas, "ghost", 2.0);
        assert!(matches!(
            stub.apply(&ghost, 2),
            Ack::Rejected { reason: Rejection::UnknownTarget { .. } }
        ));
    }

    #[test]
    fn logging_line_format() {
        let mut log = LoggingActuator::new(OrchestratorStub::new(), Vec::new());
        let a = action(Verb::SetFrameRate, "motion-detection", 2.5);
        assert_eq!(a.level, Level::Application);
        log.apply(&a, 40);
        log.apply(&action(Verb::SetFrameRate, "motion-detection", 0.0), 45);
        let (_, buf) = log.into_parts();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "40,a1,set_frame_rate,motion-detection,2.5,applied\n\
             45,a1,set_frame_rate,motion-detection,0,rejected\n"
        );
    }
}
