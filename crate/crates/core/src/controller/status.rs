use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::descriptor::{Descriptor, MetricKey, SloCondition};
use crate::telemetry::{MetricStore, Tick};

use super::ControllerError;

/// Ticks averaged when evaluating a condition.
pub const DEFAULT_EVAL_WINDOW: Tick = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionOutcome {
    Pass,
    Fail,
    /// The metric had no data in the window.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub slo: String,
    pub value: Option<f64>,
    pub outcome: ConditionOutcome,
    /// Consecutive failed evaluations including this one.
    pub streak: u32,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub slo: String,
    pub metric: MetricKey,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemStatus {
    pub tick: Tick,
    pub verdict: Verdict,
    /// Debounced violations; empty iff the verdict is good.
    pub violated: Vec<Violation>,
    pub conditions: Vec<ConditionReport>,
}

impl SystemStatus {
    pub fn is_good(&self) -> bool {
        self.verdict == Verdict::Good
    }

    /// True when any condition failed this evaluation, debounced or not.
    pub fn any_raw_failure(&self) -> bool {
        self.conditions
            .iter()
            .any(|c| c.outcome == ConditionOutcome::Fail)
    }
}

/// Consecutive-failure counters per SLO id, carried between evaluations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DebounceState {
    streaks: BTreeMap<String, u32>,
}

impl DebounceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn streak(&self, slo: &str) -> u32 {
        self.streaks.get(slo).copied().unwrap_or(0)
    }

    /// Drop counters of SLOs no longer in `d`.
    pub fn retain_for(&mut self, d: &Descriptor) {
        self.streaks.retain(|id, _| d.slo(id).is_some());
    }
}

/// Evaluate one condition on the mean of its metric over the `window`
/// ticks ending at `now`.
pub fn evaluate_condition(
    slo: &SloCondition,
    store: &MetricStore,
    now: Tick,
    window: Tick,
) -> (Option<f64>, ConditionOutcome) {
    let t0 = (now + 1).saturating_sub(window.max(1));
    let mean = store
        .query_window(&slo.key(), t0, now)
        .ok()
        .and_then(|s| s.mean());
    match mean {
        Some(v) if slo.op.holds(v, slo.threshold) => (Some(v), ConditionOutcome::Pass),
        Some(v) => (Some(v), ConditionOutcome::Fail),
        None => (None, ConditionOutcome::Indeterminate),
    }
}

/// Evaluate every SLO of `d` at `now` and fold the results into the
/// debounce counters. A condition is violated once it has failed
/// `debounce_ticks` consecutive evaluations; an indeterminate evaluation
/// resets its counter and is excluded from the verdict, or is an error in
/// `strict` mode (in which case `state` is left untouched).
pub fn infer_status(
    d: &Descriptor,
    store: &MetricStore,
    now: Tick,
    window: Tick,
    strict: bool,
    state: &mut DebounceState,
) -> Result<SystemStatus, ControllerError> {
    let evals: Vec<_> = d
        .slos
        .iter()
        .map(|slo| (slo, evaluate_condition(slo, store, now, window)))
        .collect();
    if strict {
        if let Some((slo, _)) = evals
            .iter()
            .find(|(_, (_, o))| *o == ConditionOutcome::Indeterminate)
        {
            return Err(ControllerError::MissingMetric {
                key: slo.key(),
                tick: now,
            });
        }
    }

    let mut conditions = Vec::with_capacity(evals.len());
    let mut violated = Vec::new();
    for (slo, (value, outcome)) in evals {
        let streak = state.streaks.entry(slo.id.clone()).or_insert(0);
        match outcome {
            ConditionOutcome::Fail => *streak = streak.saturating_add(1),
            ConditionOutcome::Pass => *streak = 0,
            ConditionOutcome::Indeterminate => {
                warn!("tick {now}: SLO `{}` indeterminate, no data for {}", slo.id, slo.key());
                *streak = 0;
            }
        }
        let is_violated = *streak >= slo.debounce_ticks;
        if is_violated {
            violated.push(Violation {
                slo: slo.id.clone(),
                metric: slo.key(),
                value: value.expect("failed conditions carry a value"),
            });
        }
        conditions.push(ConditionReport {
            slo: slo.id.clone(),
            value,
            outcome,
            streak: *streak,
            violated: is_violated,
        });
    }
    let verdict = if violated.is_empty() {
        Verdict::Good
    } else {
        Verdict::Fail
    };
    Ok(SystemStatus {
        tick: now,
        verdict,
        violated,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::parse_descriptor;

    fn descriptor(debounce: u32) -> Descriptor {
        parse_descriptor(&format!(
            r#"{{"components": [{{"id": "svc", "kind": "service"}}],
                "metrics": [{{"name": "response_time", "component": "svc",
                              "level": "application", "unit": "s"}}],
                "slos": [{{"id": "rt", "metric": "response_time", "component": "svc",
                           "op": "<=", "threshold": 2.0, "debounce_ticks": {debounce}}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn no_slos_is_good() {
        let d = parse_descriptor(r#"{"components": [{"id": "a", "kind": "host"}]}"#).unwrap();
        let s = infer_status(&d, &MetricStore::default(), 0, 10, true, &mut DebounceState::new())
            .unwrap();
        assert!(s.is_good());
    }

    #[test]
    fn sustained_violation_reports_value() {
        let d = descriptor(3);
        let store = MetricStore::for_descriptor(&d, 1000);
        let mut st = DebounceState::new();
        let mut verdicts = Vec::new();
        for t in 0..5 {
            store.record("svc", "response_time", t, 3.1).unwrap();
            verdicts.push(infer_status(&d, &store, t, 1, false, &mut st).unwrap());
        }
        assert!(verdicts[..2].iter().all(|s| s.is_good()));
        let s = &verdicts[2];
        assert_eq!(s.verdict, Verdict::Fail);
        assert_eq!(s.violated[0].slo, "rt");
        assert!((s.violated[0].value - 3.1).abs() < 1e-12);
    }

    #[test]
    fn oscillation_below_debounce_stays_good() {
        let d = descriptor(3);
        let store = MetricStore::for_descriptor(&d, 1000);
        let mut st = DebounceState::new();
        for t in 0..60 {
            let v = if t % 3 == 2 { 1.0 } else { 3.0 };
            store.record("svc", "response_time", t, v).unwrap();
            let s = infer_status(&d, &store, t, 1, false, &mut st).unwrap();
            assert!(s.is_good(), "tick {t}");
        }
    }

    #[test]
    fn missing_metric_is_indeterminate_or_strict_error() {
        let d = descriptor(1);
        let store = MetricStore::for_descriptor(&d, 1000);
        let mut st = DebounceState::new();
        let s = infer_status(&d, &store, 5, 10, false, &mut st).unwrap();
        assert!(s.is_good());
        assert_eq!(s.conditions[0].outcome, ConditionOutcome::Indeterminate);
        assert!(matches!(
            infer_status(&d, &store, 5, 10, true, &mut st),
            Err(ControllerError::MissingMetric { .. })
        ));
    }
}
