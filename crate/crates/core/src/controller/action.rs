use std::collections::BTreeMap;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::descriptor::{ActionSpec, CmpOp, Descriptor, SloCondition, Verb};
use crate::telemetry::{MetricStore, Tick};

use super::cause::RootCause;
use super::ControllerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedAction {
    pub action: String,
    pub cause: RootCause,
    pub issued_tick: Tick,
    /// `issued_tick + cooldown_ticks` of the action.
    pub cooldown_until: Tick,
}

/// Cooldowns per action id and the last parameter successfully applied per
/// (verb, target).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionHistory {
    cooldown_until: BTreeMap<String, Tick>,
    applied: BTreeMap<(Verb, String), f64>,
}

impl ActionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ready(&self, action_id: &str, now: Tick) -> bool {
        self.cooldown_until
            .get(action_id)
            .is_none_or(|&until| now >= until)
    }

    pub fn cooldown_until(&self, action_id: &str) -> Option<Tick> {
        self.cooldown_until.get(action_id).copied()
    }

    pub fn start_cooldown(&mut self, planned: &PlannedAction) {
        self.cooldown_until
            .insert(planned.action.clone(), planned.cooldown_until);
    }

    pub fn record_applied(&mut self, spec: &ActionSpec) {
        self.applied
            .insert((spec.verb, spec.target.clone()), spec.parameter);
    }

    pub fn last_applied(&self, verb: Verb, target: &str) -> Option<f64> {
        self.applied.get(&(verb, target.to_string())).copied()
    }
}

/// Plan at most one action for the top-ranked cause: the first remediation
/// entry matching (its SLO, its metric), and within that entry the first
/// action (by priority, then listed order) that is off cooldown and would
/// change the target's setting.
pub fn infer_actions(
    d: &Descriptor,
    causes: &[RootCause],
    history: &ActionHistory,
    now: Tick,
) -> Vec<PlannedAction> {
    let Some(top) = causes.first() else {
        return Vec::new();
    };
    let Some(entry) = d
        .remediation
        .iter()
        .find(|e| e.matches(&top.slo, &top.metric))
    else {
        info!(
            "tick {now}: no remediation for SLO `{}` with cause {}; report only",
            top.slo, top.metric
        );
        return Vec::new();
    };
    let mut candidates: Vec<&ActionSpec> = entry.actions.iter().filter_map(|id| d.action(id)).collect();
    candidates.sort_by_key(|a| a.priority);
    for spec in candidates {
        if !history.ready(&spec.id, now) {
            debug!("tick {now}: `{}` cooling down", spec.id);
            continue;
        }
        if history.last_applied(spec.verb, &spec.target) == Some(spec.parameter) {
            debug!("tick {now}: `{}` already in effect", spec.id);
            continue;
        }
        return vec![PlannedAction {
            action: spec.id.clone(),
            cause: top.clone(),
            issued_tick: now,
            cooldown_until: now + spec.cooldown_ticks,
        }];
    }
    Vec::new()
}

/// Pre and post windows around an action issued at tick `i`: the pre
/// window is `[i - window + 1, i]`, the post window starts `settle` ticks
/// after `i` and spans `window` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalWindows {
    pub window: Tick,
    pub settle: Tick,
}

impl Default for EvalWindows {
    fn default() -> Self {
        EvalWindows {
            window: 10,
            settle: 5,
        }
    }
}

impl EvalWindows {
    pub fn pre(&self, issued: Tick) -> (Tick, Tick) {
        ((issued + 1).saturating_sub(self.window), issued)
    }

    pub fn post(&self, issued: Tick) -> (Tick, Tick) {
        let start = issued + self.settle + 1;
        (start, start + self.window - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub pre: f64,
    pub post: f64,
    pub effectiveness: f64,
}

const EPS: f64 = 1e-9;

/// Relative improvement of the SLO metric across the action. Positive means
/// better: lower for `<`/`<=`, higher for `>`/`>=`, closer to the threshold
/// for `==`.
pub fn evaluate_outcome(
    store: &MetricStore,
    planned: &PlannedAction,
    slo: &SloCondition,
    windows: EvalWindows,
) -> Result<Outcome, ControllerError> {
    let key = slo.key();
    let (p0, p1) = windows.post(planned.issued_tick);
    let incomplete = || ControllerError::InsufficientPostWindow {
        key: key.clone(),
        needed: p1,
    };
    if store.latest(&key).is_none_or(|s| s.timestamp < p1) {
        return Err(incomplete());
    }
    let post = store.query_window(&key, p0, p1)?.mean().ok_or_else(incomplete)?;
    let (q0, q1) = windows.pre(planned.issued_tick);
    let pre = store
        .query_window(&key, q0, q1)?
        .mean()
        .ok_or_else(|| ControllerError::InsufficientPreWindow { key: key.clone() })?;
    Ok(Outcome {
        pre,
        post,
        effectiveness: effectiveness(slo, pre, post),
    })
}

fn effectiveness(slo: &SloCondition, pre: f64, post: f64) -> f64 {
    let (a, b) = match slo.op {
        CmpOp::Eq => ((pre - slo.threshold).abs(), (post - slo.threshold).abs()),
        _ => (pre, post),
    };
    let gain = (a - b) / a.abs().max(EPS);
    if slo.higher_is_better() {
        -gain
    } else {
        gain
    }
}
