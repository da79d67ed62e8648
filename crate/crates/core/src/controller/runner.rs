use std::io::{self, Write};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::actuation::{Ack, Actuator};
use crate::analysis::{
    build_dependency_graph, prepare_batch, score_batch, AnalysisConfig, AnomalyScore,
    DependencyGraph,
};
use crate::descriptor::Descriptor;
use crate::telemetry::{MetricStore, Tick};

use super::action::{evaluate_outcome, infer_actions, ActionHistory, EvalWindows, PlannedAction};
use super::cause::infer_root_cause;
use super::knowledge::{CauseSummary, KnowledgeBase, KnowledgeRecord};
use super::status::{infer_status, DebounceState, SystemStatus, DEFAULT_EVAL_WINDOW};
use super::{ControllerError, Plant};

/// Entries of each ranked list copied into trace payloads.
const TRACE_TOP: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Ticks between control steps.
    pub period: Tick,
    /// Ticks averaged per condition evaluation.
    pub eval_window: Tick,
    pub outcome: EvalWindows,
    /// Treat a condition without data as an error instead of skipping it.
    pub strict: bool,
    pub analysis: AnalysisConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            period: 5,
            eval_window: DEFAULT_EVAL_WINDOW,
            outcome: EvalWindows::default(),
            strict: false,
            analysis: AnalysisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collect,
    Status,
    Analyze,
    Cause,
    Action,
    Apply,
    Evaluate,
    Reload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: Tick,
    pub phase: Phase,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopReport {
    pub ticks: Tick,
    pub steps: u64,
    pub fail_statuses: u64,
    pub actuator_calls: u64,
    pub actions_applied: u64,
    pub last_status: Option<SystemStatus>,
}

impl LoopReport {
    /// The final evaluation still had debounced violations.
    pub fn unresolved(&self) -> bool {
        self.last_status.as_ref().is_some_and(|s| !s.is_good())
    }
}

/// Loop state: debounce counters, cooldowns, the action awaiting
/// evaluation, the knowledge base and the trace.
#[derive(Debug)]
pub struct Controller {
    descriptor: Descriptor,
    cfg: LoopConfig,
    debounce: DebounceState,
    history: ActionHistory,
    in_flight: Option<PlannedAction>,
    knowledge: KnowledgeBase,
    trace: Vec<TraceEvent>,
    report: LoopReport,
}

impl Controller {
    pub fn new(descriptor: Descriptor, cfg: LoopConfig) -> Self {
        Self::with_knowledge(descriptor, cfg, KnowledgeBase::new())
    }

    pub fn with_knowledge(descriptor: Descriptor, cfg: LoopConfig, knowledge: KnowledgeBase) -> Self {
        Controller {
            descriptor,
            cfg,
            debounce: DebounceState::new(),
            history: ActionHistory::new(),
            in_flight: None,
            knowledge,
            trace: Vec::new(),
            report: LoopReport::default(),
        }
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn config(&self) -> &LoopConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn knowledge(&self) -> &KnowledgeBase {
        &self.knowledge
    }

    pub fn history(&self) -> &ActionHistory {
        &self.history
    }

    pub fn report(&self) -> &LoopReport {
        &self.report
    }

    pub fn in_flight(&self) -> Option<&PlannedAction> {
        self.in_flight.as_ref()
    }

    /// Write the trace as one JSON object per line.
    pub fn write_trace(&self, mut w: impl Write) -> io::Result<()> {
        for e in &self.trace {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn emit(&mut self, tick: Tick, phase: Phase, payload: Value) {
        self.trace.push(TraceEvent {
            tick,
            phase,
            payload,
        });
    }

    /// Swap in a new descriptor without restarting. Its metrics are
    /// registered in `store`; debounce counters of surviving SLO ids and all
    /// cooldowns carry over.
    pub fn reload(&mut self, descriptor: Descriptor, store: &MetricStore, now: Tick) {
        for key in descriptor.metric_keys() {
            store.register(key);
        }
        self.debounce.retain_for(&descriptor);
        let slos: Vec<&str> = descriptor.slos.iter().map(|s| s.id.as_str()).collect();
        let payload = json!({ "slos": slos, "metrics": descriptor.metrics.len() });
        self.descriptor = descriptor;
        self.emit(now, Phase::Reload, payload);
    }

    /// One control step at tick `now`.
    pub fn step(
        &mut self,
        store: &MetricStore,
        actuator: &mut dyn Actuator,
        now: Tick,
    ) -> Result<SystemStatus, ControllerError> {
        self.report.steps += 1;
        self.settle_in_flight(store, now, false)?;

        let watched: Vec<_> = self.descriptor.metric_keys().collect();
        let fresh = watched
            .iter()
            .filter(|k| store.latest(k).is_some_and(|s| s.timestamp == now))
            .count();
        self.emit(
            now,
            Phase::Collect,
            json!({ "watched": watched.len(), "fresh": fresh }),
        );

        let status = infer_status(
            &self.descriptor,
            store,
            now,
            self.cfg.eval_window,
            self.cfg.strict,
            &mut self.debounce,
        )?;
        self.emit(now, Phase::Status, to_value(&status));
        self.report.last_status = Some(status.clone());
        if status.is_good() {
            return Ok(status);
        }
        self.report.fail_statuses += 1;

        if let Some(p) = &self.in_flight {
            let payload = json!({ "planned": Value::Null, "awaiting": p.action });
            self.emit(now, Phase::Action, payload);
            return Ok(status);
        }

        let (graph, critical) = self.analyze(store, now);
        let causes = infer_root_cause(
            &status,
            &graph,
            &critical,
            self.cfg.analysis.criticality_threshold,
        );
        self.emit(
            now,
            Phase::Cause,
            to_value(&causes.iter().take(TRACE_TOP).collect::<Vec<_>>()),
        );

        let plan = infer_actions(&self.descriptor, &causes, &self.history, now);
        self.emit(now, Phase::Action, json!({ "planned": plan.first() }));
        let Some(planned) = plan.into_iter().next() else {
            return Ok(status);
        };
        let spec = self
            .descriptor
            .action(&planned.action)
            .expect("planned actions come from the descriptor")
            .clone();
        let ack = actuator.apply(&spec, now);
        self.report.actuator_calls += 1;
        self.history.start_cooldown(&planned);
        self.emit(
            now,
            Phase::Apply,
            json!({
                "action": spec.id,
                "verb": spec.verb,
                "target": spec.target,
                "parameter": spec.parameter,
                "ack": to_value(&ack),
            }),
        );
        match ack {
            Ack::Applied { .. } => {
                info!("tick {now}: applied `{}`", spec.id);
                self.report.actions_applied += 1;
                self.history.record_applied(&spec);
                self.in_flight = Some(planned);
            }
            other => warn!("tick {now}: `{}` not applied: {}", spec.id, other.token()),
        }
        Ok(status)
    }

    fn analyze(&mut self, store: &MetricStore, now: Tick) -> (DependencyGraph, Vec<AnomalyScore>) {
        let cfg = &self.cfg.analysis;
        let t0 = (now + 1).saturating_sub(cfg.feature_window);
        let batch = prepare_batch(
            store,
            self.descriptor.metric_keys(),
            t0.saturating_sub(cfg.history_ticks),
            now,
        );
        let graph = build_dependency_graph(&self.descriptor, &batch, cfg.min_abs_corr);
        let (critical, error) = match score_batch(&self.descriptor, &batch, &graph, (t0, now), cfg) {
            Ok(c) => (c, None),
            Err(e) => {
                warn!("tick {now}: anomaly analysis unavailable: {e}");
                (Vec::new(), Some(e.to_string()))
            }
        };
        self.emit(
            now,
            Phase::Analyze,
            json!({
                "series": batch.len(),
                "edges": graph.edges().len(),
                "critical": to_value(&critical.iter().take(TRACE_TOP).collect::<Vec<_>>()),
                "error": error,
            }),
        );
        (graph, critical)
    }

    /// Score the in-flight action once its post window has elapsed, or
    /// unconditionally (as a failure if data is short) when `force` is set.
    fn settle_in_flight(
        &mut self,
        store: &MetricStore,
        now: Tick,
        force: bool,
    ) -> Result<(), ControllerError> {
        let Some(p) = &self.in_flight else {
            return Ok(());
        };
        let (_, post_end) = self.cfg.outcome.post(p.issued_tick);
        if now < post_end && !force {
            return Ok(());
        }
        let p = self.in_flight.take().expect("checked above");
        let result = match self.descriptor.slo(&p.cause.slo) {
            Some(slo) => evaluate_outcome(store, &p, slo, self.cfg.outcome),
            None => {
                let payload = json!({
                    "action": p.action,
                    "slo": p.cause.slo,
                    "tick": p.issued_tick,
                    "error": "SLO removed by reload",
                });
                self.emit(now, Phase::Evaluate, payload);
                return Ok(());
            }
        };
        match result {
            Ok(outcome) => {
                let record = KnowledgeRecord {
                    violation: p.cause.slo.clone(),
                    cause: CauseSummary::from(&p.cause),
                    action: p.action.clone(),
                    pre_value: outcome.pre,
                    post_value: outcome.post,
                    effectiveness: outcome.effectiveness,
                    tick: p.issued_tick,
                };
                self.emit(now, Phase::Evaluate, to_value(&record));
                self.knowledge.record(record)?;
            }
            Err(e) => {
                let payload = json!({
                    "action": p.action,
                    "slo": p.cause.slo,
                    "tick": p.issued_tick,
                    "error": e.to_string(),
                });
                self.emit(now, Phase::Evaluate, payload);
            }
        }
        Ok(())
    }

    /// Close out the run at tick `now`: an action still awaiting evaluation
    /// is scored if its data is complete, otherwise reported as a failure.
    pub fn finish(&mut self, store: &MetricStore, now: Tick) -> Result<LoopReport, ControllerError> {
        self.settle_in_flight(store, now, true)?;
        self.report.ticks = now + 1;
        Ok(self.report.clone())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("trace payloads serialize")
}

/// Advance `plant` for `horizon` ticks, running a control step at the end
/// of every period. Actions take effect from the following tick.
pub fn run_loop<P: Plant + Actuator>(
    controller: &mut Controller,
    store: &MetricStore,
    plant: &mut P,
    horizon: Tick,
) -> Result<LoopReport, ControllerError> {
    let period = controller.config().period.max(1);
    let mut last = 0;
    for _ in 0..horizon {
        let t = plant.advance(store)?;
        last = t;
        if (t + 1) % period == 0 {
            controller.step(store, plant, t)?;
        }
    }
    controller.finish(store, last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::OrchestratorStub;
    use crate::descriptor::{parse_descriptor, ActionSpec, Verb};
    use crate::telemetry::TelemetryError;
    use std::collections::BTreeSet;

    /// A queue whose response time is `load / capacity`, where capacity is
    /// the replica count set through `scale_replicas`.
    struct Toy {
        t: Tick,
        load: f64,
        replicas: f64,
        surge_at: Tick,
        calls: Vec<Tick>,
    }

    impl Plant for Toy {
        fn advance(&mut self, store: &MetricStore) -> Result<Tick, TelemetryError> {
            let t = self.t;
            let load = if t >= self.surge_at { self.load * 3.0 } else { self.load };
            store.record("svc", "response_time", t, load / self.replicas)?;
            store.record("svc", "load", t, load + (t % 7) as f64 * 0.01)?;
            self.t += 1;
            Ok(t)
        }
    }

    impl Actuator for Toy {
        fn capabilities(&self) -> BTreeSet<Verb> {
            BTreeSet::from([Verb::ScaleReplicas])
        }

        fn apply(&mut self, a: &ActionSpec, tick: Tick) -> Ack {
            self.calls.push(tick);
            self.replicas = a.parameter;
            Ack::Applied { changed: true }
        }
    }

    fn descriptor() -> Descriptor {
        parse_descriptor(
            r#"{"components": [{"id": "svc", "kind": "service"}],
                "metrics": [{"name": "response_time", "component": "svc", "level": "application"},
                            {"name": "load", "component": "svc", "level": "application"}],
                "slos": [{"id": "rt", "metric": "response_time", "component": "svc",
                          "op": "<=", "threshold": 2.0, "debounce_ticks": 2}],
                "actions": [{"id": "scale", "level": "infrastructure", "verb": "scale_replicas",
                             "target": "svc", "parameter": 4, "cooldown_ticks": 50}],
                "remediation": [{"slo": "rt", "cause_component": "*", "cause_metric": "*",
                                 "actions": ["scale"]}]}"#,
        )
        .unwrap()
    }

    fn toy(surge_at: Tick) -> Toy {
        Toy {
            t: 0,
            load: 1.0,
            replicas: 1.0,
            surge_at,
            calls: Vec::new(),
        }
    }

    #[test]
    fn healthy_system_is_quiescent() {
        let store = MetricStore::default();
        let mut c = Controller::new(descriptor(), LoopConfig::default());
        let mut plant = toy(u64::MAX);
        let report = run_loop(&mut c, &store, &mut plant, 500).unwrap();
        assert!(plant.calls.is_empty());
        assert_eq!(report.fail_statuses, 0);
        assert!(c.trace().iter().all(|e| matches!(e.phase, Phase::Collect | Phase::Status)));
    }

    #[test]
    fn violation_triggers_one_action_then_recovery_record() {
        let store = MetricStore::default();
        let mut c = Controller::new(descriptor(), LoopConfig::default());
        let mut plant = toy(400);
        let report = run_loop(&mut c, &store, &mut plant, 600).unwrap();
        assert_eq!(plant.calls.len(), 1);
        assert!(plant.calls[0] >= 400 + 2);
        assert!(!report.unresolved());
        let kb = c.knowledge().records();
        assert_eq!(kb.len(), 1);
        assert!(kb[0].effectiveness > 0.5, "{:?}", kb[0]);
    }

    #[test]
    fn identical_runs_identical_traces() {
        let run = || {
            let store = MetricStore::default();
            let mut c = Controller::new(descriptor(), LoopConfig::default());
            run_loop(&mut c, &store, &mut toy(300), 500).unwrap();
            let mut buf = Vec::new();
            c.write_trace(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejected_action_still_cools_down() {
        let store = MetricStore::default();
        let mut c = Controller::new(descriptor(), LoopConfig::default());
        let mut stub = OrchestratorStub::with_targets(["elsewhere".to_string()]);
        let mut plant = toy(0);
        for _ in 0..200 {
            let t = plant.advance(&store).unwrap();
            if (t + 1) % 5 == 0 {
                c.step(&store, &mut stub, t).unwrap();
            }
        }
        let applies: Vec<Tick> = c
            .trace()
            .iter()
            .filter(|e| e.phase == Phase::Apply)
            .map(|e| e.tick)
            .collect();
        assert_eq!(applies.len(), 4, "{applies:?}");
        assert!(applies.windows(2).all(|w| w[1] - w[0] >= 50));
        assert!(c.knowledge().is_empty());
    }
}
