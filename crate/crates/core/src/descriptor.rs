//! The declarative application model that drives the feedback loop.
//!
//! A descriptor names the components of the application, the metrics they
//! expose, the SLO conditions over those metrics, the catalog of corrective
//! actions, the declared data-flow dependencies between components and the
//! remediation map tying violations and causes to ordered action lists.
//!
//! The on-disk form is a single JSON document:
//!
//! ```json
//! {
//!   "components":   [{"id": "recognizer", "kind": "service"}],
//!   "metrics":      [{"name": "response_time", "component": "recognizer",
//!                     "level": "application", "unit": "s"}],
//!   "slos":         [{"id": "rt", "metric": "response_time", "component": "recognizer",
//!                     "op": "<=", "threshold": 2.0, "debounce_ticks": 3}],
//!   "actions":      [{"id": "scale-2", "level": "infrastructure", "verb": "scale_replicas",
//!                     "target": "recognizer", "parameter": 2, "priority": 0,
//!                     "cooldown_ticks": 10}],
//!   "dependencies": [["camera", "recognizer"]],
//!   "remediation":  [{"slo": "rt", "cause_component": "*", "cause_metric": "*",
//!                     "actions": ["scale-2"]}]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DEBOUNCE_TICKS: u32 = 3;
pub const DEFAULT_COOLDOWN_TICKS: u64 = 10;

/// Wildcard token accepted in remediation cause patterns.
pub const WILDCARD: &str = "*";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{context} references unknown {kind} `{id}`")]
    DanglingReference {
        context: String,
        kind: &'static str,
        id: String,
    },
    #[error("invalid {kind} token `{token}` in {context}")]
    InvalidToken {
        kind: &'static str,
        token: String,
        context: String,
    },
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("invalid value in {context}: {message}")]
    InvalidValue { context: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentKind {
    Host,
    Pod,
    Service,
    MetricSource,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Host => "host",
            ComponentKind::Pod => "pod",
            ComponentKind::Service => "service",
            ComponentKind::MetricSource => "metric-source",
        }
    }
}

impl FromStr for ComponentKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "host" => ComponentKind::Host,
            "pod" => ComponentKind::Pod,
            "service" => ComponentKind::Service,
            "metric-source" => ComponentKind::MetricSource,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Application,
    Infrastructure,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Application => "application",
            Level::Infrastructure => "infrastructure",
        }
    }
}

impl FromStr for Level {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "application" => Ok(Level::Application),
            "infrastructure" => Ok(Level::Infrastructure),
            _ => Err(()),
        }
    }
}

/// Comparison operator of an SLO condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
        }
    }

    /// Whether `value op threshold` holds.
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            CmpOp::Lt => value < threshold,
            CmpOp::Le => value <= threshold,
            CmpOp::Gt => value > threshold,
            CmpOp::Ge => value >= threshold,
            CmpOp::Eq => value == threshold,
        }
    }
}

impl FromStr for CmpOp {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            "==" => CmpOp::Eq,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    ScaleReplicas,
    SetResourceLimit,
    SetFrameRate,
    SwitchModel,
    SetQueueCap,
}

impl Verb {
    pub const ALL: [Verb; 5] = [
        Verb::ScaleReplicas,
        Verb::SetResourceLimit,
        Verb::SetFrameRate,
        Verb::SwitchModel,
        Verb::SetQueueCap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::ScaleReplicas => "scale_replicas",
            Verb::SetResourceLimit => "set_resource_limit",
            Verb::SetFrameRate => "set_frame_rate",
            Verb::SwitchModel => "switch_model",
            Verb::SetQueueCap => "set_queue_cap",
        }
    }

    /// The level a verb belongs to: resource-side verbs are infrastructure,
    /// the rest change application behaviour.
    pub fn level(self) -> Level {
        match self {
            Verb::ScaleReplicas | Verb::SetResourceLimit => Level::Infrastructure,
            Verb::SetFrameRate | Verb::SwitchModel | Verb::SetQueueCap => Level::Application,
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verb {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Verb::ALL.into_iter().find(|v| v.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentRef {
    pub id: String,
    pub kind: ComponentKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub name: String,
    pub component: String,
    pub level: Level,
    pub unit: String,
}

/// Identity of one metric series: the component that exposes it and its name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricKey {
    pub component: String,
    pub metric: String,
}

impl MetricKey {
    pub fn new(component: impl Into<String>, metric: impl Into<String>) -> Self {
        MetricKey {
            component: component.into(),
            metric: metric.into(),
        }
    }
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.component, self.metric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SloCondition {
    pub id: String,
    pub metric: String,
    pub component: String,
    pub op: CmpOp,
    pub threshold: f64,
    pub debounce_ticks: u32,
}

impl SloCondition {
    pub fn key(&self) -> MetricKey {
        MetricKey::new(&self.component, &self.metric)
    }

    /// True when larger observed values are the desirable direction.
    pub fn higher_is_better(&self) -> bool {
        matches!(self.op, CmpOp::Gt | CmpOp::Ge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub id: String,
    pub level: Level,
    pub verb: Verb,
    pub target: String,
    pub parameter: f64,
    pub priority: i64,
    pub cooldown_ticks: u64,
}

/// One side of a remediation cause pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Any,
    Exact(String),
}

impl Pattern {
    fn parse(s: String) -> Self {
        if s == WILDCARD {
            Pattern::Any
        } else {
            Pattern::Exact(s)
        }
    }

    pub fn matches(&self, s: &str) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Exact(p) => p == s,
        }
    }

    fn render(&self) -> String {
        match self {
            Pattern::Any => WILDCARD.to_string(),
            Pattern::Exact(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemediationEntry {
    pub slo: String,
    pub cause_component: Pattern,
    pub cause_metric: Pattern,
    /// Action ids, in the order they should be tried.
    pub actions: Vec<String>,
}

impl RemediationEntry {
    pub fn matches(&self, slo: &str, cause: &MetricKey) -> bool {
        self.slo == slo
            && self.cause_component.matches(&cause.component)
            && self.cause_metric.matches(&cause.metric)
    }
}

/// A fully cross-validated application model.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub components: Vec<ComponentRef>,
    pub metrics: Vec<MetricSpec>,
    pub slos: Vec<SloCondition>,
    pub actions: Vec<ActionSpec>,
    pub dependencies: Vec<(String, String)>,
    pub remediation: Vec<RemediationEntry>,
}

impl Descriptor {
    pub fn component(&self, id: &str) -> Option<&ComponentRef> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn action(&self, id: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.id == id)
    }

    pub fn slo(&self, id: &str) -> Option<&SloCondition> {
        self.slos.iter().find(|s| s.id == id)
    }

    pub fn metric_keys(&self) -> impl Iterator<Item = MetricKey> + '_ {
        self.metrics
            .iter()
            .map(|m| MetricKey::new(&m.component, &m.name))
    }

    /// Serialize back to the JSON document form accepted by [`parse_descriptor`].
    pub fn render(&self) -> String {
        let raw = RawDescriptor {
            components: self
                .components
                .iter()
                .map(|c| RawComponent {
                    id: c.id.clone(),
                    kind: c.kind.as_str().to_string(),
                })
                .collect(),
            metrics: self
                .metrics
                .iter()
                .map(|m| RawMetric {
                    name: m.name.clone(),
                    component: m.component.clone(),
                    level: m.level.as_str().to_string(),
                    unit: m.unit.clone(),
                })
                .collect(),
            slos: self
                .slos
                .iter()
                .map(|s| RawSlo {
                    id: s.id.clone(),
                    metric: s.metric.clone(),
                    component: s.component.clone(),
                    op: s.op.as_str().to_string(),
                    threshold: s.threshold,
                    debounce_ticks: s.debounce_ticks,
                })
                .collect(),
            actions: self
                .actions
                .iter()
                .map(|a| RawAction {
                    id: a.id.clone(),
                    level: a.level.as_str().to_string(),
                    verb: a.verb.as_str().to_string(),
                    target: a.target.clone(),
                    parameter: a.parameter,
                    priority: a.priority,
                    cooldown_ticks: a.cooldown_ticks,
                })
                .collect(),
            dependencies: self.dependencies.clone(),
            remediation: self
                .remediation
                .iter()
                .map(|r| RawRemediation {
                    slo: r.slo.clone(),
                    cause_component: r.cause_component.render(),
                    cause_metric: r.cause_metric.render(),
                    actions: r.actions.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("descriptor serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDescriptor {
    #[serde(default)]
    components: Vec<RawComponent>,
    #[serde(default)]
    metrics: Vec<RawMetric>,
    #[serde(default)]
    slos: Vec<RawSlo>,
    #[serde(default)]
    actions: Vec<RawAction>,
    #[serde(default)]
    dependencies: Vec<(String, String)>,
    #[serde(default)]
    remediation: Vec<RawRemediation>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    id: String,
    kind: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    name: String,
    component: String,
    level: String,
    #[serde(default)]
    unit: String,
}

fn default_debounce() -> u32 {
    DEFAULT_DEBOUNCE_TICKS
}

fn default_cooldown() -> u64 {
    DEFAULT_COOLDOWN_TICKS
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlo {
    id: String,
    metric: String,
    component: String,
    op: String,
    threshold: f64,
    #[serde(default = "default_debounce")]
    debounce_ticks: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    id: String,
    level: String,
    verb: String,
    target: String,
    parameter: f64,
    #[serde(default)]
    priority: i64,
    #[serde(default = "default_cooldown")]
    cooldown_ticks: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRemediation {
    slo: String,
    cause_component: String,
    cause_metric: String,
    actions: Vec<String>,
}

fn token<T: FromStr>(
    kind: &'static str,
    tok: &str,
    context: impl Into<String>,
) -> Result<T, DescriptorError> {
    tok.parse().map_err(|_| DescriptorError::InvalidToken {
        kind,
        token: tok.to_string(),
        context: context.into(),
    })
}

fn dangling(context: impl Into<String>, kind: &'static str, id: &str) -> DescriptorError {
    DescriptorError::DanglingReference {
        context: context.into(),
        kind,
        id: id.to_string(),
    }
}

/// Parse and cross-validate a descriptor document.
///
/// Either every invariant holds on the returned value or an error names the
/// first offending entry.
pub fn parse_descriptor(document: &str) -> Result<Descriptor, DescriptorError> {
    let raw: RawDescriptor =
        serde_json::from_str(document).map_err(|e| DescriptorError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;

    let mut components = Vec::with_capacity(raw.components.len());
    let mut component_ids = BTreeSet::new();
    for c in raw.components {
        if c.id.is_empty() {
            return Err(DescriptorError::InvalidValue {
                context: "components".into(),
                message: "component id must be non-empty".into(),
            });
        }
        let kind = token("component kind", &c.kind, format!("component `{}`", c.id))?;
        if !component_ids.insert(c.id.clone()) {
            return Err(DescriptorError::Duplicate {
                kind: "component",
                id: c.id,
            });
        }
        components.push(ComponentRef { id: c.id, kind });
    }

    let mut metrics = Vec::with_capacity(raw.metrics.len());
    let mut metric_keys = BTreeSet::new();
    for m in raw.metrics {
        let ctx = format!("metric `{}/{}`", m.component, m.name);
        if m.name.is_empty() {
            return Err(DescriptorError::InvalidValue {
                context: ctx,
                message: "metric name must be non-empty".into(),
            });
        }
        if !component_ids.contains(&m.component) {
            return Err(dangling(ctx, "component", &m.component));
        }
        let level = token("metric level", &m.level, ctx)?;
        if !metric_keys.insert((m.component.clone(), m.name.clone())) {
            return Err(DescriptorError::Duplicate {
                kind: "metric",
                id: format!("{}/{}", m.component, m.name),
            });
        }
        metrics.push(MetricSpec {
            name: m.name,
            component: m.component,
            level,
            unit: m.unit,
        });
    }
    let metric_names: BTreeSet<&str> = metrics.iter().map(|m| m.name.as_str()).collect();

    let mut slos = Vec::with_capacity(raw.slos.len());
    let mut slo_ids = BTreeSet::new();
    for s in raw.slos {
        let ctx = format!("slo `{}`", s.id);
        if !slo_ids.insert(s.id.clone()) {
            return Err(DescriptorError::Duplicate { kind: "slo", id: s.id });
        }
        let op = token("op", &s.op, ctx.clone())?;
        if !metric_keys.contains(&(s.component.clone(), s.metric.clone())) {
            return Err(dangling(
                ctx,
                "metric",
                &format!("{}/{}", s.component, s.metric),
            ));
        }
        if !s.threshold.is_finite() {
            return Err(DescriptorError::InvalidValue {
                context: ctx,
                message: "threshold must be finite".into(),
            });
        }
        if s.debounce_ticks == 0 {
            return Err(DescriptorError::InvalidValue {
                context: ctx,
                message: "debounce_ticks must be positive".into(),
            });
        }
        slos.push(SloCondition {
            id: s.id,
            metric: s.metric,
            component: s.component,
            op,
            threshold: s.threshold,
            debounce_ticks: s.debounce_ticks,
        });
    }

    let mut actions = Vec::with_capacity(raw.actions.len());
    let mut action_ids = BTreeSet::new();
    for a in raw.actions {
        let ctx = format!("action `{}`", a.id);
        if !action_ids.insert(a.id.clone()) {
            return Err(DescriptorError::Duplicate {
                kind: "action",
                id: a.id,
            });
        }
        let level: Level = token("action level", &a.level, ctx.clone())?;
        let verb: Verb = token("verb", &a.verb, ctx.clone())?;
        if verb.level() != level {
            return Err(DescriptorError::InvalidValue {
                context: ctx,
                message: format!(
                    "verb `{}` is {}-level, declared {}",
                    verb,
                    verb.level().as_str(),
                    level.as_str()
                ),
            });
        }
        if !component_ids.contains(&a.target) {
            return Err(dangling(ctx, "component", &a.target));
        }
        if !a.parameter.is_finite() {
            return Err(DescriptorError::InvalidValue {
                context: ctx,
                message: "parameter must be finite".into(),
            });
        }
        actions.push(ActionSpec {
            id: a.id,
            level,
            verb,
            target: a.target,
            parameter: a.parameter,
            priority: a.priority,
            cooldown_ticks: a.cooldown_ticks,
        });
    }

    for (from, to) in &raw.dependencies {
        for id in [from, to] {
            if !component_ids.contains(id) {
                return Err(dangling(
                    format!("dependency `{from}` -> `{to}`"),
                    "component",
                    id,
                ));
            }
        }
    }

    let mut remediation = Vec::with_capacity(raw.remediation.len());
    for r in raw.remediation {
        let ctx = format!("remediation for slo `{}`", r.slo);
        if !slo_ids.contains(&r.slo) {
            return Err(dangling(ctx, "slo", &r.slo));
        }
        if r.cause_component != WILDCARD && !component_ids.contains(&r.cause_component) {
            return Err(dangling(ctx, "component", &r.cause_component));
        }
        if r.cause_metric != WILDCARD && !metric_names.contains(r.cause_metric.as_str()) {
            return Err(dangling(ctx, "metric", &r.cause_metric));
        }
        if r.actions.is_empty() {
            return Err(DescriptorError::InvalidValue {
                context: ctx,
                message: "at least one action is required".into(),
            });
        }
        for id in &r.actions {
            if !action_ids.contains(id) {
                return Err(dangling(ctx.clone(), "action", id));
            }
        }
        remediation.push(RemediationEntry {
            slo: r.slo,
            cause_component: Pattern::parse(r.cause_component),
            cause_metric: Pattern::parse(r.cause_metric),
            actions: r.actions,
        });
    }

    Ok(Descriptor {
        components,
        metrics,
        slos,
        actions,
        dependencies: raw.dependencies,
        remediation,
    })
}

/// Warnings for SLOs that have no remediation entry. Violations of those SLOs
/// are still detected and reported, but nothing is actuated for them.
pub fn validate_remediation(d: &Descriptor) -> Vec<String> {
    let mut mapped: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &d.remediation {
        *mapped.entry(r.slo.as_str()).or_default() += 1;
    }
    d.slos
        .iter()
        .filter(|s| d.actions.is_empty() || !mapped.contains_key(s.id.as_str()))
        .map(|s| format!("slo `{}` has no remediation actions; violations are report-only", s.id))
        .collect()
}
