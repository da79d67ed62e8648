use serde::{Deserialize, Serialize};

use crate::telemetry::Tick;

use super::SimError;

pub const DEFAULT_FRAME_RATE: f64 = 5.0;
pub const DEFAULT_EVENT_DURATION_S: f64 = 10.0;
pub const DEFAULT_HEAVY_SERVICE_S: f64 = 0.35;
pub const DEFAULT_LIGHT_SERVICE_S: f64 = 0.12;
pub const DEFAULT_HEAVY_ACCURACY: f64 = 0.92;
pub const DEFAULT_LIGHT_ACCURACY: f64 = 0.80;
pub const DEFAULT_ACCURACY_NOISE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Camera,
    Edge,
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub cpu_cores: u32,
    pub ram_gb: u32,
    pub link_gbps: f64,
}

impl NodeProfile {
    /// Hardware per node role used when a scenario lists no nodes. Camera
    /// links default to 1 Gbps.
    pub fn default_for(role: NodeRole) -> Self {
        match role {
            NodeRole::Camera => NodeProfile {
                cpu_cores: 1,
                ram_gb: 1,
                link_gbps: 1.0,
            },
            NodeRole::Edge => NodeProfile {
                cpu_cores: 4,
                ram_gb: 8,
                link_gbps: 1.0,
            },
            NodeRole::Cloud => NodeProfile {
                cpu_cores: 8,
                ram_gb: 16,
                link_gbps: 10.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: String,
    pub role: NodeRole,
    #[serde(flatten)]
    pub profile: NodeProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub id: String,
    /// Component id of this camera's motion detector instance. Defaults to
    /// `<id>-md`.
    #[serde(default)]
    pub detector: Option<String>,
    pub ar_per_hour: f64,
    #[serde(default)]
    pub frame_rate: Option<f64>,
    #[serde(default)]
    pub event_duration_s: Option<f64>,
}

impl CameraConfig {
    pub fn detector_id(&self) -> String {
        self.detector
            .clone()
            .unwrap_or_else(|| format!("{}-md", self.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Heavy,
    Light,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceDistribution {
    Deterministic,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerModel {
    pub heavy: f64,
    pub light: f64,
}

impl PerModel {
    pub fn get(&self, m: Model) -> f64 {
        match m {
            Model::Heavy => self.heavy,
            Model::Light => self.light,
        }
    }
}

fn default_recognizer_id() -> String {
    "recognizer".into()
}

fn default_replicas() -> u32 {
    1
}

fn default_model() -> Model {
    Model::Heavy
}

fn default_service_times() -> PerModel {
    PerModel {
        heavy: DEFAULT_HEAVY_SERVICE_S,
        light: DEFAULT_LIGHT_SERVICE_S,
    }
}

fn default_accuracies() -> PerModel {
    PerModel {
        heavy: DEFAULT_HEAVY_ACCURACY,
        light: DEFAULT_LIGHT_ACCURACY,
    }
}

fn default_distribution() -> ServiceDistribution {
    ServiceDistribution::Deterministic
}

fn default_noise() -> f64 {
    DEFAULT_ACCURACY_NOISE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecognizerConfig {
    #[serde(default = "default_recognizer_id")]
    pub id: String,
    #[serde(default = "default_replicas")]
    pub replicas: u32,
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_service_times")]
    pub service_times: PerModel,
    #[serde(default = "default_accuracies")]
    pub accuracies: PerModel,
    #[serde(default)]
    pub queue_cap: Option<usize>,
    #[serde(default = "default_distribution")]
    pub service_distribution: ServiceDistribution,
    #[serde(default = "default_noise")]
    pub accuracy_noise: f64,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            id: default_recognizer_id(),
            replicas: 1,
            model: Model::Heavy,
            service_times: default_service_times(),
            accuracies: default_accuracies(),
            queue_cap: None,
            service_distribution: ServiceDistribution::Deterministic,
            accuracy_noise: DEFAULT_ACCURACY_NOISE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Adds `magnitude` seconds to the transport of every frame forwarded
    /// while the fault is active.
    NetworkLatency,
    /// Multiplies recognizer service time by `magnitude`.
    CpuPressure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub target: String,
    pub magnitude: f64,
    /// Active for simulated time in `[t0, t1)`.
    pub active_window: (Tick, Tick),
}

impl FaultSpec {
    pub fn is_active(&self, time: f64) -> bool {
        time >= self.active_window.0 as f64 && time < self.active_window.1 as f64
    }

    pub fn overlaps(&self, other: &FaultSpec) -> bool {
        self.active_window.0 < other.active_window.1 && other.active_window.0 < self.active_window.1
    }
}

/// A tick-scheduled topology change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mutation {
    pub tick: Tick,
    #[serde(default)]
    pub add_cameras: Vec<CameraConfig>,
    #[serde(default)]
    pub remove_cameras: Vec<String>,
}

fn default_motion_service() -> String {
    "motion-detection".into()
}

fn default_event_duration() -> f64 {
    DEFAULT_EVENT_DURATION_S
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub cameras: Vec<CameraConfig>,
    #[serde(default)]
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub recognizer: RecognizerConfig,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    pub horizon_ticks: Tick,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mutations: Vec<Mutation>,
    /// Id of the logical motion-detection service. A `set_frame_rate` aimed
    /// at it applies to every camera, including cameras added later.
    #[serde(default = "default_motion_service")]
    pub motion_service: String,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default = "default_event_duration")]
    pub event_duration_s: f64,
}

impl Scenario {
    pub fn parse(document: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(document).map_err(|e| SimError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::Invalid(m));
        if self.cameras.is_empty() {
            return invalid("scenario declares no cameras".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        let cams = self
            .cameras
            .iter()
            .chain(self.mutations.iter().flat_map(|m| m.add_cameras.iter()));
        for c in cams {
            if !(c.ar_per_hour >= 0.0 && c.ar_per_hour.is_finite()) {
                return invalid(format!("camera `{}`: ar_per_hour must be >= 0", c.id));
            }
            if let Some(fr) = c.frame_rate {
                if !(fr > 0.0 && fr.is_finite()) {
                    return invalid(format!("camera `{}`: frame_rate must be > 0", c.id));
                }
            }
            if let Some(d) = c.event_duration_s {
                if !(d > 0.0 && d.is_finite()) {
                    return invalid(format!("camera `{}`: event_duration_s must be > 0", c.id));
                }
            }
            for id in [c.id.clone(), c.detector_id()] {
                if id.is_empty() || !ids.insert(id.clone()) {
                    return Err(SimError::Invalid(format!("duplicate or empty component id `{id}`")));
                }
            }
        }
        for n in &self.nodes {
            let p = n.profile;
            if p.cpu_cores == 0 || p.ram_gb == 0 || !(p.link_gbps > 0.0) {
                return invalid(format!("node `{}`: profile values must be positive", n.id));
            }
            if !ids.insert(n.id.clone()) {
                return invalid(format!("duplicate component id `{}`", n.id));
            }
        }
        let r = &self.recognizer;
        if r.replicas == 0 {
            return invalid("recognizer replicas must be >= 1".into());
        }
        for v in [r.service_times.heavy, r.service_times.light] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid("service times must be > 0".into());
            }
        }
        for v in [r.accuracies.heavy, r.accuracies.light] {
            if !(0.0..=1.0).contains(&v) {
                return invalid("accuracies must lie in [0, 1]".into());
            }
        }
        if r.queue_cap == Some(0) {
            return invalid("queue_cap must be >= 1 when set".into());
        }
        if !(r.accuracy_noise >= 0.0) {
            return invalid("accuracy_noise must be >= 0".into());
        }
        if !(self.frame_rate > 0.0) || !(self.event_duration_s > 0.0) {
            return invalid("frame_rate and event_duration_s must be > 0".into());
        }
        if !ids.insert(r.id.clone()) || !ids.insert(self.motion_service.clone()) {
            return invalid("recognizer / motion service ids collide".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_cameras_with_rates() {
        let s = Scenario::parse(
            r#"{"cameras": [{"id": "cam-1", "ar_per_hour": 5},
                            {"id": "cam-2", "ar_per_hour": 10},
                            {"id": "cam-3", "ar_per_hour": 15}],
                "horizon_ticks": 100}"#,
        )
        .unwrap();
        let rates: Vec<f64> = s.cameras.iter().map(|c| c.ar_per_hour).collect();
        assert_eq!(rates, vec![5.0, 10.0, 15.0]);
        assert_eq!(s.cameras[1].detector_id(), "cam-2-md");
        assert_eq!(s.recognizer.service_times.heavy, DEFAULT_HEAVY_SERVICE_S);
    }

    #[test]
    fn empty_camera_list_rejected() {
        assert!(matches!(
            Scenario::parse(r#"{"cameras": [], "horizon_ticks": 10}"#),
            Err(SimError::Invalid(_))
        ));
    }

    #[test]
    fn syntax_error_has_position() {
        assert!(matches!(
            Scenario::parse("{\"cameras\": [}"),
            Err(SimError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = Scenario::parse(
            r#"{"cameras": [{"id": "c", "ar_per_hour": 1, "frame_rate": 2}],
                "faults": [{"kind": "cpu_pressure", "target": "recognizer",
                            "magnitude": 2, "active_window": [10, 20]}],
                "horizon_ticks": 50, "seed": 3}"#,
        )
        .unwrap();
        assert_eq!(Scenario::parse(&s.to_json()).unwrap(), s);
    }
}
