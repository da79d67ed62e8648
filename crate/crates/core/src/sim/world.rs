use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::actuation::{check_parameter, Ack, Actuator, Rejection, MODEL_HEAVY};
use crate::descriptor::{ActionSpec, MetricKey, Verb};
use crate::telemetry::{MetricStore, Sample, TelemetryError, Tick};

use super::scenario::{
    CameraConfig, FaultKind, FaultSpec, Model, Mutation, NodeConfig, NodeProfile, NodeRole,
    PerModel, Scenario, ServiceDistribution,
};
use super::SimError;

/// Metric names emitted by the simulator.
pub mod metrics {
    pub const DETECTED_MOTIONS: &str = "detected_motions";
    pub const FRAMES_FORWARDED: &str = "frames_forwarded";
    pub const FRAME_RATE: &str = "frame_rate";
    pub const RESPONSE_TIME: &str = "response_time";
    pub const FRAME_PROCESSING_TIME: &str = "frame_processing_time";
    pub const QUEUE_LENGTH: &str = "queue_length";
    pub const CPU_UTILIZATION: &str = "cpu_utilization";
    pub const DETECTION_ACCURACY: &str = "detection_accuracy";
    pub const REPLICAS: &str = "replicas";
    pub const FRAMES_SERVED: &str = "frames_served";
    pub const FRAMES_DROPPED: &str = "frames_dropped";
    pub const ARRIVALS: &str = "arrivals";
}

use metrics::*;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frame {
    camera: usize,
    forwarded_at: f64,
    arrived_at: f64,
    started_at: f64,
    service: f64,
}

/// Lifecycle of one completed frame, for offline checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub camera: usize,
    pub forwarded_at: f64,
    pub arrived_at: f64,
    pub started_at: f64,
    pub completed_at: f64,
    pub service: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Appearance(usize),
    Frame(usize),
    Arrive(Frame),
    Complete(Frame),
}

#[derive(Debug, Clone, Copy)]
struct Timed {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Timed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timed {}

impl PartialOrd for Timed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone)]
pub struct CameraSim {
    pub id: String,
    pub detector: String,
    pub ar_per_hour: f64,
    pub frame_rate: f64,
    pub event_duration: f64,
    rng: ChaCha8Rng,
    active_until: f64,
    emitting: bool,
    removed: bool,
    tick_motions: u64,
    tick_forwarded: u64,
    tick_resp_sum: f64,
    tick_resp_n: u64,
    pub total_motions: u64,
    pub total_forwarded: u64,
}

impl CameraSim {
    pub fn is_removed(&self) -> bool {
        self.removed
    }
}

#[derive(Debug, Clone)]
pub struct RecognizerSim {
    pub id: String,
    pub replicas: u32,
    pub model: Model,
    pub service_times: PerModel,
    pub accuracies: PerModel,
    pub queue_cap: Option<usize>,
    pub distribution: ServiceDistribution,
    pub accuracy_noise: f64,
    queue: VecDeque<Frame>,
    busy: u32,
}

impl RecognizerSim {
    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn busy(&self) -> u32 {
        self.busy
    }
}

/// Cumulative frame accounting since the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameStats {
    pub forwarded: u64,
    pub arrived: u64,
    pub served: u64,
    pub dropped: u64,
    pub in_transit: u64,
    pub waiting: u64,
    pub in_service: u64,
    /// Sum over completed frames of forwarding-to-completion time.
    pub response_sum: f64,
    /// Sum over completed frames of recognizer arrival-to-completion time.
    pub sojourn_sum: f64,
}

impl FrameStats {
    /// `forwarded == served + in flight + dropped`.
    pub fn conserved(&self) -> bool {
        self.forwarded
            == self.served + self.in_transit + self.waiting + self.in_service + self.dropped
    }
}

/// Telemetry produced by one simulated tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryBatch {
    pub tick: Tick,
    pub points: Vec<(MetricKey, f64)>,
}

impl TelemetryBatch {
    pub fn get(&self, component: &str, metric: &str) -> Option<f64> {
        self.points
            .iter()
            .find(|(k, _)| k.component == component && k.metric == metric)
            .map(|(_, v)| *v)
    }

    /// Store every point whose series the store accepts. Points on series
    /// a non-auto-registering store has not declared are dropped.
    pub fn ingest_into(&self, store: &MetricStore) -> Result<(), TelemetryError> {
        for (key, v) in &self.points {
            match store.ingest(key, Sample::new(self.tick, *v)) {
                Ok(_) | Err(TelemetryError::Undeclared(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Discrete-event model of the camera -> motion detector -> recognizer
/// pipeline. One call to [`SimWorld::step`] simulates one tick (one second).
#[derive(Debug, Clone)]
pub struct SimWorld {
    seed: u64,
    horizon: Tick,
    motion_service: String,
    service_frame_rate: f64,
    event_duration: f64,
    nodes: Vec<NodeConfig>,
    cameras: Vec<CameraSim>,
    recognizer: RecognizerSim,
    faults: Vec<FaultSpec>,
    mutations: Vec<Mutation>,
    next_mutation: usize,
    clock: Tick,
    heap: BinaryHeap<Reverse<Timed>>,
    seq: u64,
    rng: ChaCha8Rng,
    stats: FrameStats,
    busy_mark: f64,
    tick_busy: f64,
    tick_served: u64,
    tick_dropped: u64,
    carry_dropped: u64,
    tick_arrivals: u64,
    tick_resp_sum: f64,
    tick_service_sum: f64,
    frame_log: Option<Vec<FrameRecord>>,
}

impl SimWorld {
    pub fn from_scenario(s: &Scenario) -> Result<Self, SimError> {
        s.validate()?;
        let nodes = if s.nodes.is_empty() {
            [
                ("camera-node", NodeRole::Camera),
                ("edge-node", NodeRole::Edge),
                ("cloud-node", NodeRole::Cloud),
            ]
            .into_iter()
            .map(|(id, role)| NodeConfig {
                id: id.into(),
                role,
                profile: NodeProfile::default_for(role),
            })
            .collect()
        } else {
            s.nodes.clone()
        };
        let r = &s.recognizer;
        let mut world = SimWorld {
            seed: s.seed,
            horizon: s.horizon_ticks,
            motion_service: s.motion_service.clone(),
            service_frame_rate: s.frame_rate,
            event_duration: s.event_duration_s,
            nodes,
            cameras: Vec::new(),
            recognizer: RecognizerSim {
                id: r.id.clone(),
                replicas: r.replicas,
                model: r.model,
                service_times: r.service_times,
                accuracies: r.accuracies,
                queue_cap: r.queue_cap,
                distribution: r.service_distribution,
                accuracy_noise: r.accuracy_noise,
                queue: VecDeque::new(),
                busy: 0,
            },
            faults: Vec::new(),
            mutations: Vec::new(),
            next_mutation: 0,
            clock: 0,
            heap: BinaryHeap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(s.seed ^ fnv1a(&r.id)),
            stats: FrameStats::default(),
            busy_mark: 0.0,
            tick_busy: 0.0,
            tick_served: 0,
            tick_dropped: 0,
            carry_dropped: 0,
            tick_arrivals: 0,
            tick_resp_sum: 0.0,
            tick_service_sum: 0.0,
            frame_log: None,
        };
        if world.max_replicas() < r.replicas {
            return Err(SimError::Invalid(format!(
                "{} replicas exceed the {} cloud cores",
                r.replicas,
                world.max_replicas()
            )));
        }
        for c in &s.cameras {
            world.add_camera(c, 0.0);
        }
        for f in &s.faults {
            world.inject_fault(f.clone())?;
        }
        let mut mutations = s.mutations.clone();
        mutations.sort_by_key(|m| m.tick);
        world.mutations = mutations;
        Ok(world)
    }

    pub fn load_scenario(document: &str) -> Result<Self, SimError> {
        SimWorld::from_scenario(&Scenario::parse(document)?)
    }

    /// Keep a record of every completed frame.
    pub fn enable_frame_log(&mut self) {
        self.frame_log.get_or_insert_with(Vec::new);
    }

    pub fn frame_log(&self) -> &[FrameRecord] {
        self.frame_log.as_deref().unwrap_or(&[])
    }

    pub fn clock(&self) -> Tick {
        self.clock
    }

    pub fn horizon(&self) -> Tick {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stats(&self) -> FrameStats {
        FrameStats {
            waiting: self.recognizer.queue.len() as u64,
            in_service: self.recognizer.busy as u64,
            ..self.stats
        }
    }

    pub fn cameras(&self) -> &[CameraSim] {
        &self.cameras
    }

    pub fn camera(&self, id: &str) -> Option<&CameraSim> {
        self.cameras.iter().find(|c| c.id == id || c.detector == id)
    }

    pub fn recognizer(&self) -> &RecognizerSim {
        &self.recognizer
    }

    pub fn motion_service(&self) -> &str {
        &self.motion_service
    }

    pub fn nodes(&self) -> &[NodeConfig] {
        &self.nodes
    }

    pub fn faults(&self) -> &[FaultSpec] {
        &self.faults
    }

    /// Replica ceiling: total cores of the cloud nodes hosting the recognizer.
    pub fn max_replicas(&self) -> u32 {
        let cores: u32 = self
            .nodes
            .iter()
            .filter(|n| n.role == NodeRole::Cloud)
            .map(|n| n.profile.cpu_cores)
            .sum();
        if cores == 0 {
            u32::MAX
        } else {
            cores
        }
    }

    fn component_ids(&self) -> BTreeSet<&str> {
        let mut ids: BTreeSet<&str> = self
            .cameras
            .iter()
            .flat_map(|c| [c.id.as_str(), c.detector.as_str()])
            .collect();
        ids.insert(&self.recognizer.id);
        ids.insert(&self.motion_service);
        ids.extend(self.nodes.iter().map(|n| n.id.as_str()));
        ids
    }

    fn is_cloud_node(&self, id: &str) -> bool {
        self.nodes
            .iter()
            .any(|n| n.id == id && n.role == NodeRole::Cloud)
    }

    /// Register a fault. Outside its active window the world behaves exactly
    /// as without it.
    pub fn inject_fault(&mut self, f: FaultSpec) -> Result<(), SimError> {
        if !(f.magnitude > 0.0 && f.magnitude.is_finite()) {
            return Err(SimError::Invalid(format!(
                "fault magnitude must be > 0, got {}",
                f.magnitude
            )));
        }
        if f.active_window.0 >= f.active_window.1 {
            return Err(SimError::Invalid(format!(
                "fault window [{}, {}) is empty",
                f.active_window.0, f.active_window.1
            )));
        }
        let known = match f.kind {
            FaultKind::CpuPressure => f.target == self.recognizer.id || self.is_cloud_node(&f.target),
            FaultKind::NetworkLatency => self.component_ids().contains(f.target.as_str()),
        };
        if !known {
            return Err(SimError::UnknownTarget(f.target));
        }
        if self
            .faults
            .iter()
            .any(|g| g.kind == f.kind && g.target == f.target && g.overlaps(&f))
        {
            return Err(SimError::OverlappingFault {
                target: f.target,
                kind: f.kind,
            });
        }
        self.faults.push(f);
        Ok(())
    }

    fn cpu_multiplier(&self, time: f64) -> f64 {
        self.faults
            .iter()
            .filter(|f| f.kind == FaultKind::CpuPressure && f.is_active(time))
            .filter(|f| f.target == self.recognizer.id || self.is_cloud_node(&f.target))
            .map(|f| f.magnitude)
            .product()
    }

    fn latency(&self, time: f64, cam: &CameraSim) -> f64 {
        self.faults
            .iter()
            .filter(|f| f.kind == FaultKind::NetworkLatency && f.is_active(time))
            .filter(|f| {
                f.target == cam.id
                    || f.target == cam.detector
                    || f.target == self.motion_service
                    || f.target == self.recognizer.id
            })
            .map(|f| f.magnitude)
            .sum()
    }

    /// Service time a frame would get if it started at `time`.
    pub fn effective_service_time(&self, time: f64) -> f64 {
        self.recognizer.service_times.get(self.recognizer.model) * self.cpu_multiplier(time)
    }

    fn push(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Reverse(Timed {
            time,
            seq: self.seq,
            event,
        }));
    }

    fn add_camera(&mut self, c: &CameraConfig, now: f64) {
        let rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&c.id));
        let cam = CameraSim {
            id: c.id.clone(),
            detector: c.detector_id(),
            ar_per_hour: c.ar_per_hour,
            frame_rate: c.frame_rate.unwrap_or(self.service_frame_rate),
            event_duration: c.event_duration_s.unwrap_or(self.event_duration),
            rng,
            active_until: f64::NEG_INFINITY,
            emitting: false,
            removed: false,
            tick_motions: 0,
            tick_forwarded: 0,
            tick_resp_sum: 0.0,
            tick_resp_n: 0,
            total_motions: 0,
            total_forwarded: 0,
        };
        self.cameras.push(cam);
        let idx = self.cameras.len() - 1;
        if let Some(next) = self.next_appearance(idx, now) {
            self.push(next, Event::Appearance(idx));
        }
    }

    fn next_appearance(&mut self, idx: usize, now: f64) -> Option<f64> {
        let cam = &mut self.cameras[idx];
        let rate = cam.ar_per_hour / 3600.0;
        if rate <= 0.0 {
            return None;
        }
        let gap = Exp::new(rate).expect("positive rate").sample(&mut cam.rng);
        Some(now + gap)
    }

    fn apply_mutations(&mut self, tick: Tick) {
        while self.next_mutation < self.mutations.len()
            && self.mutations[self.next_mutation].tick <= tick
        {
            let m = self.mutations[self.next_mutation].clone();
            self.next_mutation += 1;
            for c in &m.add_cameras {
                self.add_camera(c, tick as f64);
            }
            for id in &m.remove_cameras {
                if let Some(c) = self.cameras.iter_mut().find(|c| &c.id == id) {
                    c.removed = true;
                    c.emitting = false;
                }
            }
        }
    }

    fn account_busy(&mut self, now: f64) {
        self.tick_busy += self.recognizer.busy as f64 * (now - self.busy_mark);
        self.busy_mark = now;
    }

    fn start_service(&mut self, mut frame: Frame, at: f64) {
        self.account_busy(at);
        self.recognizer.busy += 1;
        let mut service = self.effective_service_time(at);
        if self.recognizer.distribution == ServiceDistribution::Exponential {
            service *= Exp::new(1.0).expect("unit rate").sample(&mut self.rng);
        }
        frame.started_at = at;
        frame.service = service;
        self.push(at + service, Event::Complete(frame));
    }

    fn fill_servers(&mut self, at: f64) {
        while self.recognizer.busy < self.recognizer.replicas {
            let Some(f) = self.recognizer.queue.pop_front() else { break };
            self.start_service(f, at);
        }
    }

    fn handle(&mut self, time: f64, event: Event) {
        match event {
            Event::Appearance(idx) => {
                let cam = &mut self.cameras[idx];
                if cam.removed {
                    return;
                }
                cam.tick_motions += 1;
                cam.total_motions += 1;
                cam.active_until = cam.active_until.max(time + cam.event_duration);
                if !cam.emitting {
                    cam.emitting = true;
                    self.push(time, Event::Frame(idx));
                }
                if let Some(next) = self.next_appearance(idx, time) {
                    self.push(next, Event::Appearance(idx));
                }
            }
            Event::Frame(idx) => {
                let cam = &self.cameras[idx];
                if cam.removed || time >= cam.active_until {
                    self.cameras[idx].emitting = false;
                    return;
                }
                let latency = self.latency(time, cam);
                let next = time + 1.0 / cam.frame_rate;
                let more = next < cam.active_until;
                let cam = &mut self.cameras[idx];
                cam.tick_forwarded += 1;
                cam.total_forwarded += 1;
                if !more {
                    cam.emitting = false;
                }
                self.stats.forwarded += 1;
                self.stats.in_transit += 1;
                let frame = Frame {
                    camera: idx,
                    forwarded_at: time,
                    arrived_at: f64::NAN,
                    started_at: f64::NAN,
                    service: f64::NAN,
                };
                self.push(time + latency, Event::Arrive(frame));
                if more {
                    self.push(next, Event::Frame(idx));
                }
            }
            Event::Arrive(mut frame) => {
                self.stats.in_transit -= 1;
                self.stats.arrived += 1;
                self.tick_arrivals += 1;
                frame.arrived_at = time;
                if self.recognizer.busy < self.recognizer.replicas {
                    self.start_service(frame, time);
                } else if self
                    .recognizer
                    .queue_cap
                    .is_some_and(|cap| self.recognizer.queue.len() >= cap)
                {
                    self.stats.dropped += 1;
                    self.tick_dropped += 1;
                } else {
                    self.recognizer.queue.push_back(frame);
                }
            }
            Event::Complete(frame) => {
                self.account_busy(time);
                self.recognizer.busy -= 1;
                let response = time - frame.forwarded_at;
                self.stats.served += 1;
                self.stats.response_sum += response;
                self.stats.sojourn_sum += time - frame.arrived_at;
                self.tick_served += 1;
                self.tick_resp_sum += response;
                self.tick_service_sum += frame.service;
                let cam = &mut self.cameras[frame.camera];
                cam.tick_resp_sum += response;
                cam.tick_resp_n += 1;
                if let Some(log) = self.frame_log.as_mut() {
                    log.push(FrameRecord {
                        camera: frame.camera,
                        forwarded_at: frame.forwarded_at,
                        arrived_at: frame.arrived_at,
                        started_at: frame.started_at,
                        completed_at: time,
                        service: frame.service,
                    });
                }
                self.fill_servers(time);
            }
        }
    }

    /// Simulate tick `[clock, clock + 1)` and return its telemetry.
    pub fn step(&mut self) -> TelemetryBatch {
        let t = self.clock;
        let (start, end) = (t as f64, (t + 1) as f64);
        self.apply_mutations(t);

        self.busy_mark = start;
        self.tick_busy = 0.0;
        self.tick_served = 0;
        self.tick_dropped = std::mem::take(&mut self.carry_dropped);
        self.tick_arrivals = 0;
        self.tick_resp_sum = 0.0;
        self.tick_service_sum = 0.0;
        for c in &mut self.cameras {
            c.tick_motions = 0;
            c.tick_forwarded = 0;
            c.tick_resp_sum = 0.0;
            c.tick_resp_n = 0;
        }

        while let Some(Reverse(top)) = self.heap.peek() {
            if top.time >= end {
                break;
            }
            let Reverse(Timed { time, event, .. }) = self.heap.pop().expect("peeked");
            self.handle(time, event);
        }
        self.account_busy(end);

        let batch = self.emit(t, start);
        self.clock += 1;
        batch
    }

    /// Step and ingest the batch into `store`.
    pub fn step_into(&mut self, store: &MetricStore) -> Result<TelemetryBatch, TelemetryError> {
        let batch = self.step();
        batch.ingest_into(store)?;
        Ok(batch)
    }

    fn emit(&mut self, t: Tick, start: f64) -> TelemetryBatch {
        let idle = self.effective_service_time(start);
        let mut points = Vec::with_capacity(8 + self.cameras.len() * 4);
        let mut put = |c: &str, m: &str, v: f64| points.push((MetricKey::new(c, m), v));

        let (mut motions, mut forwarded) = (0u64, 0u64);
        for cam in self.cameras.iter().filter(|c| !c.removed) {
            motions += cam.tick_motions;
            forwarded += cam.tick_forwarded;
            put(&cam.id, FRAME_RATE, cam.frame_rate);
            put(&cam.detector, DETECTED_MOTIONS, cam.tick_motions as f64);
            put(&cam.detector, FRAMES_FORWARDED, cam.tick_forwarded as f64);
            let rt = if cam.tick_resp_n > 0 {
                cam.tick_resp_sum / cam.tick_resp_n as f64
            } else {
                idle
            };
            put(&cam.detector, RESPONSE_TIME, rt);
        }
        put(&self.motion_service, DETECTED_MOTIONS, motions as f64);
        put(&self.motion_service, FRAMES_FORWARDED, forwarded as f64);
        put(&self.motion_service, FRAME_RATE, self.service_frame_rate);

        let r = &self.recognizer;
        let served = self.tick_served;
        let (rt, fpt) = if served > 0 {
            (
                self.tick_resp_sum / served as f64,
                self.tick_service_sum / served as f64,
            )
        } else {
            (idle, idle)
        };
        let noise = if r.accuracy_noise > 0.0 {
            Normal::new(0.0, r.accuracy_noise)
                .expect("valid sd")
                .sample(&mut self.rng)
        } else {
            0.0
        };
        let accuracy = (r.accuracies.get(r.model) + noise).clamp(0.0, 1.0);
        let rid = r.id.clone();
        put(&rid, RESPONSE_TIME, rt);
        put(&rid, FRAME_PROCESSING_TIME, fpt);
        put(&rid, QUEUE_LENGTH, (r.queue.len() as u32 + r.busy) as f64);
        put(&rid, CPU_UTILIZATION, self.tick_busy / r.replicas as f64);
        put(&rid, DETECTION_ACCURACY, accuracy);
        put(&rid, REPLICAS, r.replicas as f64);
        put(&rid, FRAMES_SERVED, served as f64);
        put(&rid, FRAMES_DROPPED, self.tick_dropped as f64);
        put(&rid, ARRIVALS, self.tick_arrivals as f64);
        for n in self.nodes.iter().filter(|n| n.role == NodeRole::Cloud) {
            put(
                &n.id,
                CPU_UTILIZATION,
                (self.tick_busy / n.profile.cpu_cores as f64).min(1.0),
            );
        }
        TelemetryBatch { tick: t, points }
    }
}

impl Actuator for SimWorld {
    fn capabilities(&self) -> BTreeSet<Verb> {
        [
            Verb::ScaleReplicas,
            Verb::SetFrameRate,
            Verb::SwitchModel,
            Verb::SetQueueCap,
        ]
        .into_iter()
        .collect()
    }

    fn apply(&mut self, action: &ActionSpec, _tick: Tick) -> Ack {
        let reject = |reason| Ack::Rejected { reason };
        if !self.capabilities().contains(&action.verb) {
            return reject(Rejection::UnsupportedVerb { verb: action.verb });
        }
        if let Err(r) = check_parameter(action.verb, action.parameter) {
            return reject(r);
        }
        let unknown = || Ack::Rejected {
            reason: Rejection::UnknownTarget {
                target: action.target.clone(),
            },
        };
        let p = action.parameter;
        let now = self.clock as f64;
        let on_recognizer = action.target == self.recognizer.id;
        let changed = match action.verb {
            Verb::ScaleReplicas => {
                if !on_recognizer {
                    return unknown();
                }
                let max = self.max_replicas();
                if p > max as f64 {
                    return reject(Rejection::OutOfRange {
                        parameter: p,
                        reason: format!("at most {max} replicas fit on the cloud nodes"),
                    });
                }
                let n = p as u32;
                let changed = self.recognizer.replicas != n;
                self.recognizer.replicas = n;
                self.busy_mark = now;
                self.fill_servers(now);
                changed
            }
            Verb::SetFrameRate => {
                if action.target == self.motion_service {
                    let mut changed = self.service_frame_rate != p;
                    self.service_frame_rate = p;
                    for c in self.cameras.iter_mut().filter(|c| !c.removed) {
                        changed |= c.frame_rate != p;
                        c.frame_rate = p;
                    }
                    changed
                } else if let Some(c) = self
                    .cameras
                    .iter_mut()
                    .find(|c| !c.removed && (c.id == action.target || c.detector == action.target))
                {
                    let changed = c.frame_rate != p;
                    c.frame_rate = p;
                    changed
                } else {
                    return unknown();
                }
            }
            Verb::SwitchModel => {
                if !on_recognizer {
                    return unknown();
                }
                let model = if p == MODEL_HEAVY {
                    Model::Heavy
                } else {
                    Model::Light
                };
                let changed = self.recognizer.model != model;
                self.recognizer.model = model;
                changed
            }
            Verb::SetQueueCap => {
                if !on_recognizer {
                    return unknown();
                }
                let cap = p as usize;
                let changed = self.recognizer.queue_cap != Some(cap);
                self.recognizer.queue_cap = Some(cap);
                while self.recognizer.queue.len() > cap {
                    self.recognizer.queue.pop_back();
                    self.stats.dropped += 1;
                    self.carry_dropped += 1;
                }
                changed
            }
            Verb::SetResourceLimit => unreachable!("filtered by capabilities"),
        };
        Ack::Applied { changed }
    }
}
