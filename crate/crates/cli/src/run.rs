use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use sloloop::actuation::LoggingActuator;
use sloloop::controller::{
    infer_status, run_loop, Controller, DebounceState, KnowledgeBase, LoopConfig, LoopReport,
    Phase, DEFAULT_EVAL_WINDOW,
};
use sloloop::descriptor::{parse_descriptor, Descriptor};
use sloloop::sim::{Scenario, SimWorld};
use sloloop::telemetry::MetricStore;

use crate::Mode;

pub const TELEMETRY: &str = "telemetry.csv";
pub const TRACE: &str = "loop_trace.jsonl";
pub const KNOWLEDGE: &str = "knowledge.jsonl";
pub const SUMMARY: &str = "summary.txt";
pub const ACTIONS: &str = "actions.log";

pub struct RunConfig {
    pub descriptor: Option<PathBuf>,
    pub scenario: PathBuf,
    pub mode: Mode,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

pub struct RunOutcome {
    /// Closed loop only: the last evaluation still had violations.
    pub unresolved: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// All inputs are parsed before anything is written, so a bad input leaves
/// no artifacts behind.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut scenario = Scenario::parse(&read(&cfg.scenario)?)
        .with_context(|| format!("{}", cfg.scenario.display()))?;
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    let descriptor = match &cfg.descriptor {
        Some(p) => Some(parse_descriptor(&read(p)?).with_context(|| format!("{}", p.display()))?),
        None => None,
    };
    if cfg.mode == Mode::ClosedLoop && descriptor.is_none() {
        bail!("closed-loop mode requires --descriptor");
    }
    let world = SimWorld::from_scenario(&scenario).context("building the simulation")?;

    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let store = MetricStore::new(scenario.horizon_ticks + 1);
    let create = |name: &str| -> Result<BufWriter<File>> {
        let p = cfg.out.join(name);
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    };

    let (summary, unresolved) = match (cfg.mode, descriptor) {
        (Mode::ClosedLoop, Some(d)) => {
            let knowledge = KnowledgeBase::with_sink(create(KNOWLEDGE)?);
            let mut controller = Controller::with_knowledge(d, LoopConfig::default(), knowledge);
            let mut plant = LoggingActuator::new(world, create(ACTIONS)?);
            let report = run_loop(&mut controller, &store, &mut plant, scenario.horizon_ticks)?;
            let (_, mut log) = plant.into_parts();
            log.flush()?;
            let mut trace = create(TRACE)?;
            controller.write_trace(&mut trace)?;
            trace.flush()?;
            let summary = summarize(&scenario, cfg.mode, &store, Some(&report), &controller);
            (summary, report.unresolved())
        }
        (_, descriptor) => {
            create(KNOWLEDGE)?.flush()?;
            let mut world = world;
            let violations = observe(&mut world, &store, descriptor.as_ref(), scenario.horizon_ticks)?;
            let mut s = header(&scenario, cfg.mode);
            if descriptor.is_some() {
                let _ = writeln!(s, "fail statuses: {violations}");
            }
            s.push_str(&metric_means(&store));
            (s, false)
        }
    };

    let mut csv = create(TELEMETRY)?;
    store.write_csv(&mut csv)?;
    csv.flush()?;
    fs::write(cfg.out.join(SUMMARY), summary)?;
    Ok(RunOutcome { unresolved })
}

/// Open loop: advance the world, and if a descriptor is given, count the
/// failing status evaluations without acting on them.
fn observe(
    world: &mut SimWorld,
    store: &MetricStore,
    d: Option<&Descriptor>,
    horizon: u64,
) -> Result<u64> {
    let period = LoopConfig::default().period;
    let mut debounce = DebounceState::new();
    let mut fails = 0;
    for _ in 0..horizon {
        let t = world.step_into(store)?.tick;
        if let Some(d) = d {
            if (t + 1) % period == 0 {
                let s = infer_status(d, store, t, DEFAULT_EVAL_WINDOW, false, &mut debounce)?;
                fails += u64::from(!s.is_good());
            }
        }
    }
    Ok(fails)
}

fn header(s: &Scenario, mode: Mode) -> String {
    let mode = match mode {
        Mode::OpenLoop => "open-loop",
        Mode::ClosedLoop => "closed-loop",
    };
    let ars: Vec<String> = s.cameras.iter().map(|c| format!("{}", c.ar_per_hour)).collect();
    format!(
        "mode: {mode}\nseed: {}\nhorizon: {}\ncameras: {} (AR {})\n",
        s.seed,
        s.horizon_ticks,
        s.cameras.len(),
        ars.join(", ")
    )
}

fn summarize(
    scenario: &Scenario,
    mode: Mode,
    store: &MetricStore,
    report: Option<&LoopReport>,
    controller: &Controller,
) -> String {
    let mut s = header(scenario, mode);
    if let Some(r) = report {
        let _ = writeln!(s, "control steps: {}", r.steps);
        let _ = writeln!(s, "fail statuses: {}", r.fail_statuses);
        let _ = writeln!(s, "actuator calls: {}", r.actuator_calls);
        let _ = writeln!(s, "unresolved at horizon: {}", r.unresolved());
    }
    let _ = writeln!(s, "actions:");
    for e in controller.trace().iter().filter(|e| e.phase == Phase::Apply) {
        let _ = writeln!(
            s,
            "  {} {} {}",
            e.tick,
            e.payload["action"].as_str().unwrap_or("?"),
            e.payload["ack"]["status"].as_str().unwrap_or("?")
        );
    }
    let _ = writeln!(s, "knowledge records: {}", controller.knowledge().len());
    s.push_str(&metric_means(store));
    s
}

fn metric_means(store: &MetricStore) -> String {
    let mut by_key = BTreeMap::new();
    for key in store.keys() {
        if let Some(m) = store.query_all(&key).ok().and_then(|s| s.mean()) {
            by_key.insert(key.to_string(), m);
        }
    }
    let mut s = String::from("metric means:\n");
    for (k, m) in by_key {
        let _ = writeln!(s, "  {k} {m:.6}");
    }
    s
}
