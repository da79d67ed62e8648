use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;

use sloloop::controller::{Phase, TraceEvent};
use sloloop::descriptor::MetricKey;
use sloloop::sim::metrics::{
    DETECTED_MOTIONS, FRAME_PROCESSING_TIME, REPLICAS, RESPONSE_TIME,
};
use sloloop::telemetry::{MetricStore, Tick};

use crate::run::{TELEMETRY, TRACE};

/// Ticks per row of the motions-vs-response figure.
pub const WINDOW: Tick = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    #[value(name = "motions_vs_response", alias = "motions-vs-response")]
    MotionsVsResponse,
    #[value(name = "adaptation_timeline", alias = "adaptation-timeline")]
    AdaptationTimeline,
}

pub fn cmd_plotdata(run: &Path, figure: Figure, out: impl Write) -> Result<()> {
    let path = run.join(TELEMETRY);
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let store = MetricStore::read_csv(BufReader::new(file), Tick::MAX)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut w = csv::Writer::from_writer(out);
    match figure {
        Figure::MotionsVsResponse => motions_vs_response(&store, &mut w)?,
        Figure::AdaptationTimeline => {
            let actions = applied_actions(&run.join(TRACE))?;
            adaptation_timeline(&store, &actions, &mut w)?
        }
    }
    w.flush()?;
    Ok(())
}

fn components_with(store: &MetricStore, metrics: &[&str]) -> BTreeSet<String> {
    let keys = store.keys();
    keys.iter()
        .map(|k| k.component.clone())
        .filter(|c| {
            metrics
                .iter()
                .all(|m| keys.iter().any(|k| &k.component == c && k.metric == *m))
        })
        .collect()
}

/// Per detector and 60-tick window: motions detected and mean response time.
fn motions_vs_response<W: Write>(store: &MetricStore, w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(["window_start", "component", "detected_motions", "response_time"])?;
    for c in components_with(store, &[DETECTED_MOTIONS, RESPONSE_TIME]) {
        let mut windows: BTreeMap<Tick, (f64, f64, usize)> = BTreeMap::new();
        for s in store.query_all(&MetricKey::new(&c, DETECTED_MOTIONS))?.samples {
            if let Some(v) = s.value {
                windows.entry(s.timestamp / WINDOW * WINDOW).or_default().0 += v;
            }
        }
        for s in store.query_all(&MetricKey::new(&c, RESPONSE_TIME))?.samples {
            if let Some(v) = s.value {
                let e = windows.entry(s.timestamp / WINDOW * WINDOW).or_default();
                e.1 += v;
                e.2 += 1;
            }
        }
        for (start, (motions, rt_sum, n)) in windows {
            let rt = if n > 0 { rt_sum / n as f64 } else { f64::NAN };
            w.write_record([start.to_string(), c.clone(), motions.to_string(), rt.to_string()])?;
        }
    }
    Ok(())
}

/// Action ids applied per tick, from the loop trace if the run has one.
fn applied_actions(path: &Path) -> Result<BTreeMap<Tick, Vec<String>>> {
    let mut out: BTreeMap<Tick, Vec<String>> = BTreeMap::new();
    let Ok(file) = File::open(path) else {
        return Ok(out);
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let e: TraceEvent = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        if e.phase == Phase::Apply && e.payload["ack"]["status"] == "applied" {
            if let Some(id) = e.payload["action"].as_str() {
                out.entry(e.tick).or_default().push(id.to_string());
            }
        }
    }
    Ok(out)
}

/// Per tick: recognizer processing time, response time, replica count and
/// any actions applied at that tick.
fn adaptation_timeline<W: Write>(
    store: &MetricStore,
    actions: &BTreeMap<Tick, Vec<String>>,
    w: &mut csv::Writer<W>,
) -> Result<()> {
    w.write_record(["tick", "frame_processing_time", "response_time", "replicas", "action"])?;
    let Some(rec) = components_with(store, &[REPLICAS]).into_iter().next() else {
        return Ok(());
    };
    let mut rows: BTreeMap<Tick, [Option<f64>; 3]> = BTreeMap::new();
    for (i, m) in [FRAME_PROCESSING_TIME, RESPONSE_TIME, REPLICAS].iter().enumerate() {
        let Ok(series) = store.query_all(&MetricKey::new(&rec, *m)) else {
            continue;
        };
        for s in series.samples {
            rows.entry(s.timestamp).or_default()[i] = s.value;
        }
    }
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (t, [fpt, rt, replicas]) in rows {
        let action = actions.get(&t).map(|a| a.join(";")).unwrap_or_default();
        w.write_record([t.to_string(), cell(fpt), cell(rt), cell(replicas), action])?;
    }
    Ok(())
}
