//! In-memory time-series store indexed by (component, metric).
//!
//! Each series is a timestamp-ordered ring buffer. Compaction drops samples
//! that fall outside the retention window relative to the newest sample of
//! that series. Missing observations are stored explicitly so that
//! preprocessing can interpolate them later.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::io;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{Descriptor, MetricKey};

/// Simulation time. One tick is one second of simulated time.
pub type Tick = u64;

pub const DEFAULT_RETENTION_TICKS: Tick = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: Tick,
    /// `None` is the explicit missing marker.
    pub value: Option<f64>,
}

impl Sample {
    pub fn new(timestamp: Tick, value: f64) -> Self {
        Sample {
            timestamp,
            value: Some(value),
        }
    }

    pub fn missing(timestamp: Tick) -> Self {
        Sample {
            timestamp,
            value: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub key: MetricKey,
    pub samples: Vec<Sample>,
}

impl TimeSeries {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Finite values in timestamp order, skipping missing markers.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().filter_map(|s| s.value)
    }

    pub fn mean(&self) -> Option<f64> {
        let (sum, n) = self
            .values()
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("metric `{0}` is not registered")]
    Undeclared(MetricKey),
    #[error("metric `{0}` not found")]
    NotFound(MetricKey),
    #[error("non-finite value {value} for `{key}` at tick {timestamp}; use the missing marker")]
    NonFinite {
        key: MetricKey,
        timestamp: Tick,
        value: f64,
    },
    #[error("invalid window [{t0}, {t1}]")]
    InvalidWindow { t0: Tick, t1: Tick },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for TelemetryError {
    fn from(e: csv::Error) -> Self {
        TelemetryError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestAck {
    Stored,
    Overwritten,
    /// The sample was older than the retention window and was discarded.
    Expired,
}

type Series = Arc<Mutex<VecDeque<Sample>>>;

#[derive(Debug)]
pub struct MetricStore {
    retention: Tick,
    auto_register: bool,
    series: RwLock<BTreeMap<MetricKey, Series>>,
}

impl Default for MetricStore {
    fn default() -> Self {
        MetricStore::new(DEFAULT_RETENTION_TICKS)
    }
}

impl MetricStore {
    /// A store that registers unknown series on first ingest.
    pub fn new(retention: Tick) -> Self {
        MetricStore {
            retention,
            auto_register: true,
            series: RwLock::new(BTreeMap::new()),
        }
    }

    /// A store that only accepts the descriptor's metrics plus whatever is
    /// registered explicitly later.
    pub fn for_descriptor(d: &Descriptor, retention: Tick) -> Self {
        let store = MetricStore {
            retention,
            auto_register: false,
            series: RwLock::new(BTreeMap::new()),
        };
        for key in d.metric_keys() {
            store.register(key);
        }
        store
    }

    pub fn retention(&self) -> Tick {
        self.retention
    }

    pub fn auto_register(&self) -> bool {
        self.auto_register
    }

    pub fn set_auto_register(&mut self, on: bool) {
        self.auto_register = on;
    }

    /// Register a series so that ingestion into it is accepted. Idempotent.
    pub fn register(&self, key: MetricKey) {
        self.series.write().entry(key).or_default();
    }

    pub fn contains(&self, key: &MetricKey) -> bool {
        self.series.read().contains_key(key)
    }

    pub fn keys(&self) -> Vec<MetricKey> {
        self.series.read().keys().cloned().collect()
    }

    fn get(&self, key: &MetricKey) -> Option<Series> {
        self.series.read().get(key).cloned()
    }

    pub fn ingest(&self, key: &MetricKey, sample: Sample) -> Result<IngestAck, TelemetryError> {
        if let Some(v) = sample.value {
            if !v.is_finite() {
                return Err(TelemetryError::NonFinite {
                    key: key.clone(),
                    timestamp: sample.timestamp,
                    value: v,
                });
            }
        }
        let series = match self.get(key) {
            Some(s) => s,
            None if self.auto_register => self.series.write().entry(key.clone()).or_default().clone(),
            None => return Err(TelemetryError::Undeclared(key.clone())),
        };
        let mut buf = series.lock();
        let ack = insert_sample(&mut buf, sample);
        if let Some(newest) = buf.back().map(|s| s.timestamp) {
            let cutoff = newest.saturating_sub(self.retention);
            while buf.front().is_some_and(|s| s.timestamp < cutoff) {
                buf.pop_front();
            }
            if sample.timestamp < cutoff {
                return Ok(IngestAck::Expired);
            }
        }
        Ok(ack)
    }

    /// Convenience wrapper over [`MetricStore::ingest`] for a finite value.
    pub fn record(
        &self,
        component: &str,
        metric: &str,
        timestamp: Tick,
        value: f64,
    ) -> Result<IngestAck, TelemetryError> {
        self.ingest(&MetricKey::new(component, metric), Sample::new(timestamp, value))
    }

    /// All samples with `t0 <= timestamp <= t1`, in order.
    pub fn query_window(
        &self,
        key: &MetricKey,
        t0: Tick,
        t1: Tick,
    ) -> Result<TimeSeries, TelemetryError> {
        if t0 > t1 {
            return Err(TelemetryError::InvalidWindow { t0, t1 });
        }
        let series = self
            .get(key)
            .ok_or_else(|| TelemetryError::NotFound(key.clone()))?;
        let buf = series.lock();
        let lo = buf.partition_point(|s| s.timestamp < t0);
        let hi = buf.partition_point(|s| s.timestamp <= t1);
        Ok(TimeSeries {
            key: key.clone(),
            samples: buf.range(lo..hi).copied().collect(),
        })
    }

    pub fn query_all(&self, key: &MetricKey) -> Result<TimeSeries, TelemetryError> {
        self.query_window(key, 0, Tick::MAX)
    }

    pub fn latest(&self, key: &MetricKey) -> Option<Sample> {
        self.get(key).and_then(|s| s.lock().back().copied())
    }

    /// Drop every sample older than `now - retention` in every series.
    pub fn compact(&self, now: Tick) {
        let cutoff = now.saturating_sub(self.retention);
        for series in self.series.read().values() {
            let mut buf = series.lock();
            while buf.front().is_some_and(|s| s.timestamp < cutoff) {
                buf.pop_front();
            }
        }
    }

    /// Text exposition of the latest sample of every series, ordered by
    /// component then metric, terminated by `# EOF`. An empty store renders
    /// as an empty document.
    pub fn export_snapshot(&self) -> String {
        let mut out = String::new();
        let map = self.series.read();
        let mut rows: Vec<(&MetricKey, Sample)> = map
            .iter()
            .filter_map(|(k, s)| s.lock().back().copied().map(|smp| (k, smp)))
            .collect();
        rows.sort_by(|a, b| {
            (&a.0.component, &a.0.metric).cmp(&(&b.0.component, &b.0.metric))
        });
        for (key, sample) in &rows {
            let value = match sample.value {
                Some(v) => format!("{v}"),
                None => "NaN".to_string(),
            };
            let _ = writeln!(
                out,
                "{}{{component=\"{}\"}} {} {}",
                key.metric, key.component, value, sample.timestamp
            );
        }
        if !rows.is_empty() {
            out.push_str("# EOF\n");
        }
        out
    }

    /// Dump every retained sample as `component,metric,timestamp,value`.
    /// Missing values are written as an empty field.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), TelemetryError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["component", "metric", "timestamp", "value"])?;
        for (key, series) in self.series.read().iter() {
            for s in series.lock().iter() {
                let value = s.value.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([
                    key.component.as_str(),
                    key.metric.as_str(),
                    &s.timestamp.to_string(),
                    &value,
                ])?;
            }
        }
        w.flush().map_err(|e| TelemetryError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Load a CSV dump produced by [`MetricStore::write_csv`] into a new
    /// auto-registering store.
    pub fn read_csv<R: io::Read>(reader: R, retention: Tick) -> Result<Self, TelemetryError> {
        let store = MetricStore::new(retention);
        let mut r = csv::Reader::from_reader(reader);
        for row in r.deserialize() {
            let row: CsvRow = row?;
            let sample = Sample {
                timestamp: row.timestamp,
                value: row.value,
            };
            store.ingest(&MetricKey::new(row.component, row.metric), sample)?;
        }
        Ok(store)
    }
}

#[derive(Deserialize)]
struct CsvRow {
    component: String,
    metric: String,
    timestamp: Tick,
    value: Option<f64>,
}

fn insert_sample(buf: &mut VecDeque<Sample>, sample: Sample) -> IngestAck {
    match buf.back() {
        None => {
            buf.push_back(sample);
            IngestAck::Stored
        }
        Some(last) if last.timestamp < sample.timestamp => {
            buf.push_back(sample);
            IngestAck::Stored
        }
        _ => {
            let idx = buf.partition_point(|s| s.timestamp < sample.timestamp);
            if buf.get(idx).is_some_and(|s| s.timestamp == sample.timestamp) {
                buf[idx] = sample;
                IngestAck::Overwritten
            } else {
                buf.insert(idx, sample);
                IngestAck::Stored
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(c: &str, m: &str) -> MetricKey {
        MetricKey::new(c, m)
    }

    #[test]
    fn ingest_then_query_same_tick() {
        let store = MetricStore::default();
        let k = key("recognizer", "response_time");
        store.ingest(&k, Sample::new(7, 0.5)).unwrap();
        let ts = store.query_window(&k, 7, 7).unwrap();
        assert_eq!(ts.samples, vec![Sample::new(7, 0.5)]);
    }

    #[test]
    fn duplicate_timestamp_last_write_wins() {
        let store = MetricStore::default();
        let k = key("a", "m");
        assert_eq!(store.ingest(&k, Sample::new(3, 1.0)).unwrap(), IngestAck::Stored);
        assert_eq!(
            store.ingest(&k, Sample::new(3, 2.0)).unwrap(),
            IngestAck::Overwritten
        );
        assert_eq!(store.query_all(&k).unwrap().samples, vec![Sample::new(3, 2.0)]);
    }

    #[test]
    fn out_of_order_ingest_is_sorted() {
        let store = MetricStore::default();
        let k = key("a", "m");
        for t in [5, 1, 3] {
            store.ingest(&k, Sample::new(t, t as f64)).unwrap();
        }
        let ts: Vec<Tick> = store.query_all(&k).unwrap().samples.iter().map(|s| s.timestamp).collect();
        assert_eq!(ts, vec![1, 3, 5]);
    }

    #[test]
    fn undeclared_metric_rejected_without_auto_register() {
        let mut store = MetricStore::default();
        store.set_auto_register(false);
        let k = key("a", "m");
        assert_eq!(
            store.ingest(&k, Sample::new(0, 1.0)),
            Err(TelemetryError::Undeclared(k.clone()))
        );
        store.register(k.clone());
        assert!(store.ingest(&k, Sample::new(0, 1.0)).is_ok());
    }

    #[test]
    fn non_finite_requires_missing_marker() {
        let store = MetricStore::default();
        let k = key("a", "m");
        assert!(matches!(
            store.ingest(&k, Sample::new(0, f64::NAN)),
            Err(TelemetryError::NonFinite { .. })
        ));
        assert!(store.ingest(&k, Sample::missing(0)).is_ok());
    }

    #[test]
    fn unknown_series_is_not_found_not_empty() {
        let store = MetricStore::default();
        assert!(matches!(
            store.query_window(&key("x", "y"), 0, 10),
            Err(TelemetryError::NotFound(_))
        ));
    }

    #[test]
    fn empty_and_full_windows() {
        let store = MetricStore::default();
        let k = key("a", "m");
        for t in 0..20 {
            store.record("a", "m", t, t as f64).unwrap();
        }
        assert!(store.query_window(&k, 100, 200).unwrap().is_empty());
        assert_eq!(store.query_window(&k, 0, 19).unwrap().len(), 20);
        assert!(matches!(
            store.query_window(&k, 5, 4),
            Err(TelemetryError::InvalidWindow { .. })
        ));
    }

    #[test]
    fn retention_compaction() {
        let store = MetricStore::new(10);
        let k = key("a", "m");
        for t in 0..50 {
            store.record("a", "m", t, 1.0).unwrap();
        }
        let ts = store.query_all(&k).unwrap();
        assert_eq!(ts.samples.first().unwrap().timestamp, 39);
        assert_eq!(ts.len(), 11);
        assert_eq!(store.ingest(&k, Sample::new(3, 1.0)).unwrap(), IngestAck::Expired);
    }

    #[test]
    fn snapshot_format() {
        let store = MetricStore::default();
        assert_eq!(store.export_snapshot(), "");
        store.record("recognizer", "frame_processing_time", 17, 0.42).unwrap();
        assert_eq!(
            store.export_snapshot(),
            "frame_processing_time{component=\"recognizer\"} 0.42 17\n# EOF\n"
        );
    }

    #[test]
    fn snapshot_orders_by_component_then_metric() {
        let store = MetricStore::default();
        store.record("b", "a", 1, 1.0).unwrap();
        store.record("a", "z", 1, 1.0).unwrap();
        store.record("a", "b", 1, 1.0).unwrap();
        store.record("a", "b", 2, 3.0).unwrap();
        let snap = store.export_snapshot();
        let lines: Vec<&str> = snap.lines().collect();
        assert_eq!(
            lines,
            vec![
                "b{component=\"a\"} 3 2",
                "z{component=\"a\"} 1 1",
                "a{component=\"b\"} 1 1",
                "# EOF"
            ]
        );
    }

    #[test]
    fn csv_round_trip() {
        let store = MetricStore::default();
        store.record("a", "m", 1, 0.25).unwrap();
        store.ingest(&key("a", "m"), Sample::missing(2)).unwrap();
        store.record("b", "n", 1, -3.0).unwrap();
        let mut buf = Vec::new();
        store.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("component,metric,timestamp,value\n"));
        assert!(text.contains("a,m,2,\n"));
        let back = MetricStore::read_csv(buf.as_slice(), DEFAULT_RETENTION_TICKS).unwrap();
        assert_eq!(back.keys(), store.keys());
        for k in store.keys() {
            assert_eq!(back.query_all(&k).unwrap(), store.query_all(&k).unwrap());
        }
    }
}
