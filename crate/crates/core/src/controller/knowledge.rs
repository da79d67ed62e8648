use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptor::MetricKey;
use crate::telemetry::Tick;

use super::cause::RootCause;
use super::ControllerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseSummary {
    pub component: String,
    pub metric: MetricKey,
    pub score: f64,
}

impl From<&RootCause> for CauseSummary {
    fn from(c: &RootCause) -> Self {
        CauseSummary {
            component: c.component.clone(),
            metric: c.metric.clone(),
            score: c.combined_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub violation: String,
    pub cause: CauseSummary,
    pub action: String,
    pub pre_value: f64,
    pub post_value: f64,
    pub effectiveness: f64,
    /// Tick the action was issued.
    pub tick: Tick,
}

/// Exact-match filter; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeFilter {
    pub slo: Option<String>,
    pub action: Option<String>,
}

impl KnowledgeFilter {
    pub fn by_slo(slo: impl Into<String>) -> Self {
        KnowledgeFilter {
            slo: Some(slo.into()),
            action: None,
        }
    }

    pub fn by_action(action: impl Into<String>) -> Self {
        KnowledgeFilter {
            slo: None,
            action: Some(action.into()),
        }
    }

    pub fn matches(&self, r: &KnowledgeRecord) -> bool {
        self.slo.as_ref().is_none_or(|s| *s == r.violation)
            && self.action.as_ref().is_none_or(|a| *a == r.action)
    }
}

/// Append-only record log, mirrored to a JSONL file when opened on one.
#[derive(Default)]
pub struct KnowledgeBase {
    records: Vec<KnowledgeRecord>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("records", &self.records.len())
            .field("persistent", &self.sink.is_some())
            .finish()
    }
}

impl KnowledgeBase {
    /// In-memory only.
    pub fn new() -> Self {
        Self::default()
    }

    /// Load any records already at `path`, then append new ones to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ControllerError> {
        let path = path.as_ref();
        let records = match File::open(path) {
            Ok(f) => Self::read_records(BufReader::new(f))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(KnowledgeBase {
            records,
            sink: Some(Box::new(file)),
        })
    }

    /// Append records to an arbitrary writer.
    pub fn with_sink(sink: impl Write + Send + 'static) -> Self {
        KnowledgeBase {
            records: Vec::new(),
            sink: Some(Box::new(sink)),
        }
    }

    pub fn read_records(reader: impl BufRead) -> Result<Vec<KnowledgeRecord>, ControllerError> {
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line).map_err(|e| ControllerError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?,
            );
        }
        Ok(out)
    }

    /// Append one record. On a write failure the record is not kept.
    pub fn record(&mut self, r: KnowledgeRecord) -> Result<(), ControllerError> {
        if !r.effectiveness.is_finite() {
            return Err(ControllerError::Corrupt {
                line: self.records.len() + 1,
                message: format!("non-finite effectiveness {}", r.effectiveness),
            });
        }
        if let Some(sink) = self.sink.as_mut() {
            let mut line = serde_json::to_string(&r).expect("record serialization is infallible");
            line.push('\n');
            sink.write_all(line.as_bytes())?;
            sink.flush()?;
        }
        self.records.push(r);
        Ok(())
    }

    /// Matching records in insertion (chronological) order.
    pub fn query(&self, filter: &KnowledgeFilter) -> Vec<&KnowledgeRecord> {
        self.records.iter().filter(|r| filter.matches(r)).collect()
    }

    pub fn records(&self) -> &[KnowledgeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
