use std::cmp::Ordering;
use std::collections::BTreeSet;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::descriptor::{Descriptor, MetricKey};
use crate::telemetry::{MetricStore, Tick};

use super::graph::{DependencyGraph, NodeId};
use super::iforest::IsolationForest;
use super::preprocess::{clean_and_interpolate, CleanSeries};
use super::{AnalysisConfig, AnalysisError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub metric: MetricKey,
    /// Isolation-forest score of the window's feature vector.
    pub anomaly: f64,
    /// `1 / (1 + hops)` to the nearest SLO metric, or the unreachable weight.
    pub proximity: f64,
    /// `anomaly * proximity`; the ranking key.
    pub score: f64,
    pub window: (Tick, Tick),
}

/// (mean, population std, least-squares slope per step, last value).
pub fn window_features(values: &[f64]) -> [f64; 4] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let xm = (n - 1.0) / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - mean);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    [mean, var.sqrt(), slope, *values.last().unwrap_or(&0.0)]
}

/// Clean, align and normalize every key onto the shared grid `[t0, t1]`.
/// Keys without enough data are skipped.
pub fn prepare_batch(
    store: &MetricStore,
    keys: impl IntoIterator<Item = MetricKey>,
    t0: Tick,
    t1: Tick,
) -> Vec<CleanSeries> {
    let len = (t1 - t0 + 1) as usize;
    keys.into_iter()
        .filter_map(|key| {
            let raw = store.query_window(&key, t0, t1).ok()?;
            match clean_and_interpolate(&raw, 1) {
                Ok(g) => CleanSeries::from_grid(g.align(t0, 1, len)).ok(),
                Err(e) => {
                    debug!("skipping {key}: {e}");
                    None
                }
            }
        })
        .collect()
}

/// Score the window `[t0, t1]` of every series in `batch` (which must span
/// the history before `t0` as well) against the historical windows of all
/// series, weighted by graph proximity to the SLO metrics.
pub fn score_batch(
    d: &Descriptor,
    batch: &[CleanSeries],
    graph: &DependencyGraph,
    window: (Tick, Tick),
    cfg: &AnalysisConfig,
) -> Result<Vec<AnomalyScore>, AnalysisError> {
    let (t0, t1) = window;
    let Some(first) = batch.first() else {
        return Ok(Vec::new());
    };
    if t1 < t0 || t1 - t0 + 1 < cfg.feature_window {
        return Err(AnalysisError::InsufficientHistory {
            key: first.key.clone(),
            reason: format!(
                "window [{t0}, {t1}] shorter than the feature window of {}",
                cfg.feature_window
            ),
        });
    }
    let wlen = (t1 - t0 + 1) as usize;
    let grid_start = first.start;
    let stride = cfg.history_stride.max(1) as usize;

    let mut history = Vec::new();
    let mut current = Vec::with_capacity(batch.len());
    for s in batch {
        if s.start != grid_start || s.start > t0 || s.start + s.len() as Tick <= t1 {
            return Err(AnalysisError::InvalidParameter(format!(
                "series `{}` does not cover the batch grid",
                s.key
            )));
        }
        let cur_end = (t1 - s.start) as usize + 1;
        current.push(window_features(&s.values[cur_end - wlen..cur_end]));
        let mut end = cur_end - wlen;
        while end >= wlen {
            history.push(window_features(&s.values[end - wlen..end]).to_vec());
            match end.checked_sub(stride) {
                Some(e) => end = e,
                None => break,
            }
        }
    }
    if history.len() < 2 {
        return Err(AnalysisError::InsufficientHistory {
            key: first.key.clone(),
            reason: format!("{} historical windows before tick {t0}", history.len()),
        });
    }
    let forest = IsolationForest::fit(&history, cfg.n_trees, cfg.subsample_size, cfg.seed)?;

    let targets: BTreeSet<NodeId> = d.slos.iter().map(|s| NodeId::Metric(s.key())).collect();
    let mut out = Vec::with_capacity(batch.len());
    for (s, feats) in batch.iter().zip(&current) {
        let anomaly = forest.score(feats)?;
        let proximity = match graph.hops_to_any(&NodeId::Metric(s.key.clone()), &targets) {
            Some(h) => 1.0 / (1.0 + h as f64),
            None => cfg.unreachable_weight,
        };
        out.push(AnomalyScore {
            metric: s.key.clone(),
            anomaly,
            proximity,
            score: anomaly * proximity,
            window,
        });
    }
    out.sort_by(rank_order);
    Ok(out)
}

fn rank_order(a: &AnomalyScore, b: &AnomalyScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.metric.cmp(&b.metric))
}

/// Rank the descriptor's metrics by how anomalous the window `(t0, t1)` is,
/// prioritized by graph proximity to SLO metrics.
pub fn extract_critical_metrics(
    d: &Descriptor,
    store: &MetricStore,
    graph: &DependencyGraph,
    window: (Tick, Tick),
    cfg: &AnalysisConfig,
) -> Result<Vec<AnomalyScore>, AnalysisError> {
    let (t0, t1) = window;
    let hist_start = t0.saturating_sub(cfg.history_ticks);
    let batch = prepare_batch(store, d.metric_keys(), hist_start, t1);
    if batch.is_empty() {
        if let Some(key) = d.metric_keys().next() {
            return Err(AnalysisError::InsufficientHistory {
                key,
                reason: "no watched metric has data in the window".into(),
            });
        }
        return Ok(Vec::new());
    }
    score_batch(d, &batch, graph, window, cfg)
}
