use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::analysis::{AnomalyScore, DependencyGraph, NodeId};
use crate::descriptor::MetricKey;

use super::status::SystemStatus;

/// Score assigned to a last-resort cause so that scores stay positive.
pub const FALLBACK_SCORE: f64 = f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCause {
    pub component: String,
    pub metric: MetricKey,
    /// The violated SLO this cause leads to.
    pub slo: String,
    pub combined_score: f64,
    /// From the cause metric node to the violated SLO metric node.
    pub path: Vec<NodeId>,
}

/// Rank critical metrics (raw anomaly at or above `threshold`) that reach a
/// violated SLO metric through the graph. When none do, each violated SLO
/// yields its own metric's component as the cause.
pub fn infer_root_cause(
    status: &SystemStatus,
    graph: &DependencyGraph,
    critical: &[AnomalyScore],
    threshold: f64,
) -> Vec<RootCause> {
    let slo_nodes: BTreeSet<NodeId> = status
        .violated
        .iter()
        .map(|v| NodeId::Metric(v.metric.clone()))
        .collect();
    let mut out: Vec<RootCause> = critical
        .iter()
        .filter(|a| a.anomaly >= threshold && a.score > 0.0)
        .filter_map(|a| {
            let from = NodeId::Metric(a.metric.clone());
            if slo_nodes.contains(&from) {
                return None;
            }
            let path = graph.shortest_path(&from, &slo_nodes)?;
            let NodeId::Metric(target) = path.last()? else {
                return None;
            };
            let slo = status.violated.iter().find(|v| &v.metric == target)?;
            Some(RootCause {
                component: a.metric.component.clone(),
                metric: a.metric.clone(),
                slo: slo.slo.clone(),
                combined_score: a.score,
                path,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.combined_score
            .total_cmp(&a.combined_score)
            .then_with(|| a.metric.cmp(&b.metric))
    });
    if out.is_empty() {
        out = status
            .violated
            .iter()
            .map(|v| RootCause {
                component: v.metric.component.clone(),
                metric: v.metric.clone(),
                slo: v.slo.clone(),
                combined_score: FALLBACK_SCORE,
                path: vec![NodeId::Metric(v.metric.clone())],
            })
            .collect();
    }
    out
}
