//! Status-and-causes analytics: preprocessing, correlation, the dependency
//! graph and anomaly-based extraction of critical metrics.

mod critical;
mod graph;
mod iforest;
mod preprocess;

pub use critical::{
    extract_critical_metrics, prepare_batch, score_batch, window_features, AnomalyScore,
};
pub use graph::{build_dependency_graph, DependencyGraph, Edge, EdgeOrigin, NodeId};
pub use iforest::{average_path_length, IsolationForest, IsolationTree, TreeNode};
pub use preprocess::{
    clean_and_interpolate, clip_outliers, correlation, minmax_normalize, pearson, CleanSeries,
    GridSeries,
};

use thiserror::Error;

use crate::descriptor::MetricKey;
use crate::telemetry::{TelemetryError, Tick};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient history for `{key}`: {reason}")]
    InsufficientHistory { key: MetricKey, reason: String },
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite input")]
    NonFinite,
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
}

/// Tunables of the analysis pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Minimum window (ticks) a feature vector is computed over.
    pub feature_window: Tick,
    /// How far back before the scored window historical windows are drawn.
    pub history_ticks: Tick,
    /// Spacing between consecutive historical windows.
    pub history_stride: Tick,
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
    /// Minimum |r| for a measured edge in the dependency graph.
    pub min_abs_corr: f64,
    /// Raw anomaly score at or above which a metric counts as critical.
    pub criticality_threshold: f64,
    /// Proximity weight for metrics with no path to any SLO metric.
    pub unreachable_weight: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            feature_window: 30,
            history_ticks: 300,
            history_stride: 5,
            n_trees: 100,
            subsample_size: 256,
            seed: 0x5eed,
            min_abs_corr: 0.7,
            criticality_threshold: 0.6,
            unreachable_weight: 0.01,
        }
    }
}
