//! Isolation forest anomaly scoring.
//!
//! Each tree is grown on a random subsample by repeatedly picking a feature
//! uniformly at random and a split value uniformly within that feature's
//! range, until a node holds a single point, all its points coincide, or the
//! height limit `ceil(log2(subsample_size))` is reached. Anomalies isolate in
//! few splits, so short mean path lengths mean high scores:
//!
//! ```text
//! s(x) = 2 ^ (-E[h(x)] / c(n))
//! ```
//!
//! where `c(n)` is the average unsuccessful-search path length of a binary
//! search tree over `n` points.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AnalysisError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful BST search among `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Points with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    pub root: TreeNode,
}

impl IsolationTree {
    pub fn height(&self) -> usize {
        fn h(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + h(left).max(h(right)),
            }
        }
        h(&self.root)
    }

    /// Path length of `x`: edges traversed plus the `c(size)` adjustment for
    /// the unresolved points left in the terminal leaf.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        let mut depth = 0.0;
        loop {
            match node {
                TreeNode::Leaf { size } => return depth + average_path_length(*size),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    subsample_size: usize,
    n_trees: usize,
    seed: u64,
    dim: usize,
}

impl IsolationForest {
    /// Fit a forest. `subsample_size` is clamped to the number of points.
    pub fn fit(
        points: &[Vec<f64>],
        n_trees: usize,
        subsample_size: usize,
        seed: u64,
    ) -> Result<Self, AnalysisError> {
        if points.len() < 2 {
            return Err(AnalysisError::InsufficientData(format!(
                "isolation forest needs at least 2 points, got {}",
                points.len()
            )));
        }
        if n_trees == 0 {
            return Err(AnalysisError::InvalidParameter("n_trees must be positive".into()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(AnalysisError::InvalidParameter("feature vectors are empty".into()));
        }
        for p in points {
            if p.len() != dim {
                return Err(AnalysisError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(AnalysisError::NonFinite);
            }
        }
        let psi = subsample_size.clamp(2, points.len());
        let height_limit = (psi as f64).log2().ceil() as usize;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..n_trees)
            .map(|_| {
                let mut sample: Vec<&[f64]> = index::sample(&mut rng, points.len(), psi)
                    .into_iter()
                    .map(|i| points[i].as_slice())
                    .collect();
                IsolationTree {
                    root: grow(&mut sample, 0, height_limit, dim, &mut rng),
                }
            })
            .collect();
        Ok(IsolationForest {
            trees,
            subsample_size: psi,
            n_trees,
            seed,
            dim,
        })
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean_path_length(&self, x: &[f64]) -> Result<f64, AnalysisError> {
        if x.len() != self.dim {
            return Err(AnalysisError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let total: f64 = self.trees.iter().map(|t| t.path_length(x)).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// Anomaly score in `(0, 1]`; around 0.5 or below is normal, close to 1
    /// is anomalous.
    pub fn score(&self, x: &[f64]) -> Result<f64, AnalysisError> {
        let e = self.mean_path_length(x)?;
        Ok(2f64.powf(-e / average_path_length(self.subsample_size)))
    }
}

fn grow(
    points: &mut [&[f64]],
    depth: usize,
    height_limit: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    if points.len() <= 1 || depth >= height_limit {
        return TreeNode::Leaf { size: points.len() };
    }
    let ranges: Vec<(usize, f64, f64)> = (0..dim)
        .filter_map(|f| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[f]), hi.max(p[f]))
            });
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return TreeNode::Leaf { size: points.len() };
    }
    let (feature, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
    let threshold = rng.gen_range(lo..hi);

    // In-place partition: left holds x[feature] <= threshold. Since
    // lo <= threshold < hi both sides are non-empty.
    let mut split = 0;
    for i in 0..points.len() {
        if points[i][feature] <= threshold {
            points.swap(i, split);
            split += 1;
        }
    }
    let (l, r) = points.split_at_mut(split);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(grow(l, depth + 1, height_limit, dim, rng)),
        right: Box::new(grow(r, depth + 1, height_limit, dim, rng)),
    }
}
