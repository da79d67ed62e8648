use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::descriptor::{Descriptor, MetricKey};

use super::preprocess::{correlation, CleanSeries};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeId {
    Component(String),
    Metric(MetricKey),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Component(c) => f.write_str(c),
            NodeId::Metric(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOrigin {
    Declared,
    Measured,
}

impl EdgeOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeOrigin::Declared => "declared",
            EdgeOrigin::Measured => "measured",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub weight: f64,
    pub origin: EdgeOrigin,
}

/// Directed graph over components and metric nodes.
///
/// Declared edges (weight 1) come from the descriptor: component
/// dependencies plus membership links between a component and each of its
/// metrics in both directions. Measured edges link correlated metric pairs in
/// both directions and carry the signed coefficient.
#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    nodes: BTreeSet<NodeId>,
    edges: Vec<Edge>,
    out: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl DependencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, n: NodeId) {
        self.nodes.insert(n);
    }

    pub fn add_edge(&mut self, from: NodeId, to: NodeId, weight: f64, origin: EdgeOrigin) {
        self.nodes.insert(from.clone());
        self.nodes.insert(to.clone());
        self.out.entry(from.clone()).or_default().insert(to.clone());
        self.edges.push(Edge {
            from,
            to,
            weight,
            origin,
        });
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, n: &NodeId) -> bool {
        self.nodes.contains(n)
    }

    /// Shortest directed path from `from` to the nearest node of `targets`,
    /// endpoints included. Ties between equally short paths resolve by node
    /// order, so the result is deterministic.
    pub fn shortest_path(&self, from: &NodeId, targets: &BTreeSet<NodeId>) -> Option<Vec<NodeId>> {
        if !self.nodes.contains(from) {
            return None;
        }
        let mut prev: BTreeMap<&NodeId, &NodeId> = BTreeMap::new();
        let mut seen: BTreeSet<&NodeId> = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            if targets.contains(n) {
                let mut path = vec![n.clone()];
                let mut cur = n;
                while let Some(p) = prev.get(cur) {
                    path.push((*p).clone());
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for next in self.out.get(n).into_iter().flatten() {
                if seen.insert(next) {
                    prev.insert(next, n);
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// Number of edges on the shortest directed path to any target.
    pub fn hops_to_any(&self, from: &NodeId, targets: &BTreeSet<NodeId>) -> Option<usize> {
        self.shortest_path(from, targets).map(|p| p.len() - 1)
    }

    /// `from,to,weight,origin` per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.from,
                e.to,
                e.weight,
                e.origin.as_str()
            ));
        }
        out
    }
}

/// Build the dependency graph from the descriptor and the measured
/// correlations of a batch of series sharing one grid.
pub fn build_dependency_graph(
    d: &Descriptor,
    batch: &[CleanSeries],
    min_abs_corr: f64,
) -> DependencyGraph {
    let mut g = DependencyGraph::new();
    for c in &d.components {
        g.add_node(NodeId::Component(c.id.clone()));
    }
    for (from, to) in &d.dependencies {
        g.add_edge(
            NodeId::Component(from.clone()),
            NodeId::Component(to.clone()),
            1.0,
            EdgeOrigin::Declared,
        );
    }
    for key in d.metric_keys() {
        let comp = NodeId::Component(key.component.clone());
        let metric = NodeId::Metric(key);
        g.add_edge(comp.clone(), metric.clone(), 1.0, EdgeOrigin::Declared);
        g.add_edge(metric, comp, 1.0, EdgeOrigin::Declared);
    }
    for s in batch {
        g.add_node(NodeId::Metric(s.key.clone()));
    }
    for (i, a) in batch.iter().enumerate() {
        for b in &batch[i + 1..] {
            if a.key == b.key {
                continue;
            }
            let Ok(r) = correlation(a, b) else { continue };
            if r.abs() >= min_abs_corr {
                let (na, nb) = (NodeId::Metric(a.key.clone()), NodeId::Metric(b.key.clone()));
                g.add_edge(na.clone(), nb.clone(), r, EdgeOrigin::Measured);
                g.add_edge(nb, na, r, EdgeOrigin::Measured);
            }
        }
    }
    g
}
