//! Propagation graphs over post sets.
//!
//! Node 0 is always the source tweet; every edge runs from a responding node
//! to the node it responds to, so edge sources are never earlier than edge
//! targets.

mod features;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{
    attach_features, read_nfv1, write_nfv1, FeatureError, FeatureSidecar, FeatureTable, FeaturedGraph, SIDECAR_FORMAT,
};

use crate::ingestion::{Id, LabeledPostSet, Member, NodeKind};

pub const GRAPH_FORMAT: &str = "rumorsage.graphs";
pub const SNAPSHOTS_FORMAT: &str = "rumorsage.snapshots";
pub const SNAPSHOT_INTERVAL_SECS: i64 = 6 * 3600;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Reply,
    Retweet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub i: usize,
    pub tweet_id: Id,
    pub ts: i64,
    pub kind: NodeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticGraph {
    pub graph_id: usize,
    pub label: Option<usize>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("post set has no source tweet")]
    NoSource,
    #[error("member {0} responds to a tweet outside its post set")]
    Disconnected(Id),
    #[error("member {0} appears more than once")]
    DuplicateMember(Id),
    #[error("member {0} is older than the tweet it responds to")]
    TimestampOrder(Id),
    #[error("member {0} does not lead back to the source tweet")]
    Unreachable(Id),
    #[error("graph {graph_id} is malformed: {reason}")]
    Invalid { graph_id: usize, reason: String },
    #[error("snapshot interval must be positive, got {0}")]
    Interval(i64),
}

/// Which nodes feed messages into a node during aggregation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// A node hears from its direct responders only.
    #[default]
    Directed,
    /// Responders and the responded-to node both count as neighbors.
    Undirected,
}

impl std::str::FromStr for Neighborhood {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "directed" => Ok(Self::Directed),
            "undirected" => Ok(Self::Undirected),
            other => Err(format!("unknown neighborhood mode {other:?}")),
        }
    }
}

/// Builds the propagation graph of one post set.
///
/// Responses are ordered by `(ts, id)` regardless of their order in `set`,
/// so the result depends only on the member set.
pub fn build_static_graph(graph_id: usize, set: &LabeledPostSet) -> Result<StaticGraph, GraphError> {
    let source = set
        .members
        .iter()
        .find(|m| m.kind == NodeKind::Source && m.id == set.source_id && m.parent.is_none())
        .ok_or(GraphError::NoSource)?;
    let mut responses: Vec<&Member> = Vec::with_capacity(set.members.len());
    for m in &set.members {
        if std::ptr::eq(m, source) {
            continue;
        }
        if m.kind == NodeKind::Source || m.parent.is_none() {
            return Err(GraphError::Disconnected(m.id.clone()));
        }
        responses.push(m);
    }
    responses.sort_by(|a, b| (a.ts, &a.id).cmp(&(b.ts, &b.id)));

    let mut index: HashMap<&Id, usize> = HashMap::with_capacity(responses.len() + 1);
    index.insert(&source.id, 0);
    let ordered: Vec<&Member> = std::iter::once(source).chain(responses.iter().copied()).collect();
    for (i, m) in ordered.iter().enumerate().skip(1) {
        if index.insert(&m.id, i).is_some() {
            return Err(GraphError::DuplicateMember(m.id.clone()));
        }
    }

    let mut edges = Vec::with_capacity(ordered.len() - 1);
    let mut parent_of = vec![usize::MAX; ordered.len()];
    for (i, m) in ordered.iter().enumerate().skip(1) {
        let (dst, kind) = match m.kind {
            NodeKind::Retweet => (0, EdgeKind::Retweet),
            _ => {
                let parent = m.parent.as_ref().expect("responses have parents");
                let dst = *index.get(parent).ok_or_else(|| GraphError::Disconnected(m.id.clone()))?;
                (dst, EdgeKind::Reply)
            }
        };
        if dst == i {
            return Err(GraphError::Unreachable(m.id.clone()));
        }
        if m.ts < ordered[dst].ts {
            return Err(GraphError::TimestampOrder(m.id.clone()));
        }
        parent_of[i] = dst;
        edges.push(GraphEdge { src: i, dst, kind });
    }
    for (i, m) in ordered.iter().enumerate().skip(1) {
        let mut cur = i;
        let mut steps = 0;
        while cur != 0 {
            cur = parent_of[cur];
            steps += 1;
            if steps > ordered.len() {
                return Err(GraphError::Unreachable(m.id.clone()));
            }
        }
    }

    Ok(StaticGraph {
        graph_id,
        label: set.label,
        nodes: ordered
            .iter()
            .enumerate()
            .map(|(i, m)| GraphNode {
                i,
                tweet_id: m.id.clone(),
                ts: m.ts,
                kind: m.kind,
            })
            .collect(),
        edges,
    })
}

impl StaticGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Checks the structural invariants of a graph loaded from disk.
    pub fn validate(&self) -> Result<(), GraphError> {
        let invalid = |reason: String| GraphError::Invalid {
            graph_id: self.graph_id,
            reason,
        };
        let n = self.nodes.len();
        if n == 0 || self.nodes[0].kind != NodeKind::Source {
            return Err(invalid("node 0 must be the source tweet".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.i != i {
                return Err(invalid(format!("node at position {i} has index {}", node.i)));
            }
            if i > 0 && node.kind == NodeKind::Source {
                return Err(invalid(format!("node {i} is a second source")));
            }
        }
        let mut seen = BTreeSet::new();
        let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(invalid(format!("edge {}->{} out of range", e.src, e.dst)));
            }
            if e.src == e.dst {
                return Err(invalid(format!("self edge on node {}", e.src)));
            }
            if !seen.insert((e.src, e.dst)) {
                return Err(invalid(format!("duplicate edge {}->{}", e.src, e.dst)));
            }
            if self.nodes[e.src].ts < self.nodes[e.dst].ts {
                return Err(invalid(format!("edge {}->{} points forward in time", e.src, e.dst)));
            }
            adjacent[e.src].push(e.dst);
            adjacent[e.dst].push(e.src);
        }
        let mut visited = vec![false; n];
        let mut stack = vec![0];
        visited[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adjacent[v] {
                if !visited[u] {
                    visited[u] = true;
                    stack.push(u);
                }
            }
        }
        if let Some(i) = visited.iter().position(|&v| !v) {
            return Err(invalid(format!("node {i} is not connected to the source")));
        }
        Ok(())
    }

    /// Message pairs `(target, neighbor)`: the neighbor's state flows into
    /// the target. Sorted by target, then neighbor.
    pub fn messages(&self, mode: Neighborhood) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.dst, e.src)).collect();
        if mode == Neighborhood::Undirected {
            out.extend(self.edges.iter().map(|e| (e.src, e.dst)));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The subgraph induced by nodes with timestamp at most `cutoff`,
    /// reindexed in the original node order.
    pub fn induced(&self, cutoff: i64) -> StaticGraph {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for node in &self.nodes {
            if node.i == 0 || node.ts <= cutoff {
                remap[node.i] = nodes.len();
                nodes.push(GraphNode {
                    i: nodes.len(),
                    ..node.clone()
                });
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| remap[e.src] != usize::MAX && remap[e.dst] != usize::MAX)
            .map(|e| GraphEdge {
                src: remap[e.src],
                dst: remap[e.dst],
                kind: e.kind,
            })
            .collect();
        StaticGraph {
            graph_id: self.graph_id,
            label: self.label,
            nodes,
            edges,
        }
    }
}

/// The graph as it stood at `cutoff`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub base: usize,
    pub cutoff: i64,
    pub graph: StaticGraph,
}

/// Snapshots at `t_source + k·interval` for `k = 1, 2, ...`, ending with the
/// first cutoff at or after the latest timestamp.
pub fn snapshot_series(g: &StaticGraph, interval_secs: i64) -> Result<Vec<Snapshot>, GraphError> {
    if interval_secs <= 0 {
        return Err(GraphError::Interval(interval_secs));
    }
    let t0 = g.nodes.first().map_or(0, |n| n.ts);
    let latest = g.nodes.iter().map(|n| n.ts).max().unwrap_or(t0);
    let mut out = Vec::new();
    let mut k: i64 = 1;
    loop {
        let cutoff = t0 + k * interval_secs;
        out.push(Snapshot {
            base: g.graph_id,
            cutoff,
            graph: g.induced(cutoff),
        });
        if cutoff >= latest {
            break;
        }
        k += 1;
    }
    Ok(out)
}
