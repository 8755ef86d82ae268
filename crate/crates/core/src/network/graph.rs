use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intersection identifier, dense in `[0, node_count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Intersection with planar coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

/// Directed road segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
}

/// Directed, strongly connected street network. Immutable once built.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    // CSR adjacency, each row sorted by (target id, length)
    offsets: Vec<usize>,
    adjacency: Vec<(NodeId, f64)>,
}

impl RoadGraph {
    /// Builds and validates a graph. `nodes[i]` is the coordinate of node `i`.
    ///
    /// Edge errors report the 1-based position of the edge in `edges`; the
    /// text loader remaps these to document line numbers.
    pub fn new(nodes: Vec<(f64, f64)>, edges: Vec<Edge>) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Empty("node list"));
        }
        for (i, &(x, y)) in nodes.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("node {i} has non-finite coordinates"),
                });
            }
        }
        for (i, e) in edges.iter().enumerate() {
            for id in [e.from, e.to] {
                if id.index() >= n {
                    return Err(Error::DanglingEdge { line: i + 1, node: id.0 });
                }
            }
            if !(e.length > 0.0) || !e.length.is_finite() {
                return Err(Error::InvalidLength { line: i + 1, length: e.length });
            }
        }

        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (&edges[a], &edges[b]);
            (ea.from, ea.to)
                .cmp(&(eb.from, eb.to))
                .then(ea.length.total_cmp(&eb.length))
        });
        let mut offsets = vec![0usize; n + 1];
        for e in &edges {
            offsets[e.from.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let adjacency = order.iter().map(|&i| (edges[i].to, edges[i].length)).collect();

        let graph = RoadGraph {
            nodes: nodes
                .into_iter()
                .enumerate()
                .map(|(i, (x, y))| Node { id: NodeId(i as u32), x, y })
                .collect(),
            edges,
            offsets,
            adjacency,
        };
        graph.check_strongly_connected()?;
        Ok(graph)
    }

    fn check_strongly_connected(&self) -> Result<()> {
        let n = self.node_count();
        let mut reverse: Vec<Vec<u32>> = vec![Vec::new(); n];
        for e in &self.edges {
            reverse[e.to.index()].push(e.from.0);
        }
        let forward = self.reach(|u| self.out_edges(NodeId(u)).iter().map(|&(v, _)| v.0).collect());
        let backward = self.reach(|u| reverse[u as usize].clone());
        let reachable = forward
            .iter()
            .zip(&backward)
            .filter(|(&f, &b)| f && b)
            .count();
        if reachable != n {
            return Err(Error::Disconnected { reachable, total: n });
        }
        Ok(())
    }

    fn reach(&self, next: impl Fn(u32) -> Vec<u32>) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([0u32]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in next(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    /// Outgoing `(target, length)` pairs sorted by target id, then length.
    #[inline]
    pub fn out_edges(&self, id: NodeId) -> &[(NodeId, f64)] {
        let i = id.index();
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Length of the shortest direct edge `from -> to`, if any.
    pub fn edge_length(&self, from: NodeId, to: NodeId) -> Option<f64> {
        let row = self.out_edges(from);
        let start = row.partition_point(|&(v, _)| v < to);
        row.get(start).filter(|&&(v, _)| v == to).map(|&(_, len)| len)
    }
}
