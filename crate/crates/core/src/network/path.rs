use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::graph::{NodeId, RoadGraph};
use crate::error::{Error, Result};

pub(crate) const NO_PRED: u32 = u32::MAX;

/// A shortest route between two intersections.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// Meters; exactly the sum of the traversed edge lengths.
    pub distance: f64,
    /// Origin first, destination last.
    pub nodes: Vec<NodeId>,
}

/// Single-source shortest-path tree.
#[derive(Debug, Clone)]
pub struct ShortestPathTree {
    pub source: NodeId,
    pub dist: Vec<f64>,
    pub(crate) pred: Vec<u32>,
}

impl ShortestPathTree {
    pub fn distance(&self, to: NodeId) -> f64 {
        self.dist[to.index()]
    }

    pub fn path_to(&self, to: NodeId) -> Result<PathResult> {
        path_from_preds(self.source, to, self.dist[to.index()], |v| self.pred[v])
    }
}

pub(crate) fn path_from_preds(
    source: NodeId,
    to: NodeId,
    distance: f64,
    pred: impl Fn(usize) -> u32,
) -> Result<PathResult> {
    if !distance.is_finite() {
        return Err(Error::Unreachable { from: source, to });
    }
    let mut nodes = vec![to];
    let mut cur = to;
    while cur != source {
        let p = pred(cur.index());
        debug_assert_ne!(p, NO_PRED);
        cur = NodeId(p);
        nodes.push(cur);
    }
    nodes.reverse();
    Ok(PathResult { distance, nodes })
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `source` to every node.
///
/// Ties are resolved deterministically: equal-distance nodes are settled in
/// id order and a node reached by several shortest paths keeps the lowest
/// predecessor id.
pub fn shortest_path_tree(graph: &RoadGraph, source: NodeId) -> ShortestPathTree {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![NO_PRED; n];
    let mut heap = BinaryHeap::new();
    dist[source.index()] = 0.0;
    heap.push(Reverse(HeapEntry { dist: 0.0, node: source.0 }));

    while let Some(Reverse(HeapEntry { dist: d, node: u })) = heap.pop() {
        if d > dist[u as usize] {
            continue;
        }
        for &(v, len) in graph.out_edges(NodeId(u)) {
            let vi = v.index();
            let nd = d + len;
            if nd < dist[vi] {
                dist[vi] = nd;
                pred[vi] = u;
                heap.push(Reverse(HeapEntry { dist: nd, node: v.0 }));
            } else if nd == dist[vi] && u < pred[vi] && v != source {
                pred[vi] = u;
            }
        }
    }
    ShortestPathTree { source, dist, pred }
}

/// Shortest path between two nodes.
pub fn shortest_path(graph: &RoadGraph, from: NodeId, to: NodeId) -> Result<PathResult> {
    for id in [from, to] {
        if !graph.contains(id) {
            return Err(crate::error::invalid("node", format!("{id} is not in the graph")));
        }
    }
    shortest_path_tree(graph, from).path_to(to)
}
