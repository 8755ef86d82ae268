use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::graph::{NodeId, RoadGraph};
use super::path::{path_from_preds, shortest_path_tree, PathResult, ShortestPathTree};
use crate::error::Result;

/// Graphs up to this many nodes get an all-pairs table at construction.
pub const DENSE_NODE_LIMIT: usize = 2_500;

enum DistanceCache {
    Dense { dist: Vec<f64>, pred: Vec<u32> },
    Lazy(RwLock<HashMap<NodeId, Arc<ShortestPathTree>>>),
}

/// A road graph bundled with its distance cache.
///
/// Small graphs precompute all-pairs shortest paths; larger ones memoize
/// single-source trees on demand behind a lock. Either way every query
/// returns the same answer as a fresh [`super::shortest_path`] call.
pub struct RoadNetwork {
    graph: RoadGraph,
    cache: DistanceCache,
}

impl RoadNetwork {
    pub fn new(graph: RoadGraph) -> Self {
        Self::with_dense_limit(graph, DENSE_NODE_LIMIT)
    }

    pub fn with_dense_limit(graph: RoadGraph, limit: usize) -> Self {
        let n = graph.node_count();
        let cache = if n <= limit {
            let mut dist = Vec::with_capacity(n * n);
            let mut pred = Vec::with_capacity(n * n);
            for s in 0..n {
                let tree = shortest_path_tree(&graph, NodeId(s as u32));
                dist.extend_from_slice(&tree.dist);
                pred.extend_from_slice(&tree.pred);
            }
            DistanceCache::Dense { dist, pred }
        } else {
            DistanceCache::Lazy(RwLock::new(HashMap::new()))
        };
        RoadNetwork { graph, cache }
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.cache, DistanceCache::Dense { .. })
    }

    fn tree(&self, source: NodeId) -> Arc<ShortestPathTree> {
        let DistanceCache::Lazy(lock) = &self.cache else {
            unreachable!("tree lookup on dense cache")
        };
        if let Some(t) = lock.read().expect("distance cache poisoned").get(&source) {
            return Arc::clone(t);
        }
        let tree = Arc::new(shortest_path_tree(&self.graph, source));
        let mut guard = lock.write().expect("distance cache poisoned");
        Arc::clone(guard.entry(source).or_insert(tree))
    }

    /// Shortest-path distance in meters.
    #[inline]
    pub fn distance(&self, from: NodeId, to: NodeId) -> f64 {
        match &self.cache {
            DistanceCache::Dense { dist, .. } => dist[from.index() * self.graph.node_count() + to.index()],
            DistanceCache::Lazy(_) => self.tree(from).distance(to),
        }
    }

    pub fn path(&self, from: NodeId, to: NodeId) -> Result<PathResult> {
        match &self.cache {
            DistanceCache::Dense { dist, pred } => {
                let row = from.index() * self.graph.node_count();
                path_from_preds(from, to, dist[row + to.index()], |v| pred[row + v])
            }
            DistanceCache::Lazy(_) => self.tree(from).path_to(to),
        }
    }
}
