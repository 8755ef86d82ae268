//! Road network substrate: the validated graph, shortest paths, the
//! distance cache used by dispatching, synthetic grids and the node/edge
//! text format.

mod cache;
mod graph;
mod grid;
mod io;
mod path;

pub use cache::{RoadNetwork, DENSE_NODE_LIMIT};
pub use graph::{Edge, Node, NodeId, RoadGraph};
pub use grid::generate_grid;
pub use io::{load_graph, write_graph};
pub use path::{shortest_path, shortest_path_tree, PathResult, ShortestPathTree};

use crate::error::{invalid, Result};

/// Travel time in seconds at constant speed.
pub fn travel_time(distance: f64, speed: f64) -> Result<f64> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(invalid("speed", format!("must be positive, got {speed}")));
    }
    if !(distance >= 0.0) {
        return Err(invalid("distance", format!("must be non-negative, got {distance}")));
    }
    Ok(distance / speed)
}

/// Node closest (Euclidean) to `(x, y)`; ties go to the lowest id.
pub fn snap_to_nearest_node(graph: &RoadGraph, x: f64, y: f64) -> NodeId {
    let mut best = NodeId(0);
    let mut best_d2 = f64::INFINITY;
    for node in graph.nodes() {
        let d2 = (node.x - x).powi(2) + (node.y - y).powi(2);
        if d2 < best_d2 {
            best_d2 = d2;
            best = node.id;
        }
    }
    best
}
