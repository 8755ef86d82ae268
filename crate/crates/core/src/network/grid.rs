use super::graph::{Edge, NodeId, RoadGraph};
use crate::error::{invalid, Result};

/// Bidirectional square lattice, node id `row * cols + col` at
/// `(col * spacing, row * spacing)`.
pub fn generate_grid(rows: usize, cols: usize, spacing: f64) -> Result<RoadGraph> {
    if rows < 2 {
        return Err(invalid("rows", format!("grid needs at least 2 rows, got {rows}")));
    }
    if cols < 2 {
        return Err(invalid("cols", format!("grid needs at least 2 columns, got {cols}")));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(invalid("spacing", format!("must be positive, got {spacing}")));
    }
    let id = |r: usize, c: usize| NodeId((r * cols + c) as u32);
    let mut nodes = Vec::with_capacity(rows * cols);
    let mut edges = Vec::with_capacity(2 * (rows * (cols - 1) + cols * (rows - 1)));
    for r in 0..rows {
        for c in 0..cols {
            nodes.push((c as f64 * spacing, r as f64 * spacing));
            let here = id(r, c);
            if c + 1 < cols {
                edges.push(Edge { from: here, to: id(r, c + 1), length: spacing });
                edges.push(Edge { from: id(r, c + 1), to: here, length: spacing });
            }
            if r + 1 < rows {
                edges.push(Edge { from: here, to: id(r + 1, c), length: spacing });
                edges.push(Edge { from: id(r + 1, c), to: here, length: spacing });
            }
        }
    }
    RoadGraph::new(nodes, edges)
}
