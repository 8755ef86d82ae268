//! Node/edge text document.
//!
//! ```text
//! # comments and blank lines are ignored
//! [nodes]
//! id,x,y
//! 0,0,0
//! 1,100,0
//! [edges]
//! from,to,length_m
//! 0,1,100
//! 1,0,100
//! ```
//!
//! Node ids must cover `0..n` exactly once; coordinates are planar meters.

use std::fmt::Write;

use super::graph::{Edge, NodeId, RoadGraph};
use crate::error::{Error, Result};

const NODE_HEADER: &str = "id,x,y";
const EDGE_HEADER: &str = "from,to,length_m";

#[derive(PartialEq)]
enum Section {
    None,
    Nodes { header_seen: bool },
    Edges { header_seen: bool },
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn fields<const N: usize>(line_no: usize, line: &str) -> Result<[&str; N]> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    parts
        .try_into()
        .map_err(|p: Vec<&str>| parse_err(line_no, format!("expected {N} fields, found {}", p.len())))
}

fn number<T: std::str::FromStr>(line_no: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| parse_err(line_no, format!("cannot parse {name} from {raw:?}")))
}

/// Parses and validates a node/edge document.
pub fn load_graph(source: &str) -> Result<RoadGraph> {
    let mut section = Section::None;
    let mut nodes: Vec<(usize, u32, f64, f64)> = Vec::new();
    let mut edges: Vec<(usize, Edge)> = Vec::new();

    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "[nodes]" => {
                section = Section::Nodes { header_seen: false };
                continue;
            }
            "[edges]" => {
                section = Section::Edges { header_seen: false };
                continue;
            }
            _ => {}
        }
        match &mut section {
            Section::None => return Err(parse_err(line_no, "data before a [nodes] or [edges] section")),
            Section::Nodes { header_seen } | Section::Edges { header_seen } if !*header_seen => {
                let want = if matches!(section, Section::Nodes { .. }) { NODE_HEADER } else { EDGE_HEADER };
                let got: String = line.split(',').map(str::trim).collect::<Vec<_>>().join(",");
                if got != want {
                    return Err(parse_err(line_no, format!("expected header {want:?}, found {line:?}")));
                }
                match &mut section {
                    Section::Nodes { header_seen } | Section::Edges { header_seen } => *header_seen = true,
                    Section::None => unreachable!(),
                }
            }
            Section::Nodes { .. } => {
                let [id, x, y] = fields::<3>(line_no, line)?;
                nodes.push((
                    line_no,
                    number(line_no, "id", id)?,
                    number(line_no, "x", x)?,
                    number(line_no, "y", y)?,
                ));
            }
            Section::Edges { .. } => {
                let [from, to, len] = fields::<3>(line_no, line)?;
                let length: f64 = number(line_no, "length_m", len)?;
                edges.push((
                    line_no,
                    Edge {
                        from: NodeId(number(line_no, "from", from)?),
                        to: NodeId(number(line_no, "to", to)?),
                        length,
                    },
                ));
            }
        }
    }

    let n = nodes.len();
    let mut coords: Vec<Option<(f64, f64)>> = vec![None; n];
    for &(line, id, x, y) in &nodes {
        let slot = coords
            .get_mut(id as usize)
            .ok_or_else(|| parse_err(line, format!("node id {id} outside 0..{n}; ids must be dense")))?;
        if slot.is_some() {
            return Err(parse_err(line, format!("duplicate node id {id}")));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err(line, format!("node {id} has non-finite coordinates")));
        }
        *slot = Some((x, y));
    }
    for &(line, e) in &edges {
        for id in [e.from, e.to] {
            if id.index() >= n {
                return Err(Error::DanglingEdge { line, node: id.0 });
            }
        }
        if !(e.length > 0.0) || !e.length.is_finite() {
            return Err(Error::InvalidLength { line, length: e.length });
        }
    }
    let coords = coords.into_iter().map(|c| c.expect("dense ids checked")).collect();
    RoadGraph::new(coords, edges.into_iter().map(|(_, e)| e).collect())
}

/// Serializes a graph in the format accepted by [`load_graph`].
pub fn write_graph(graph: &RoadGraph) -> String {
    let mut out = String::new();
    out.push_str("[nodes]\n");
    out.push_str(NODE_HEADER);
    out.push('\n');
    for node in graph.nodes() {
        let _ = writeln!(out, "{},{},{}", node.id, node.x, node.y);
    }
    out.push_str("[edges]\n");
    out.push_str(EDGE_HEADER);
    out.push('\n');
    for e in graph.edges() {
        let _ = writeln!(out, "{},{},{}", e.from, e.to, e.length);
    }
    out
}
