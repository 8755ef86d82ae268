use crate::network::NodeId;

/// Errors produced by the simulator and the analytics toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: edge references unknown node {node}")]
    DanglingEdge { line: usize, node: u32 },

    #[error("line {line}: edge length must be positive and finite, got {length}")]
    InvalidLength { line: usize, length: f64 },

    #[error("road graph is not strongly connected ({reachable} of {total} nodes mutually reachable from node 0)")]
    Disconnected { reachable: usize, total: usize },

    #[error("no route from node {from} to node {to}")]
    Unreachable { from: NodeId, to: NodeId },

    #[error("invalid {field}: {message}")]
    InvalidInput { field: &'static str, message: String },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("record {index}: {message}")]
    MalformedRecord { index: usize, message: String },

    #[error("origin-destination distribution admits no trip longer than {min_distance} m after {attempts} attempts")]
    NoFeasibleOdPair { min_distance: f64, attempts: usize },

    #[error("route has {stops} stops, exhaustive enumeration is capped at {cap}")]
    TooManyStops { stops: usize, cap: usize },

    #[error("vehicle {vehicle}: {scheduled} scheduled + {new} new passengers exceed capacity {capacity}")]
    CapacityExceeded {
        vehicle: u32,
        scheduled: usize,
        new: usize,
        capacity: usize,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Error {
    Error::InvalidInput {
        field,
        message: message.into(),
    }
}
