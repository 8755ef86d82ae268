//! Dispatching: pre-assignment by matching area, route feasibility,
//! request-trip-vehicle graph construction and exact assignment.

mod ilp;
mod route;
mod rtv;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use ilp::{greedy_assignment, solve_ilp, AssignmentSolution};
pub use route::{
    evaluate_route, route_exhaustive, route_nn, route_with_mode, FeasibleRoute, PlanContext, Timing,
    MAX_EXHAUSTIVE_STOPS,
};
pub use rtv::{
    build_rtv, limit_candidates, preassign, trip_value, Candidate, Candidates, RtvEdge, RtvGraph, VehicleCandidates,
};

/// Tolerance (s) on constraint comparisons.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSet {
    /// Seconds from request to pickup.
    pub max_pickup_time: f64,
    /// Allowed ratio of extra in-vehicle time to direct travel time.
    pub max_detour_ratio: f64,
    /// Seconds a request may wait unassigned before it is cancelled.
    pub max_wait_time: f64,
    /// Vehicles further than this (s) from an origin are not considered.
    pub matching_radius_time: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet {
            max_pickup_time: 900.0,
            max_detour_ratio: 0.5,
            max_wait_time: 300.0,
            matching_radius_time: 900.0,
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("max_pickup_time", self.max_pickup_time),
            ("max_detour_ratio", self.max_detour_ratio),
            ("max_wait_time", self.max_wait_time),
            ("matching_radius_time", self.matching_radius_time),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.matching_radius_time < self.max_pickup_time {
            return Err(invalid(
                "matching_radius_time",
                format!(
                    "must be at least max_pickup_time ({} < {})",
                    self.matching_radius_time, self.max_pickup_time
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    Exhaustive,
    #[serde(alias = "nn")]
    NearestNeighbor,
    /// Exhaustive up to [`AUTO_EXHAUSTIVE_STOPS`] stops, nearest-neighbour beyond.
    #[default]
    Auto,
}

/// Largest stop count routed exhaustively in [`RoutingMode::Auto`].
pub const AUTO_EXHAUSTIVE_STOPS: usize = 8;

/// Dispatcher tuning beyond the passenger constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchConfig {
    #[serde(default)]
    pub routing: RoutingMode,
    /// Value of serving one request; `None` means ten times the maximal
    /// waiting time.
    #[serde(default)]
    pub request_value: Option<f64>,
    /// Nearest candidate requests kept per vehicle.
    #[serde(default = "default_requests_per_vehicle")]
    pub max_requests_per_vehicle: usize,
    /// Nearest candidate vehicles kept per request.
    #[serde(default = "default_vehicles_per_request")]
    pub max_vehicles_per_request: usize,
    /// Let requests not yet picked up move to another vehicle.
    #[serde(default)]
    pub allow_reassignment: bool,
}

fn default_requests_per_vehicle() -> usize {
    16
}

fn default_vehicles_per_request() -> usize {
    10
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            routing: RoutingMode::default(),
            request_value: None,
            max_requests_per_vehicle: default_requests_per_vehicle(),
            max_vehicles_per_request: default_vehicles_per_request(),
            allow_reassignment: false,
        }
    }
}

impl DispatchConfig {
    pub fn request_value(&self, cs: &ConstraintSet) -> f64 {
        self.request_value.unwrap_or(10.0 * cs.max_wait_time)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.request_value {
            if !p.is_finite() {
                return Err(invalid("request_value", "must be finite"));
            }
        }
        if self.max_requests_per_vehicle == 0 {
            return Err(invalid("max_requests_per_vehicle", "must be at least 1"));
        }
        if self.max_vehicles_per_request == 0 {
            return Err(invalid("max_vehicles_per_request", "must be at least 1"));
        }
        Ok(())
    }
}
