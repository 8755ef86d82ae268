use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use super::route::{route_with_mode, FeasibleRoute, PlanContext};
use super::{ConstraintSet, DispatchConfig, TIME_EPS};
use crate::demand::{Request, RequestId};
use crate::error::Result;
use crate::fleet::Vehicle;
use crate::network::RoadNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub vehicle: u32,
    /// Seconds for the vehicle to reach the request origin.
    pub eta: f64,
}

/// Candidate vehicles per request, each list in vehicle id order.
pub type Candidates = BTreeMap<RequestId, Vec<Candidate>>;

/// Candidate requests per vehicle, each list in request id order.
pub type VehicleCandidates = BTreeMap<u32, Vec<RequestId>>;

/// A vehicle is a candidate for a request when it can reach the origin
/// within the matching radius and still has a free seat. Requests without
/// candidates are left out.
pub fn preassign(
    requests: &[Request],
    vehicles: &[Vehicle],
    cs: &ConstraintSet,
    net: &RoadNetwork,
    speed: f64,
) -> Candidates {
    let anchors: Vec<_> = vehicles
        .iter()
        .map(|v| (v.id, v.anchor(speed), v.scheduled_count() < v.capacity))
        .collect();
    let mut out = Candidates::new();
    for r in requests {
        let list: Vec<Candidate> = anchors
            .iter()
            .filter(|(_, _, free)| *free)
            .filter_map(|&(vehicle, (node, offset), _)| {
                let eta = offset + net.distance(node, r.origin) / speed;
                (eta <= cs.matching_radius_time + TIME_EPS).then_some(Candidate { vehicle, eta })
            })
            .collect();
        if !list.is_empty() {
            out.insert(r.id, list);
        }
    }
    out
}

/// Trims the candidate sets: drops vehicles that cannot meet the pickup
/// limit even driving straight to the origin, keeps the nearest vehicles
/// per request, then the nearest requests per vehicle. Ties go to the lower
/// id.
pub fn limit_candidates(
    candidates: &Candidates,
    requests: &BTreeMap<RequestId, Request>,
    cs: &ConstraintSet,
    dispatch: &DispatchConfig,
    now: f64,
) -> VehicleCandidates {
    let mut per_vehicle: BTreeMap<u32, Vec<(f64, RequestId)>> = BTreeMap::new();
    for (rid, list) in candidates {
        let Some(r) = requests.get(rid) else { continue };
        let mut list: Vec<Candidate> = list
            .iter()
            .filter(|c| now + c.eta - r.request_time <= cs.max_pickup_time + TIME_EPS)
            .copied()
            .collect();
        list.sort_by(|a, b| a.eta.total_cmp(&b.eta).then(a.vehicle.cmp(&b.vehicle)));
        list.truncate(dispatch.max_vehicles_per_request);
        for c in list {
            per_vehicle.entry(c.vehicle).or_default().push((c.eta, *rid));
        }
    }
    per_vehicle
        .into_iter()
        .map(|(v, mut list)| {
            list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            list.truncate(dispatch.max_requests_per_vehicle);
            let mut ids: Vec<RequestId> = list.into_iter().map(|(_, id)| id).collect();
            ids.sort();
            (v, ids)
        })
        .collect()
}

/// `Σ (p_r − (pickup_time_r + detour_time_r))` over the requests of the trip.
pub fn trip_value(trip: &[RequestId], route: &FeasibleRoute, request_value: f64) -> f64 {
    trip.iter()
        .map(|id| {
            let t = &route.per_request[id];
            request_value - (t.pickup_time + t.detour_time)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RtvEdge {
    pub vehicle: u32,
    /// Request ids in increasing order.
    pub trip: Vec<RequestId>,
    pub route: FeasibleRoute,
    pub value: f64,
}

/// Feasible (trip, vehicle) pairs, ordered by vehicle id, then value
/// descending, then trip.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RtvGraph {
    pub edges: Vec<RtvEdge>,
}

impl RtvGraph {
    pub fn from_edges(mut edges: Vec<RtvEdge>) -> Self {
        edges.sort_by(|a, b| {
            a.vehicle
                .cmp(&b.vehicle)
                .then(b.value.total_cmp(&a.value))
                .then_with(|| a.trip.cmp(&b.trip))
        });
        RtvGraph { edges }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[allow(clippy::too_many_arguments)]
fn vehicle_edges(
    vehicle: &Vehicle,
    candidates: &[RequestId],
    requests: &BTreeMap<RequestId, Request>,
    cs: &ConstraintSet,
    dispatch: &DispatchConfig,
    net: &RoadNetwork,
    speed: f64,
    now: f64,
) -> Result<Vec<RtvEdge>> {
    let p = dispatch.request_value(cs);
    let free = vehicle.capacity.saturating_sub(vehicle.scheduled_count());
    let mut edges = Vec::new();
    let mut level: Vec<Vec<RequestId>> = Vec::new();
    let try_trip = |trip: Vec<RequestId>, edges: &mut Vec<RtvEdge>| -> Result<bool> {
        let reqs: Vec<Request> = trip.iter().map(|id| requests[id]).collect();
        let ctx = PlanContext::new(vehicle, &reqs, now, speed)?;
        Ok(match route_with_mode(&ctx, dispatch.routing, cs, net, speed)? {
            Some(route) => {
                let value = trip_value(&trip, &route, p);
                edges.push(RtvEdge { vehicle: vehicle.id, trip, route, value });
                true
            }
            None => false,
        })
    };
    if free == 0 {
        return Ok(edges);
    }
    for id in candidates {
        if try_trip(vec![*id], &mut edges)? {
            level.push(vec![*id]);
        }
    }
    for k in 2..=free {
        if level.len() < 2 {
            break;
        }
        let known: BTreeSet<&[RequestId]> = level.iter().map(|t| t.as_slice()).collect();
        let mut next = Vec::new();
        for (a, ta) in level.iter().enumerate() {
            for tb in &level[a + 1..] {
                if ta[..k - 2] != tb[..k - 2] {
                    break;
                }
                let mut trip = ta.clone();
                trip.push(tb[k - 2]);
                // every (k-1)-subset must itself be feasible
                let closed = (0..k).all(|skip| {
                    let sub: Vec<RequestId> =
                        trip.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, id)| *id).collect();
                    known.contains(sub.as_slice())
                });
                if closed {
                    next.push(trip);
                }
            }
        }
        let mut feasible = Vec::new();
        for trip in next {
            if try_trip(trip.clone(), &mut edges)? {
                feasible.push(trip);
            }
        }
        level = feasible;
    }
    Ok(edges)
}

/// Builds the request-trip-vehicle graph. Trips of size `k` are formed only
/// from pairs of feasible `(k−1)`-trips of the same vehicle sharing `k−2`
/// requests, and only when all their `(k−1)`-subsets are feasible. Vehicles
/// are processed in parallel; the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn build_rtv(
    candidates: &VehicleCandidates,
    vehicles: &[Vehicle],
    requests: &BTreeMap<RequestId, Request>,
    cs: &ConstraintSet,
    dispatch: &DispatchConfig,
    net: &RoadNetwork,
    speed: f64,
    now: f64,
) -> Result<RtvGraph> {
    let work: Vec<(&Vehicle, &Vec<RequestId>)> = vehicles
        .iter()
        .filter_map(|v| candidates.get(&v.id).map(|c| (v, c)))
        .collect();
    let per_vehicle: Vec<Result<Vec<RtvEdge>>> = work
        .par_iter()
        .map(|(v, c)| vehicle_edges(v, c, requests, cs, dispatch, net, speed, now))
        .collect();
    let mut edges = Vec::new();
    for r in per_vehicle {
        edges.extend(r?);
    }
    Ok(RtvGraph::from_edges(edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::Stop;
    use crate::matching::{evaluate_route, RoutingMode};
    use crate::network::{generate_grid, Edge, NodeId, RoadGraph};

    fn line(n: usize, len: f64) -> RoadNetwork {
        let nodes = (0..n).map(|i| (i as f64 * len, 0.0)).collect();
        let mut edges = Vec::new();
        for i in 0..n as u32 - 1 {
            edges.push(Edge { from: NodeId(i), to: NodeId(i + 1), length: len });
            edges.push(Edge { from: NodeId(i + 1), to: NodeId(i), length: len });
        }
        RoadNetwork::new(RoadGraph::new(nodes, edges).unwrap())
    }

    fn req(net: &RoadNetwork, id: u64, o: u32, d: u32, speed: f64) -> Request {
        Request::new(RequestId(id), NodeId(o), NodeId(d), 0.0, net, speed)
    }

    fn map(rs: &[Request]) -> BTreeMap<RequestId, Request> {
        rs.iter().map(|r| (r.id, *r)).collect()
    }

    #[test]
    fn preassign_radius_and_capacity() {
        let net = line(100, 100.0);
        let cs = ConstraintSet::default();
        let r = req(&net, 0, 0, 10, 10.0);
        let near = Vehicle::new(0, 1, NodeId(3)); // 30 s
        let far = Vehicle::new(1, 1, NodeId(99)); // 990 s
        let mut full = Vehicle::new(2, 1, NodeId(1));
        let other = req(&net, 5, 1, 20, 10.0);
        full.assign(vec![Stop::pickup(&other), Stop::dropoff(&other)], &[other], 0.0).unwrap();
        let c = preassign(&[r], &[near, far.clone(), full], &cs, &net, 10.0);
        assert_eq!(c[&r.id], vec![Candidate { vehicle: 0, eta: 30.0 }]);
        assert!(preassign(&[r], &[far], &cs, &net, 10.0).is_empty());
    }

    #[test]
    fn limits_keep_nearest() {
        let net = line(50, 100.0);
        let cs = ConstraintSet::default();
        let rs: Vec<Request> = (0..4).map(|i| req(&net, i, 10 + i as u32, 40, 10.0)).collect();
        let vehicles: Vec<Vehicle> = (0..5).map(|i| Vehicle::new(i, 4, NodeId(i * 3))).collect();
        let c = preassign(&rs, &vehicles, &cs, &net, 10.0);
        let d = DispatchConfig { max_vehicles_per_request: 2, max_requests_per_vehicle: 1, ..Default::default() };
        let per_vehicle = limit_candidates(&c, &map(&rs), &cs, &d, 0.0);
        // vehicles at 9 and 12 are nearest to every origin in 10..=13
        assert_eq!(per_vehicle.keys().copied().collect::<Vec<_>>(), vec![3, 4]);
        assert_eq!(per_vehicle[&3], vec![RequestId(0)]);
        assert_eq!(per_vehicle[&4], vec![RequestId(2)]);
        // a request that already waited too long loses distant vehicles
        let late = Request { request_time: -880.0, ..rs[0] };
        let c = preassign(&[late], &vehicles, &cs, &net, 10.0);
        let per_vehicle = limit_candidates(&c, &map(&[late]), &cs, &DispatchConfig::default(), 0.0);
        assert_eq!(per_vehicle.keys().copied().collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn trip_values() {
        let net = line(30, 100.0);
        let veh = Vehicle::new(0, 2, NodeId(0));
        let r = req(&net, 0, 1, 10, 10.0);
        let ctx = PlanContext::new(&veh, &[r], 0.0, 10.0).unwrap();
        let route = evaluate_route(&ctx, &[Stop::pickup(&r), Stop::dropoff(&r)], &ConstraintSet::default(), &net, 10.0)
            .unwrap();
        assert_eq!(trip_value(&[r.id], &route, 10_000.0), 9_990.0);

        let at_origin = req(&net, 1, 0, 10, 10.0);
        let ctx = PlanContext::new(&veh, &[at_origin], 0.0, 10.0).unwrap();
        let stops = [Stop::pickup(&at_origin), Stop::dropoff(&at_origin)];
        let route = evaluate_route(&ctx, &stops, &ConstraintSet::default(), &net, 10.0).unwrap();
        assert_eq!(trip_value(&[at_origin.id], &route, 10_000.0), 10_000.0);

        // a was requested 30 s ago, b is reached after 30 s; neither detours
        let a = Request { request_time: -30.0, ..req(&net, 2, 0, 20, 10.0) };
        let b = req(&net, 3, 3, 20, 10.0);
        let ctx = PlanContext::new(&veh, &[a, b], 0.0, 10.0).unwrap();
        let stops = [Stop::pickup(&a), Stop::pickup(&b), Stop::dropoff(&a), Stop::dropoff(&b)];
        let route = evaluate_route(&ctx, &stops, &ConstraintSet::default(), &net, 10.0).unwrap();
        assert_eq!(trip_value(&[a.id, b.id], &route, 10_000.0), 19_940.0);
    }

    #[test]
    fn single_request_single_edge() {
        let net = line(20, 100.0);
        let cs = ConstraintSet::default();
        let r = req(&net, 0, 2, 12, 10.0);
        let vehicles = vec![Vehicle::new(0, 2, NodeId(0))];
        let c = preassign(&[r], &vehicles, &cs, &net, 10.0);
        let d = DispatchConfig::default();
        let vc = limit_candidates(&c, &map(&[r]), &cs, &d, 0.0);
        let g = build_rtv(&vc, &vehicles, &map(&[r]), &cs, &d, &net, 10.0, 0.0).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].trip, vec![r.id]);
        assert_eq!(g.edges[0].value, 3000.0 - 20.0);
    }

    #[test]
    fn shareable_with_one_vehicle_only() {
        // v0 sits between both origins and can pool; v1 is positioned so
        // that it reaches only r2 in time
        let net = line(40, 100.0);
        let cs = ConstraintSet { max_pickup_time: 60.0, matching_radius_time: 900.0, ..Default::default() };
        let r1 = req(&net, 1, 10, 30, 10.0);
        let r2 = req(&net, 2, 11, 31, 10.0);
        let vehicles = vec![Vehicle::new(0, 2, NodeId(9)), Vehicle::new(1, 2, NodeId(17))];
        let rs = map(&[r1, r2]);
        let c = preassign(&[r1, r2], &vehicles, &cs, &net, 10.0);
        let d = DispatchConfig::default();
        let vc = limit_candidates(&c, &rs, &cs, &d, 0.0);
        let g = build_rtv(&vc, &vehicles, &rs, &cs, &d, &net, 10.0, 0.0).unwrap();
        let shape: Vec<(u32, Vec<u64>)> =
            g.edges.iter().map(|e| (e.vehicle, e.trip.iter().map(|r| r.0).collect())).collect();
        assert_eq!(shape, vec![(0, vec![1, 2]), (0, vec![1]), (0, vec![2]), (1, vec![2])]);
    }

    #[test]
    fn downward_closed_and_valid_on_grid() {
        use rand::{Rng, SeedableRng};
        let net = RoadNetwork::new(generate_grid(10, 10, 100.0).unwrap());
        let cs = ConstraintSet::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut rs = Vec::new();
        while rs.len() < 12 {
            let (o, d) = (rng.random_range(0..100u32), rng.random_range(0..100u32));
            if net.distance(NodeId(o), NodeId(d)) > 500.0 {
                rs.push(req(&net, rs.len() as u64, o, d, 6.0));
            }
        }
        let vehicles: Vec<Vehicle> = (0..6).map(|i| Vehicle::new(i, 3, NodeId(rng.random_range(0..100)))).collect();
        let rm = map(&rs);
        let c = preassign(&rs, &vehicles, &cs, &net, 6.0);
        for mode in [RoutingMode::Exhaustive, RoutingMode::NearestNeighbor, RoutingMode::Auto] {
            let d = DispatchConfig { routing: mode, ..Default::default() };
            let vc = limit_candidates(&c, &rm, &cs, &d, 0.0);
            let g = build_rtv(&vc, &vehicles, &rm, &cs, &d, &net, 6.0, 0.0).unwrap();
            let keys: BTreeSet<(u32, Vec<RequestId>)> = g.edges.iter().map(|e| (e.vehicle, e.trip.clone())).collect();
            assert!(g.edges.iter().any(|e| e.trip.len() >= 2));
            for e in &g.edges {
                for skip in 0..e.trip.len() {
                    if e.trip.len() < 2 {
                        break;
                    }
                    let mut sub = e.trip.clone();
                    sub.remove(skip);
                    assert!(keys.contains(&(e.vehicle, sub)));
                }
                let trip: Vec<Request> = e.trip.iter().map(|id| rm[id]).collect();
                let ctx = PlanContext::new(&vehicles[e.vehicle as usize], &trip, 0.0, 6.0).unwrap();
                let again = evaluate_route(&ctx, &e.route.stops, &cs, &net, 6.0).unwrap();
                for (id, t) in &again.per_request {
                    assert!(t.pickup_time <= cs.max_pickup_time + 1e-6);
                    assert!(t.detour_ratio <= cs.max_detour_ratio + 1e-6);
                    assert_eq!(*t, e.route.per_request[id]);
                }
            }
        }
    }
}
