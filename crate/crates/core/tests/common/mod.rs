//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ridepool::demand::{Request, RequestId};
use ridepool::fleet::{Stop, StopKind, Vehicle};
use ridepool::matching::{
    route_exhaustive, route_nn, solve_ilp, ConstraintSet, FeasibleRoute, PlanContext, RtvEdge, RtvGraph,
};
use ridepool::network::{Edge, NodeId, RoadGraph, RoadNetwork};

pub const EPS: f64 = 1e-6;

/// Strongly connected random digraph: a shuffled Hamiltonian cycle plus
/// `extra` random edges. Lengths are integers in `1..=max_len`, so every
/// path sum is exact in floating point.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize, max_len: u32) -> (Vec<(f64, f64)>, Vec<Edge>) {
    let nodes: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)))
        .collect();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    let len = |rng: &mut ChaCha8Rng| rng.random_range(1..=max_len) as f64;
    if n > 1 {
        for i in 0..n {
            let (a, b) = (order[i], order[(i + 1) % n]);
            edges.push(Edge { from: NodeId(a), to: NodeId(b), length: len(rng) });
        }
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n as u32);
        let b = rng.random_range(0..n as u32);
        if a != b {
            edges.push(Edge { from: NodeId(a), to: NodeId(b), length: len(rng) });
        }
    }
    (nodes, edges)
}

pub fn build_graph(nodes: Vec<(f64, f64)>, edges: Vec<Edge>) -> RoadGraph {
    RoadGraph::new(nodes, edges).expect("generated graph is valid")
}

/// Single-source distances by edge relaxation until nothing changes.
pub fn bellman_ford(n: usize, edges: &[Edge], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for e in edges {
            let d = dist[e.from.index()] + e.length;
            if d < dist[e.to.index()] {
                dist[e.to.index()] = d;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

pub fn all_pairs(n: usize, edges: &[Edge]) -> Vec<Vec<f64>> {
    (0..n).map(|s| bellman_ford(n, edges, s)).collect()
}

/// A passenger as seen by the route oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleItem {
    pub request: Request,
    pub picked_up_at: Option<f64>,
}

pub fn oracle_items(vehicle: &Vehicle, new: &[Request]) -> Vec<OracleItem> {
    let mut items: Vec<OracleItem> = vehicle
        .riders()
        .map(|r| OracleItem { request: r.request, picked_up_at: r.picked_up_at })
        .collect();
    items.extend(new.iter().map(|r| OracleItem { request: *r, picked_up_at: None }));
    items
}

/// Replays a stop order from `(start, t0)` and returns its total delay if
/// every constraint holds.
pub fn oracle_cost(
    items: &[OracleItem],
    order: &[Stop],
    start: NodeId,
    t0: f64,
    capacity: usize,
    cs: &ConstraintSet,
    dist: &[Vec<f64>],
    speed: f64,
) -> Option<f64> {
    let mut picked: Vec<Option<f64>> = items.iter().map(|i| i.picked_up_at).collect();
    let mut load = picked.iter().filter(|p| p.is_some()).count();
    let (mut at, mut t, mut cost) = (start, t0, 0.0);
    for s in order {
        let i = items.iter().position(|it| it.request.id == s.request_id)?;
        let r = &items[i].request;
        t += dist[at.index()][s.node.index()] / speed;
        at = s.node;
        match s.kind {
            StopKind::Pickup => {
                if t - r.request_time > cs.max_pickup_time + EPS {
                    return None;
                }
                load += 1;
                if load > capacity {
                    return None;
                }
                picked[i] = Some(t);
            }
            StopKind::Dropoff => {
                let p = picked[i]?;
                let ride = t - p;
                if ride > (1.0 + cs.max_detour_ratio) * r.direct_time + EPS {
                    return None;
                }
                load -= 1;
                cost += (p - r.request_time) + (ride - r.direct_time);
            }
        }
    }
    Some(cost)
}

/// Every stop order with pickups before dropoffs, in no particular
/// priority; the cheapest feasible cost, if any.
pub fn oracle_best_route(
    items: &[OracleItem],
    start: NodeId,
    t0: f64,
    capacity: usize,
    cs: &ConstraintSet,
    dist: &[Vec<f64>],
    speed: f64,
) -> Option<f64> {
    let mut stops = Vec::new();
    for it in items {
        if it.picked_up_at.is_none() {
            stops.push(Stop::pickup(&it.request));
        }
        stops.push(Stop::dropoff(&it.request));
    }
    let mut best: Option<f64> = None;
    let mut used = vec![false; stops.len()];
    let mut order = Vec::with_capacity(stops.len());
    enumerate(&stops, &mut used, &mut order, &mut |o| {
        if let Some(c) = oracle_cost(items, o, start, t0, capacity, cs, dist, speed) {
            if best.is_none_or(|b| c < b) {
                best = Some(c);
            }
        }
    });
    best
}

fn enumerate(stops: &[Stop], used: &mut [bool], order: &mut Vec<Stop>, visit: &mut impl FnMut(&[Stop])) {
    if order.len() == stops.len() {
        visit(order);
        return;
    }
    for i in 0..stops.len() {
        if used[i] {
            continue;
        }
        let s = stops[i];
        // a dropoff waits for its own pickup when one is in the list
        if s.kind == StopKind::Dropoff
            && stops.iter().enumerate().any(|(j, p)| {
                p.kind == StopKind::Pickup && p.request_id == s.request_id && !used[j]
            })
        {
            continue;
        }
        used[i] = true;
        order.push(s);
        enumerate(stops, used, order, visit);
        order.pop();
        used[i] = false;
    }
}

pub fn plain_edge(vehicle: u32, trip: Vec<RequestId>, value: f64) -> RtvEdge {
    RtvEdge {
        vehicle,
        trip,
        route: FeasibleRoute { stops: Vec::new(), total_cost: 0.0, per_request: Default::default() },
        value,
    }
}

/// Random assignment instance: up to `max_vehicles` vehicles with up to
/// `max_trips` distinct trips each over a small request pool. Values are
/// integers so optimal objectives compare exactly.
pub fn random_rtv(rng: &mut ChaCha8Rng, max_vehicles: u32, max_trips: usize) -> RtvGraph {
    let vehicles = rng.random_range(1..=max_vehicles);
    let pool = rng.random_range(1..=8u64);
    let mut edges = Vec::new();
    for v in 0..vehicles {
        let mut trips: Vec<Vec<RequestId>> = Vec::new();
        for _ in 0..rng.random_range(0..=max_trips) {
            let size = rng.random_range(1..=3usize.min(pool as usize));
            let mut ids: Vec<u64> = (0..pool).collect();
            ids.shuffle(rng);
            let mut trip: Vec<RequestId> = ids[..size].iter().map(|&r| RequestId(r)).collect();
            trip.sort();
            if !trips.contains(&trip) {
                trips.push(trip);
            }
        }
        for trip in trips {
            let value = rng.random_range(-5..=60i32) as f64;
            edges.push(plain_edge(v, trip, value));
        }
    }
    RtvGraph::from_edges(edges)
}

/// Best objective over every choice of at most one edge per vehicle with
/// disjoint requests.
pub fn oracle_assignment(g: &RtvGraph) -> f64 {
    let mut vehicles: Vec<u32> = g.edges.iter().map(|e| e.vehicle).collect();
    vehicles.sort();
    vehicles.dedup();
    fn go(g: &RtvGraph, vehicles: &[u32], taken: &mut Vec<RequestId>) -> f64 {
        let Some((&v, rest)) = vehicles.split_first() else { return 0.0 };
        let mut best = go(g, rest, taken);
        for e in g.edges.iter().filter(|e| e.vehicle == v) {
            if e.trip.iter().any(|r| taken.contains(r)) {
                continue;
            }
            let mark = taken.len();
            taken.extend(e.trip.iter().copied());
            best = best.max(e.value + go(g, rest, taken));
            taken.truncate(mark);
        }
        best
    }
    go(g, &vehicles, &mut Vec::new())
}

/// One randomized route-planning instance: a vehicle that may already carry
/// or await passengers, plus one to three new requests.
pub struct RouteCase {
    pub net: RoadNetwork,
    pub dist: Vec<Vec<f64>>,
    pub vehicle: Vehicle,
    pub new: Vec<Request>,
    pub now: f64,
    pub speed: f64,
    pub cs: ConstraintSet,
}

fn random_pair(rng: &mut ChaCha8Rng, n: u32, origin: Option<u32>) -> (NodeId, NodeId) {
    let o = origin.unwrap_or_else(|| rng.random_range(0..n));
    let mut d = rng.random_range(0..n - 1);
    if d >= o {
        d += 1;
    }
    (NodeId(o), NodeId(d))
}

pub fn route_case(seed: u64) -> RouteCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=12usize);
    let (nodes, edges) = random_graph(&mut rng, n, 2 * n, 20);
    let dist = all_pairs(n, &edges);
    let net = RoadNetwork::new(build_graph(nodes, edges));
    let speed = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
    let start = rng.random_range(0..n as u32);

    let prior = rng.random_range(0..=2usize);
    let fresh = rng.random_range(1..=3usize);
    let capacity = prior + fresh + rng.random_range(0..=1usize);
    let mut vehicle = Vehicle::new(0, capacity, NodeId(start));
    let mut id = 0u64;
    if prior > 0 {
        let mut riders = Vec::new();
        for k in 0..prior {
            // the first prior rider boards immediately, the second may not
            let (o, d) = random_pair(&mut rng, n as u32, (k == 0).then_some(start));
            riders.push(Request::new(RequestId(id), o, d, 0.0, &net, speed));
            id += 1;
        }
        let mut stops: Vec<Stop> = riders.iter().map(Stop::pickup).collect();
        stops.extend(riders.iter().map(Stop::dropoff));
        vehicle.assign(stops, &riders, 0.0).expect("valid prior schedule");
    }
    let now = rng.random_range(0..=6u32) as f64;
    vehicle.advance(now, 0.0, &net, speed).expect("advance");

    let new = (0..fresh)
        .map(|_| {
            let (o, d) = random_pair(&mut rng, n as u32, None);
            let t = now - rng.random_range(0..=10u32) as f64;
            id += 1;
            Request::new(RequestId(id), o, d, t, &net, speed)
        })
        .collect();
    let cs = ConstraintSet {
        max_pickup_time: rng.random_range(5..=80u32) as f64,
        max_detour_ratio: [0.25, 0.5, 1.0, 2.0][rng.random_range(0..4)],
        max_wait_time: 300.0,
        matching_radius_time: 900.0,
    };
    RouteCase { net, dist, vehicle, new, now, speed, cs }
}

/// Compares exhaustive and nearest-neighbour routing with the enumeration
/// oracle. Returns whether the instance was feasible.
pub fn check_route_case(case: &RouteCase) -> Result<bool, String> {
    let ctx = PlanContext::new(&case.vehicle, &case.new, case.now, case.speed).map_err(|e| e.to_string())?;
    let (start, offset) = case.vehicle.anchor(case.speed);
    let items = oracle_items(&case.vehicle, &case.new);
    let t0 = case.now + offset;
    let cap = case.vehicle.capacity;
    let oracle = oracle_best_route(&items, start, t0, cap, &case.cs, &case.dist, case.speed);
    let exact = route_exhaustive(&ctx, &case.cs, &case.net, case.speed).map_err(|e| e.to_string())?;
    match (&exact, oracle) {
        (None, None) => {}
        (Some(r), Some(best)) => {
            if (r.total_cost - best).abs() > 1e-9 {
                return Err(format!("exhaustive cost {} but oracle minimum {best}", r.total_cost));
            }
            let replay = oracle_cost(&items, &r.stops, start, t0, cap, &case.cs, &case.dist, case.speed);
            if replay.is_none_or(|c| (c - r.total_cost).abs() > 1e-9) {
                return Err(format!("returned order replays to {replay:?}, reported {}", r.total_cost));
            }
        }
        (e, o) => return Err(format!("feasibility differs: exhaustive {:?}, oracle {o:?}", e.as_ref().map(|r| r.total_cost))),
    }
    if let Some(nn) = route_nn(&ctx, &case.cs, &case.net, case.speed) {
        let Some(ex) = &exact else {
            return Err("nearest-neighbour order feasible but exhaustive search found none".into());
        };
        if nn.total_cost < ex.total_cost - 1e-9 {
            return Err(format!("nearest-neighbour cost {} below exhaustive {}", nn.total_cost, ex.total_cost));
        }
    }
    Ok(exact.is_some())
}

/// Compares the exact solver with the enumeration oracle and checks that
/// the chosen edges form a valid assignment.
pub fn check_assignment(g: &RtvGraph) -> Result<(), String> {
    let sol = solve_ilp(g);
    let best = oracle_assignment(g);
    if sol.objective != best {
        return Err(format!("solver objective {} but oracle {best}", sol.objective));
    }
    let mut vehicles = Vec::new();
    let mut requests = Vec::new();
    let mut total = 0.0;
    for &i in &sol.chosen {
        let e = &g.edges[i];
        if vehicles.contains(&e.vehicle) {
            return Err(format!("vehicle {} chosen twice", e.vehicle));
        }
        vehicles.push(e.vehicle);
        for r in &e.trip {
            if requests.contains(r) {
                return Err(format!("request {r} covered twice"));
            }
            requests.push(*r);
        }
        total += e.value;
    }
    if total != sol.objective {
        return Err(format!("chosen edges sum to {total}, objective says {}", sol.objective));
    }
    Ok(())
}
