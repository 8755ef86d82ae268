//! Vehicle state: position on the network, planned stops, riders, and
//! constant-speed motion with boarding and alighting events.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{Request, RequestId};
use crate::error::{invalid, Error, Result};
use crate::network::{NodeId, RoadGraph, RoadNetwork};

/// Slack for floating-point distance bookkeeping (m).
const DIST_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub kind: StopKind,
    pub request_id: RequestId,
    pub node: NodeId,
}

impl Stop {
    pub fn pickup(r: &Request) -> Self {
        Stop { kind: StopKind::Pickup, request_id: r.id, node: r.origin }
    }

    pub fn dropoff(r: &Request) -> Self {
        Stop { kind: StopKind::Dropoff, request_id: r.id, node: r.destination }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub vehicles: usize,
    pub capacity: usize,
    /// m/s
    pub speed: f64,
    pub seed: u64,
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vehicles == 0 {
            return Err(invalid("vehicles", "fleet needs at least one vehicle"));
        }
        if self.capacity == 0 {
            return Err(invalid("capacity", "must be at least 1"));
        }
        if !(self.speed > 0.0) || !self.speed.is_finite() {
            return Err(invalid("speed", format!("must be positive, got {}", self.speed)));
        }
        Ok(())
    }
}

/// A request assigned to a vehicle, waiting for pickup or onboard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rider {
    pub request: Request,
    pub assigned_at: f64,
    pub picked_up_at: Option<f64>,
}

impl Rider {
    pub fn onboard(&self) -> bool {
        self.picked_up_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Leg {
    to: NodeId,
    length: f64,
    progress: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PickedUp,
    DroppedOff,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PickedUp => "picked_up",
            EventKind::DroppedOff => "dropped_off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub vehicle_id: u32,
    pub kind: EventKind,
    pub request_id: RequestId,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u32,
    pub capacity: usize,
    node: NodeId,
    leg: Option<Leg>,
    path: VecDeque<NodeId>,
    schedule: VecDeque<Stop>,
    riders: BTreeMap<RequestId, Rider>,
    odometer: f64,
}

impl Vehicle {
    pub fn new(id: u32, capacity: usize, node: NodeId) -> Self {
        Vehicle {
            id,
            capacity,
            node,
            leg: None,
            path: VecDeque::new(),
            schedule: VecDeque::new(),
            riders: BTreeMap::new(),
            odometer: 0.0,
        }
    }

    /// Last node reached.
    pub fn node(&self) -> NodeId {
        self.node
    }

    /// `(next node, metres left on the current edge)` while between nodes.
    pub fn in_transit(&self) -> Option<(NodeId, f64)> {
        self.leg.map(|l| (l.to, l.length - l.progress))
    }

    /// Node from which a new plan starts and the delay (s) until the vehicle
    /// gets there; a vehicle mid-edge finishes that edge first.
    pub fn anchor(&self, speed: f64) -> (NodeId, f64) {
        match self.leg {
            Some(l) => (l.to, (l.length - l.progress).max(0.0) / speed),
            None => (self.node, 0.0),
        }
    }

    pub fn schedule(&self) -> impl ExactSizeIterator<Item = &Stop> {
        self.schedule.iter()
    }

    pub fn riders(&self) -> impl Iterator<Item = &Rider> {
        self.riders.values()
    }

    pub fn rider(&self, id: RequestId) -> Option<&Rider> {
        self.riders.get(&id)
    }

    pub fn onboard_count(&self) -> usize {
        self.riders.values().filter(|r| r.onboard()).count()
    }

    /// Passengers onboard plus passengers scheduled to be picked up.
    pub fn scheduled_count(&self) -> usize {
        self.riders.len()
    }

    pub fn is_idle(&self) -> bool {
        self.schedule.is_empty()
    }

    /// Total distance driven (m).
    pub fn odometer(&self) -> f64 {
        self.odometer
    }

    /// Replaces the schedule with `stops` and adds `new` as riders assigned
    /// at `now`. The stop list must cover every rider: one dropoff for each
    /// onboard passenger, a pickup followed by a dropoff for everyone else.
    pub fn assign(&mut self, stops: Vec<Stop>, new: &[Request], now: f64) -> Result<()> {
        let mut riders = self.riders.clone();
        for r in new {
            let rider = Rider { request: *r, assigned_at: now, picked_up_at: None };
            if riders.insert(r.id, rider).is_some() {
                return Err(Error::Invariant(format!(
                    "vehicle {}: request {} assigned twice",
                    self.id, r.id
                )));
            }
        }
        if riders.len() > self.capacity {
            return Err(Error::CapacityExceeded {
                vehicle: self.id,
                scheduled: self.riders.len(),
                new: new.len(),
                capacity: self.capacity,
            });
        }
        check_schedule(self.id, &riders, &stops)?;
        self.riders = riders;
        self.schedule = stops.into();
        self.path.clear();
        Ok(())
    }

    /// Removes riders still waiting for pickup, along with their stops.
    pub fn release_pending(&mut self) -> Vec<Rider> {
        let pending: Vec<Rider> = self.riders.values().filter(|r| !r.onboard()).copied().collect();
        for r in &pending {
            self.riders.remove(&r.request.id);
        }
        let riders = &self.riders;
        self.schedule.retain(|s| riders.contains_key(&s.request_id));
        self.path.clear();
        pending
    }

    /// Moves `speed·dt` metres along the planned route starting at time
    /// `now`, executing every stop reached on the way. Without a schedule
    /// the vehicle stays where it is.
    pub fn advance(&mut self, dt: f64, now: f64, net: &RoadNetwork, speed: f64) -> Result<Vec<Event>> {
        let budget = speed * dt;
        let mut used = 0.0;
        let mut events = Vec::new();
        loop {
            if let Some(leg) = self.leg.as_mut() {
                let rem = leg.length - leg.progress;
                if used + rem <= budget + DIST_EPS {
                    used += rem;
                    self.odometer += rem;
                    self.node = leg.to;
                    self.leg = None;
                } else {
                    let step = budget - used;
                    leg.progress += step;
                    self.odometer += step;
                    return Ok(events);
                }
            }
            let t = now + used / speed;
            while self.schedule.front().is_some_and(|s| s.node == self.node) {
                let stop = self.schedule.pop_front().expect("front checked");
                events.push(self.execute(stop, t)?);
                self.path.clear();
            }
            let Some(next_stop) = self.schedule.front() else {
                self.path.clear();
                return Ok(events);
            };
            if used >= budget - DIST_EPS {
                return Ok(events);
            }
            if self.path.is_empty() {
                let p = net.path(self.node, next_stop.node)?;
                self.path.extend(p.nodes.into_iter().skip(1));
            }
            let to = self.path.pop_front().ok_or_else(|| {
                Error::Invariant(format!("vehicle {}: empty path toward {}", self.id, next_stop.node))
            })?;
            let length = net.graph().edge_length(self.node, to).ok_or_else(|| {
                Error::Invariant(format!("vehicle {}: no edge {} -> {}", self.id, self.node, to))
            })?;
            self.leg = Some(Leg { to, length, progress: 0.0 });
        }
    }

    fn execute(&mut self, stop: Stop, t: f64) -> Result<Event> {
        let onboard = self.onboard_count();
        let rider = self.riders.get_mut(&stop.request_id).ok_or_else(|| {
            Error::Invariant(format!("vehicle {}: stop for unknown request {}", self.id, stop.request_id))
        })?;
        let kind = match stop.kind {
            StopKind::Pickup => {
                if rider.onboard() {
                    return Err(Error::Invariant(format!(
                        "vehicle {}: request {} picked up twice",
                        self.id, stop.request_id
                    )));
                }
                if onboard + 1 > self.capacity {
                    return Err(Error::CapacityExceeded {
                        vehicle: self.id,
                        scheduled: onboard,
                        new: 1,
                        capacity: self.capacity,
                    });
                }
                rider.picked_up_at = Some(t);
                EventKind::PickedUp
            }
            StopKind::Dropoff => {
                if !rider.onboard() {
                    return Err(Error::Invariant(format!(
                        "vehicle {}: dropoff before pickup for request {}",
                        self.id, stop.request_id
                    )));
                }
                self.riders.remove(&stop.request_id);
                EventKind::DroppedOff
            }
        };
        Ok(Event { time: t, vehicle_id: self.id, kind, request_id: stop.request_id, node: stop.node })
    }
}

fn check_schedule(vehicle: u32, riders: &BTreeMap<RequestId, Rider>, stops: &[Stop]) -> Result<()> {
    let bad = |msg: String| Err(Error::Invariant(format!("vehicle {vehicle}: {msg}")));
    // 0 = nothing seen, 1 = pickup seen, 2 = dropoff seen
    let mut seen: BTreeMap<RequestId, u8> = BTreeMap::new();
    for s in stops {
        let Some(rider) = riders.get(&s.request_id) else {
            return bad(format!("stop for unassigned request {}", s.request_id));
        };
        let state = seen.entry(s.request_id).or_insert(if rider.onboard() { 1 } else { 0 });
        let expected_node = match s.kind {
            StopKind::Pickup => rider.request.origin,
            StopKind::Dropoff => rider.request.destination,
        };
        if s.node != expected_node {
            return bad(format!("stop for request {} at wrong node {}", s.request_id, s.node));
        }
        *state = match (s.kind, *state) {
            (StopKind::Pickup, 0) => 1,
            (StopKind::Dropoff, 1) => 2,
            _ => return bad(format!("stop order broken for request {}", s.request_id)),
        };
    }
    for id in riders.keys() {
        if seen.get(id) != Some(&2) {
            return bad(format!("request {id} has no pending dropoff"));
        }
    }
    Ok(())
}

/// Places `vehicles` at origins of randomly chosen requests, so initial
/// positions follow the spatial distribution of demand.
pub fn initialize_fleet(cfg: &FleetConfig, requests: &[Request]) -> Result<Vec<Vehicle>> {
    cfg.validate()?;
    if requests.is_empty() {
        return Err(Error::Empty("request list for vehicle placement"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.vehicles)
        .map(|i| {
            let r = &requests[rng.random_range(0..requests.len())];
            Vehicle::new(i as u32, cfg.capacity, r.origin)
        })
        .collect())
}

/// Places vehicles uniformly over nodes; used when there is no demand to
/// sample from.
pub fn initialize_fleet_uniform(cfg: &FleetConfig, graph: &RoadGraph) -> Result<Vec<Vehicle>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = graph.node_count() as u32;
    Ok((0..cfg.vehicles)
        .map(|i| Vehicle::new(i as u32, cfg.capacity, NodeId(rng.random_range(0..n))))
        .collect())
}

/// Writes events as `time,vehicle_id,event,request_id,node`.
pub fn write_events<W: Write>(writer: W, events: &[Event]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "vehicle_id", "event", "request_id", "node"])?;
    for e in events {
        w.write_record([
            e.time.to_string(),
            e.vehicle_id.to_string(),
            e.kind.as_str().to_string(),
            e.request_id.to_string(),
            e.node.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_grid, Edge};

    fn line(n: usize, len: f64) -> RoadNetwork {
        let nodes = (0..n).map(|i| (i as f64 * len, 0.0)).collect();
        let mut edges = Vec::new();
        for i in 0..n as u32 - 1 {
            edges.push(Edge { from: NodeId(i), to: NodeId(i + 1), length: len });
            edges.push(Edge { from: NodeId(i + 1), to: NodeId(i), length: len });
        }
        RoadNetwork::new(RoadGraph::new(nodes, edges).unwrap())
    }

    fn req(net: &RoadNetwork, id: u64, o: u32, d: u32, v: f64) -> Request {
        Request::new(RequestId(id), NodeId(o), NodeId(d), 0.0, net, v)
    }

    #[test]
    fn idle_vehicle_stays() {
        let net = line(4, 100.0);
        let mut veh = Vehicle::new(0, 2, NodeId(2));
        let ev = veh.advance(2.0, 0.0, &net, 10.0).unwrap();
        assert!(ev.is_empty());
        assert_eq!(veh.node(), NodeId(2));
        assert_eq!(veh.in_transit(), None);
        assert_eq!(veh.odometer(), 0.0);
    }

    #[test]
    fn pickup_then_residual_progress() {
        let net = line(4, 100.0);
        let r = req(&net, 0, 1, 3, 10.0);
        let mut veh = Vehicle::new(0, 2, NodeId(0));
        veh.assign(vec![Stop::pickup(&r), Stop::dropoff(&r)], &[r], 50.0).unwrap();
        let ev = veh.advance(20.0, 50.0, &net, 10.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::PickedUp);
        assert_eq!(ev[0].time, 60.0);
        assert_eq!(ev[0].node, NodeId(1));
        assert_eq!(veh.node(), NodeId(2));
        assert_eq!(veh.odometer(), 200.0);
        assert_eq!(veh.rider(r.id).unwrap().picked_up_at, Some(60.0));
        assert_eq!(veh.scheduled_count(), 1);
    }

    #[test]
    fn dropoff_empties_vehicle() {
        let net = line(4, 100.0);
        let r = req(&net, 0, 0, 1, 10.0);
        let mut veh = Vehicle::new(0, 2, NodeId(0));
        veh.assign(vec![Stop::pickup(&r), Stop::dropoff(&r)], &[r], 0.0).unwrap();
        let ev = veh.advance(2.0, 0.0, &net, 10.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].time, 0.0);
        assert_eq!(veh.onboard_count(), 1);
        let ev = veh.advance(30.0, 2.0, &net, 10.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::DroppedOff);
        assert_eq!(ev[0].time, 10.0);
        assert!(veh.is_idle());
        assert_eq!(veh.onboard_count(), 0);
        assert_eq!(veh.scheduled_count(), 0);
        // stays put after the schedule ends
        assert_eq!(veh.node(), NodeId(1));
        assert_eq!(veh.odometer(), 100.0);
    }

    #[test]
    fn scheduled_count_definition() {
        let net = line(6, 100.0);
        let mut veh = Vehicle::new(0, 4, NodeId(0));
        assert_eq!(veh.scheduled_count(), 0);
        let a = req(&net, 0, 0, 5, 10.0);
        let b = req(&net, 1, 0, 4, 10.0);
        let c = req(&net, 2, 3, 5, 10.0);
        let stops = vec![
            Stop::pickup(&a),
            Stop::pickup(&b),
            Stop::pickup(&c),
            Stop::dropoff(&b),
            Stop::dropoff(&a),
            Stop::dropoff(&c),
        ];
        veh.assign(stops, &[a, b, c], 0.0).unwrap();
        veh.advance(1.0, 0.0, &net, 10.0).unwrap();
        assert_eq!(veh.onboard_count(), 2);
        assert_eq!(veh.scheduled_count(), 3);
    }

    #[test]
    fn full_vehicle_counts_capacity() {
        let net = line(6, 100.0);
        let mut veh = Vehicle::new(0, 4, NodeId(0));
        let rs: Vec<Request> = (0..4).map(|i| req(&net, i, 0, 5, 10.0)).collect();
        let mut stops: Vec<Stop> = rs.iter().map(Stop::pickup).collect();
        stops.extend(rs.iter().map(Stop::dropoff));
        veh.assign(stops, &rs, 0.0).unwrap();
        veh.advance(1.0, 0.0, &net, 10.0).unwrap();
        assert_eq!(veh.onboard_count(), 4);
        assert_eq!(veh.scheduled_count(), 4);
        let extra = req(&net, 9, 1, 2, 10.0);
        let mut stops: Vec<Stop> = vec![Stop::pickup(&extra), Stop::dropoff(&extra)];
        stops.extend(rs.iter().map(Stop::dropoff));
        assert!(matches!(veh.assign(stops, &[extra], 1.0), Err(Error::CapacityExceeded { .. })));
    }

    #[test]
    fn malformed_schedules_rejected() {
        let net = line(4, 100.0);
        let r = req(&net, 0, 1, 3, 10.0);
        let mut veh = Vehicle::new(0, 2, NodeId(0));
        assert!(veh.assign(vec![Stop::dropoff(&r), Stop::pickup(&r)], &[r], 0.0).is_err());
        assert!(veh.assign(vec![Stop::pickup(&r)], &[r], 0.0).is_err());
        let wrong = Stop { kind: StopKind::Pickup, request_id: r.id, node: NodeId(2) };
        assert!(veh.assign(vec![wrong, Stop::dropoff(&r)], &[r], 0.0).is_err());
        assert!(veh.is_idle());
        assert_eq!(veh.scheduled_count(), 0);
    }

    #[test]
    fn new_plan_mid_edge_finishes_edge_first() {
        let net = line(5, 100.0);
        let a = req(&net, 0, 4, 0, 10.0);
        let mut veh = Vehicle::new(0, 2, NodeId(2));
        veh.assign(vec![Stop::pickup(&a), Stop::dropoff(&a)], &[a], 0.0).unwrap();
        veh.advance(5.0, 0.0, &net, 10.0).unwrap();
        assert_eq!(veh.in_transit(), Some((NodeId(3), 50.0)));
        assert_eq!(veh.anchor(10.0), (NodeId(3), 5.0));
        // a stop behind the vehicle: it still reaches node 3 before turning
        let b = req(&net, 1, 1, 0, 10.0);
        let stops = vec![Stop::pickup(&b), Stop::pickup(&a), Stop::dropoff(&b), Stop::dropoff(&a)];
        veh.assign(stops, &[b], 5.0).unwrap();
        let ev = veh.advance(25.0, 5.0, &net, 10.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].request_id, b.id);
        assert_eq!(ev[0].time, 30.0); // 50 m to node 3, then 200 m back to node 1
        assert_eq!(veh.node(), NodeId(1));
    }

    #[test]
    fn release_pending_keeps_onboard() {
        let net = line(5, 100.0);
        let a = req(&net, 0, 0, 4, 10.0);
        let b = req(&net, 1, 3, 4, 10.0);
        let mut veh = Vehicle::new(0, 2, NodeId(0));
        let stops = vec![Stop::pickup(&a), Stop::pickup(&b), Stop::dropoff(&a), Stop::dropoff(&b)];
        veh.assign(stops, &[a, b], 0.0).unwrap();
        veh.advance(1.0, 0.0, &net, 10.0).unwrap();
        let released = veh.release_pending();
        assert_eq!(released.len(), 1);
        assert_eq!(released[0].request.id, b.id);
        assert_eq!(veh.schedule().copied().collect::<Vec<_>>(), vec![Stop::dropoff(&a)]);
    }

    #[test]
    fn fleet_placement() {
        let net = RoadNetwork::new(generate_grid(20, 20, 100.0).unwrap());
        let cfg = FleetConfig { vehicles: 5, capacity: 2, speed: 6.0, seed: 1 };
        let at7: Vec<Request> = (0..10).map(|i| req(&net, i, 7, 300, 6.0)).collect();
        let fleet = initialize_fleet(&cfg, &at7).unwrap();
        assert!(fleet.iter().all(|v| v.node() == NodeId(7) && v.is_idle()));
        assert_eq!(fleet.iter().map(|v| v.id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);

        let uniform: Vec<Request> = (0..400).map(|i| req(&net, i, i as u32, (i as u32 + 200) % 400, 6.0)).collect();
        let cfg = FleetConfig { vehicles: 200, capacity: 2, speed: 6.0, seed: 3 };
        let a = initialize_fleet(&cfg, &uniform).unwrap();
        let b = initialize_fleet(&cfg, &uniform).unwrap();
        assert_eq!(a, b);
        let distinct: std::collections::BTreeSet<_> = a.iter().map(|v| v.node()).collect();
        assert!(distinct.len() > 100);

        let zero = FleetConfig { vehicles: 0, ..cfg };
        assert!(initialize_fleet(&zero, &uniform).is_err());
        assert!(initialize_fleet(&cfg, &[]).is_err());
        assert_eq!(initialize_fleet_uniform(&cfg, net.graph()).unwrap().len(), 200);
    }

    #[test]
    fn event_log_format() {
        let e = Event {
            time: 12.5,
            vehicle_id: 3,
            kind: EventKind::PickedUp,
            request_id: RequestId(7),
            node: NodeId(42),
        };
        let mut buf = Vec::new();
        write_events(&mut buf, &[e]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "time,vehicle_id,event,request_id,node\n12.5,3,picked_up,7,42\n"
        );
    }
}
