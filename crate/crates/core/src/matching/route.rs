use std::collections::BTreeMap;

use serde::Serialize;

use super::{ConstraintSet, RoutingMode, AUTO_EXHAUSTIVE_STOPS, TIME_EPS};
use crate::demand::{Request, RequestId};
use crate::error::{Error, Result};
use crate::fleet::{Stop, StopKind, Vehicle};
use crate::network::{NodeId, RoadNetwork};

/// Hard cap on stops for exhaustive enumeration.
pub const MAX_EXHAUSTIVE_STOPS: usize = 10;

/// Per-request timing along a route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    /// Pickup instant minus request time (s).
    pub pickup_time: f64,
    /// In-vehicle time minus direct travel time (s).
    pub detour_time: f64,
    pub detour_ratio: f64,
    pub pickup_at: f64,
    pub dropoff_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleRoute {
    pub stops: Vec<Stop>,
    /// Sum of pickup and detour delay over every request on the route (s).
    pub total_cost: f64,
    pub per_request: BTreeMap<RequestId, Timing>,
}

#[derive(Debug, Clone, Copy)]
struct Item {
    request: Request,
    picked_up_at: Option<f64>,
}

/// Everything needed to plan a vehicle's route: where and when planning
/// starts, and the passengers to serve.
#[derive(Debug, Clone)]
pub struct PlanContext {
    pub vehicle: u32,
    pub capacity: usize,
    pub start: NodeId,
    pub start_time: f64,
    items: Vec<Item>,
}

impl PlanContext {
    /// Riders already on `vehicle` plus `new` requests, planned from the
    /// vehicle's anchor node.
    pub fn new(vehicle: &Vehicle, new: &[Request], now: f64, speed: f64) -> Result<Self> {
        let (start, offset) = vehicle.anchor(speed);
        let mut items: Vec<Item> = vehicle
            .riders()
            .map(|r| Item { request: r.request, picked_up_at: r.picked_up_at })
            .collect();
        items.extend(new.iter().map(|r| Item { request: *r, picked_up_at: None }));
        items.sort_by_key(|i| i.request.id);
        if items.windows(2).any(|w| w[0].request.id == w[1].request.id) {
            return Err(Error::Invariant(format!("vehicle {}: duplicate request in plan", vehicle.id)));
        }
        if items.len() > vehicle.capacity {
            return Err(Error::CapacityExceeded {
                vehicle: vehicle.id,
                scheduled: vehicle.scheduled_count(),
                new: new.len(),
                capacity: vehicle.capacity,
            });
        }
        Ok(PlanContext { vehicle: vehicle.id, capacity: vehicle.capacity, start, start_time: now + offset, items })
    }

    pub fn stop_count(&self) -> usize {
        self.items.iter().map(|i| if i.picked_up_at.is_some() { 1 } else { 2 }).sum()
    }
}

/// Checks a concrete stop order against precedence, capacity and the
/// passenger constraints; `None` when any check fails.
pub fn evaluate_route(
    ctx: &PlanContext,
    stops: &[Stop],
    cs: &ConstraintSet,
    net: &RoadNetwork,
    speed: f64,
) -> Option<FeasibleRoute> {
    if stops.len() != ctx.stop_count() {
        return None;
    }
    let mut pickup_at: Vec<Option<f64>> = ctx.items.iter().map(|i| i.picked_up_at).collect();
    let mut done = vec![false; ctx.items.len()];
    let mut onboard = pickup_at.iter().filter(|p| p.is_some()).count();
    let mut per_request = BTreeMap::new();
    let mut total_cost = 0.0;
    let (mut node, mut t) = (ctx.start, ctx.start_time);
    for s in stops {
        let i = ctx.items.binary_search_by_key(&s.request_id, |it| it.request.id).ok()?;
        let req = &ctx.items[i].request;
        t += net.distance(node, s.node) / speed;
        node = s.node;
        match s.kind {
            StopKind::Pickup => {
                if s.node != req.origin || pickup_at[i].is_some() {
                    return None;
                }
                if t - req.request_time > cs.max_pickup_time + TIME_EPS {
                    return None;
                }
                onboard += 1;
                if onboard > ctx.capacity {
                    return None;
                }
                pickup_at[i] = Some(t);
            }
            StopKind::Dropoff => {
                let p = pickup_at[i]?;
                if s.node != req.destination || done[i] {
                    return None;
                }
                let detour_time = (t - p) - req.direct_time;
                let detour_ratio = detour_time / req.direct_time;
                if detour_ratio > cs.max_detour_ratio + TIME_EPS / req.direct_time {
                    return None;
                }
                onboard -= 1;
                done[i] = true;
                let pickup_time = p - req.request_time;
                total_cost += pickup_time + detour_time;
                per_request.insert(
                    req.id,
                    Timing { pickup_time, detour_time, detour_ratio, pickup_at: p, dropoff_at: t },
                );
            }
        }
    }
    Some(FeasibleRoute { stops: stops.to_vec(), total_cost, per_request })
}

struct Search<'a> {
    ctx: &'a PlanContext,
    cs: &'a ConstraintSet,
    net: &'a RoadNetwork,
    speed: f64,
    /// 0 = awaiting pickup, 1 = onboard, 2 = delivered
    status: Vec<u8>,
    pickup_at: Vec<f64>,
    seq: Vec<Stop>,
    best_cost: f64,
    best: Option<Vec<Stop>>,
}

impl Search<'_> {
    fn run(&mut self, node: NodeId, t: f64, cost: f64, remaining: usize) {
        if remaining == 0 {
            if cost < self.best_cost - TIME_EPS || self.best.is_none() {
                self.best_cost = cost;
                self.best = Some(self.seq.clone());
            }
            return;
        }
        // every open request must still be servable from here; its delay
        // so far is a lower bound on its final delay
        let mut bound = cost;
        for (i, it) in self.ctx.items.iter().enumerate() {
            let r = &it.request;
            match self.status[i] {
                0 => {
                    let wait = t + self.net.distance(node, r.origin) / self.speed - r.request_time;
                    if wait > self.cs.max_pickup_time + TIME_EPS {
                        return;
                    }
                    bound += wait;
                }
                1 => {
                    let ride = t + self.net.distance(node, r.destination) / self.speed - self.pickup_at[i];
                    if ride - r.direct_time > self.cs.max_detour_ratio * r.direct_time + TIME_EPS {
                        return;
                    }
                    bound += ride - r.direct_time;
                }
                _ => {}
            }
        }
        if self.best.is_some() && bound >= self.best_cost - TIME_EPS {
            return;
        }
        for i in 0..self.ctx.items.len() {
            let r = self.ctx.items[i].request;
            match self.status[i] {
                0 => {
                    let t2 = t + self.net.distance(node, r.origin) / self.speed;
                    self.status[i] = 1;
                    self.pickup_at[i] = t2;
                    self.seq.push(Stop::pickup(&r));
                    self.run(r.origin, t2, cost + (t2 - r.request_time), remaining - 1);
                    self.seq.pop();
                    self.status[i] = 0;
                }
                1 => {
                    let t2 = t + self.net.distance(node, r.destination) / self.speed;
                    let detour = (t2 - self.pickup_at[i]) - r.direct_time;
                    self.status[i] = 2;
                    self.seq.push(Stop::dropoff(&r));
                    self.run(r.destination, t2, cost + detour, remaining - 1);
                    self.seq.pop();
                    self.status[i] = 1;
                }
                _ => {}
            }
        }
    }
}

/// Minimum-cost stop order over all orders with pickups before dropoffs,
/// or `None` when no order satisfies the constraints.
pub fn route_exhaustive(
    ctx: &PlanContext,
    cs: &ConstraintSet,
    net: &RoadNetwork,
    speed: f64,
) -> Result<Option<FeasibleRoute>> {
    let stops = ctx.stop_count();
    if stops > MAX_EXHAUSTIVE_STOPS {
        return Err(Error::TooManyStops { stops, cap: MAX_EXHAUSTIVE_STOPS });
    }
    let mut search = Search {
        ctx,
        cs,
        net,
        speed,
        status: ctx.items.iter().map(|i| if i.picked_up_at.is_some() { 1 } else { 0 }).collect(),
        pickup_at: ctx.items.iter().map(|i| i.picked_up_at.unwrap_or(0.0)).collect(),
        seq: Vec::with_capacity(stops),
        best_cost: f64::INFINITY,
        best: None,
    };
    let base: f64 = ctx
        .items
        .iter()
        .filter_map(|i| i.picked_up_at.map(|p| p - i.request.request_time))
        .sum();
    search.run(ctx.start, ctx.start_time, base, stops);
    Ok(search.best.and_then(|seq| evaluate_route(ctx, &seq, cs, net, speed)))
}

/// Greedy order: always drive to the nearest stop that may be visited next,
/// then check the constraints on that single order.
pub fn route_nn(ctx: &PlanContext, cs: &ConstraintSet, net: &RoadNetwork, speed: f64) -> Option<FeasibleRoute> {
    let mut status: Vec<u8> = ctx.items.iter().map(|i| if i.picked_up_at.is_some() { 1 } else { 0 }).collect();
    let mut node = ctx.start;
    let mut seq = Vec::with_capacity(ctx.stop_count());
    loop {
        let mut pick: Option<(f64, usize)> = None;
        for (i, it) in ctx.items.iter().enumerate() {
            let target = match status[i] {
                0 => it.request.origin,
                1 => it.request.destination,
                _ => continue,
            };
            let d = net.distance(node, target);
            if pick.is_none_or(|(bd, _)| d < bd) {
                pick = Some((d, i));
            }
        }
        let Some((_, i)) = pick else { break };
        let r = &ctx.items[i].request;
        let stop = if status[i] == 0 { Stop::pickup(r) } else { Stop::dropoff(r) };
        status[i] += 1;
        node = stop.node;
        seq.push(stop);
    }
    evaluate_route(ctx, &seq, cs, net, speed)
}

pub fn route_with_mode(
    ctx: &PlanContext,
    mode: RoutingMode,
    cs: &ConstraintSet,
    net: &RoadNetwork,
    speed: f64,
) -> Result<Option<FeasibleRoute>> {
    match mode {
        RoutingMode::Exhaustive => route_exhaustive(ctx, cs, net, speed),
        RoutingMode::NearestNeighbor => Ok(route_nn(ctx, cs, net, speed)),
        RoutingMode::Auto if ctx.stop_count() <= AUTO_EXHAUSTIVE_STOPS => route_exhaustive(ctx, cs, net, speed),
        RoutingMode::Auto => Ok(route_nn(ctx, cs, net, speed)),
    }
}
