use std::collections::BTreeMap;

use serde::Serialize;

use super::rtv::RtvGraph;
use crate::demand::RequestId;

const VALUE_EPS: f64 = 1e-9;

/// Chosen edges of an [`RtvGraph`]: at most one per vehicle, every request
/// in at most one.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AssignmentSolution {
    /// Indices into the graph's edge list, increasing.
    pub chosen: Vec<usize>,
    pub objective: f64,
}

struct Component {
    /// Per vehicle, its edges in canonical order: (edge index, value, local request ids).
    vehicles: Vec<Vec<(usize, f64, Vec<usize>)>>,
    requests: usize,
}

struct Solver<'a> {
    comp: &'a Component,
    /// `share[i][r]`: best value per request of any edge containing `r`
    /// among vehicles `i..`.
    share: Vec<Vec<f64>>,
    used: Vec<bool>,
    sel: Vec<usize>,
    best: f64,
    best_sel: Vec<usize>,
}

impl Solver<'_> {
    fn compatible(&self, reqs: &[usize]) -> bool {
        reqs.iter().all(|&r| !self.used[r])
    }

    fn bound(&self, i: usize) -> f64 {
        let by_vehicle: f64 = self.comp.vehicles[i..]
            .iter()
            .map(|edges| edges.iter().find(|(_, _, rs)| self.compatible(rs)).map_or(0.0, |e| e.1))
            .sum();
        let by_request: f64 = self.share[i]
            .iter()
            .zip(&self.used)
            .filter(|(_, used)| !**used)
            .map(|(s, _)| *s)
            .sum();
        by_vehicle.min(by_request)
    }

    fn run(&mut self, i: usize, cur: f64) {
        if i == self.comp.vehicles.len() {
            if cur > self.best + VALUE_EPS {
                self.best = cur;
                self.best_sel = self.sel.clone();
            }
            return;
        }
        if cur + self.bound(i) <= self.best + VALUE_EPS {
            return;
        }
        let comp = self.comp;
        for (idx, value, reqs) in &comp.vehicles[i] {
            if !self.compatible(reqs) {
                continue;
            }
            for &r in reqs {
                self.used[r] = true;
            }
            self.sel.push(*idx);
            self.run(i + 1, cur + value);
            self.sel.pop();
            for &r in reqs {
                self.used[r] = false;
            }
        }
        self.run(i + 1, cur);
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Exact maximum-value assignment by depth-first branch and bound.
///
/// Vehicles linked through shared requests are solved together, others
/// independently. Within a group, vehicles are branched in id order and
/// each vehicle's edges in descending value before the empty choice. The
/// bound is the smaller of two admissible estimates: the best compatible
/// edge of every remaining vehicle, and the best per-request share of value
/// over every uncovered request. Among optimal assignments the first one in
/// this search order is returned. Edges of non-positive value never improve
/// the objective and are ignored.
pub fn solve_ilp(rtv: &RtvGraph) -> AssignmentSolution {
    let mut order: Vec<usize> = (0..rtv.edges.len()).filter(|&i| rtv.edges[i].value > VALUE_EPS).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&rtv.edges[a], &rtv.edges[b]);
        ea.vehicle
            .cmp(&eb.vehicle)
            .then(eb.value.total_cmp(&ea.value))
            .then_with(|| ea.trip.cmp(&eb.trip))
            .then(a.cmp(&b))
    });
    if order.is_empty() {
        return AssignmentSolution::default();
    }

    let mut vehicle_ix: BTreeMap<u32, usize> = BTreeMap::new();
    let mut request_ix: BTreeMap<RequestId, usize> = BTreeMap::new();
    for &e in &order {
        let edge = &rtv.edges[e];
        let next = vehicle_ix.len();
        vehicle_ix.entry(edge.vehicle).or_insert(next);
        for r in &edge.trip {
            let next = request_ix.len();
            request_ix.entry(*r).or_insert(next);
        }
    }
    // union vehicles with the requests they can serve
    let nv = vehicle_ix.len();
    let mut parent: Vec<usize> = (0..nv + request_ix.len()).collect();
    for &e in &order {
        let edge = &rtv.edges[e];
        let v = find(&mut parent, vehicle_ix[&edge.vehicle]);
        for r in &edge.trip {
            let x = find(&mut parent, nv + request_ix[r]);
            if x != v {
                parent[x] = v;
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<Vec<(usize, f64, Vec<usize>)>>, BTreeMap<usize, usize>)> = BTreeMap::new();
    let mut current: Option<(u32, usize)> = None;
    for &e in &order {
        let edge = &rtv.edges[e];
        let vi = vehicle_ix[&edge.vehicle];
        let root = find(&mut parent, vi);
        let (vehicles, local) = groups.entry(root).or_default();
        if current != Some((edge.vehicle, root)) {
            vehicles.push(Vec::new());
            current = Some((edge.vehicle, root));
        }
        let reqs = edge
            .trip
            .iter()
            .map(|r| {
                let g = request_ix[r];
                let next = local.len();
                *local.entry(g).or_insert(next)
            })
            .collect();
        vehicles.last_mut().expect("pushed above").push((e, edge.value, reqs));
    }

    let mut chosen = Vec::new();
    let mut objective = 0.0;
    for (_, (vehicles, local)) in groups {
        let comp = Component { vehicles, requests: local.len() };
        let nv = comp.vehicles.len();
        let mut share = vec![vec![0.0f64; comp.requests]; nv + 1];
        for i in (0..nv).rev() {
            share[i] = share[i + 1].clone();
            for (_, value, reqs) in &comp.vehicles[i] {
                let per = value / reqs.len() as f64;
                for &r in reqs {
                    share[i][r] = share[i][r].max(per);
                }
            }
        }
        let mut solver = Solver {
            comp: &comp,
            share,
            used: vec![false; comp.requests],
            sel: Vec::new(),
            best: 0.0,
            best_sel: Vec::new(),
        };
        solver.run(0, 0.0);
        objective += solver.best;
        chosen.extend(solver.best_sel);
    }
    chosen.sort_unstable();
    AssignmentSolution { chosen, objective }
}

/// Takes edges by descending value whenever vehicle and requests are free.
pub fn greedy_assignment(rtv: &RtvGraph) -> AssignmentSolution {
    let mut order: Vec<usize> = (0..rtv.edges.len()).filter(|&i| rtv.edges[i].value > VALUE_EPS).collect();
    order.sort_by(|&a, &b| rtv.edges[b].value.total_cmp(&rtv.edges[a].value).then(a.cmp(&b)));
    let mut vehicles = std::collections::BTreeSet::new();
    let mut requests = std::collections::BTreeSet::new();
    let mut sol = AssignmentSolution::default();
    for i in order {
        let e = &rtv.edges[i];
        if vehicles.contains(&e.vehicle) || e.trip.iter().any(|r| requests.contains(r)) {
            continue;
        }
        vehicles.insert(e.vehicle);
        requests.extend(e.trip.iter().copied());
        sol.chosen.push(i);
        sol.objective += e.value;
    }
    sol.chosen.sort_unstable();
    sol
}
