//! Time-stepped simulation: admit requests, dispatch, move vehicles, expire
//! stale requests, and aggregate occupancy, service rate and service time.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::demand::{generate_poisson, subsample, DemandConfig, Request, RequestId};
use crate::error::{invalid, Error, Result};
use crate::fleet::{initialize_fleet, initialize_fleet_uniform, Event, EventKind, FleetConfig, Vehicle};
use crate::laws;
use crate::matching::{
    build_rtv, limit_candidates, preassign, solve_ilp, ConstraintSet, DispatchConfig, TIME_EPS,
};
use crate::network::RoadNetwork;

/// Width of pickup-time histogram bins (s).
pub const PICKUP_BIN: f64 = 60.0;

/// Salt separating the fleet placement stream from the demand stream.
const FLEET_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq)]
pub enum DemandSource {
    Synthetic(DemandConfig),
    /// Pre-built requests, sorted by request time.
    Requests(Vec<Request>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Matching interval Δ (s).
    pub step: f64,
    pub horizon: f64,
    /// Start of the measurement window; `None` means 10% of the horizon.
    pub warmup: Option<f64>,
    pub fleet: FleetConfig,
    pub constraints: ConstraintSet,
    pub dispatch: DispatchConfig,
    pub demand: DemandSource,
    pub seed: u64,
    /// Leave requests still open at the horizon out of the service rate.
    pub exclude_in_flight: bool,
    pub trace: bool,
    pub rtv_dump: bool,
}

impl SimConfig {
    pub fn new(fleet: FleetConfig, demand: DemandSource, horizon: f64, seed: u64) -> Self {
        let mut cfg = SimConfig {
            step: 2.0,
            horizon,
            warmup: None,
            fleet,
            constraints: ConstraintSet::default(),
            dispatch: DispatchConfig::default(),
            demand,
            seed,
            exclude_in_flight: true,
            trace: false,
            rtv_dump: false,
        };
        cfg.reseed(seed);
        cfg
    }

    /// Sets the run seed and derives the demand and fleet streams from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.fleet.seed = seed ^ FLEET_SEED_SALT;
        if let DemandSource::Synthetic(d) = &mut self.demand {
            d.seed = seed;
        }
    }

    pub fn warmup(&self) -> f64 {
        self.warmup.unwrap_or(0.1 * self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(invalid("step", format!("must be positive, got {}", self.step)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        let w = self.warmup();
        if !(w >= 0.0) || w >= self.horizon {
            return Err(invalid("warmup", format!("must lie in [0, horizon), got {w}")));
        }
        self.fleet.validate()?;
        self.constraints.validate()?;
        self.dispatch.validate()?;
        match &self.demand {
            DemandSource::Synthetic(d) => d.validate()?,
            DemandSource::Requests(rs) => {
                if rs.windows(2).any(|w| w[0].request_time > w[1].request_time) {
                    return Err(invalid("requests", "must be sorted by request time"));
                }
            }
        }
        Ok(())
    }

    /// Configured arrival rate; for request lists, count over horizon.
    pub fn arrival_rate(&self) -> f64 {
        match &self.demand {
            DemandSource::Synthetic(d) => d.arrival_rate,
            DemandSource::Requests(rs) => rs.iter().filter(|r| r.request_time < self.horizon).count() as f64 / self.horizon,
        }
    }

    /// Copy with the arrival rate changed; request lists are thinned by
    /// uniform subsampling, which cannot raise the rate.
    pub fn with_arrival_rate(&self, rate: f64) -> Result<SimConfig> {
        let mut cfg = self.clone();
        match &mut cfg.demand {
            DemandSource::Synthetic(d) => d.arrival_rate = rate,
            DemandSource::Requests(rs) => {
                let full = self.arrival_rate();
                if !(rate > 0.0) || rate > full * (1.0 + 1e-12) {
                    return Err(invalid(
                        "arrival_rate",
                        format!("{rate} is outside (0, {full}] for the ingested requests"),
                    ));
                }
                *rs = subsample(rs, (rate / full).min(1.0), self.seed)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStat {
    pub time: f64,
    /// Mean over vehicles of passengers onboard or scheduled for pickup.
    pub mean_scheduled: f64,
    pub mean_onboard: f64,
    pub waiting: usize,
    pub assigned: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Counts {
    /// Requests admitted over the whole run.
    pub requests: usize,
    pub served: usize,
    pub expired: usize,
    pub in_flight: usize,
    /// The same, restricted to requests admitted after warm-up.
    pub window_requests: usize,
    pub window_served: usize,
    pub window_expired: usize,
    pub window_in_flight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RtvRow {
    pub time: f64,
    pub vehicle: u32,
    pub trip: Vec<RequestId>,
    pub value: f64,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub vehicles: usize,
    pub capacity: usize,
    pub speed: f64,
    pub step: f64,
    pub horizon: f64,
    pub warmup: f64,
    /// Average scheduled passengers per vehicle, C̄.
    pub occupancy: f64,
    /// Served share of finished requests, R̄.
    pub service_rate: f64,
    /// No request finished in the window; `service_rate` is then 1.
    pub service_rate_undefined: bool,
    /// Mean assignment-to-dropoff time t̄ (s).
    pub mean_service_time: f64,
    pub mean_pickup_time: f64,
    pub max_pickup_time: f64,
    pub pickup_histogram: Histogram,
    /// Realized arrival rate in the window (1/s).
    pub arrival_rate: f64,
    /// Mean direct trip distance d̄ (m).
    pub mean_trip_distance: f64,
    /// λ·t̄/N
    pub system_load: f64,
    /// λ·d̄/(N·v)
    pub normalized_load: f64,
    pub counts: Counts,
    #[serde(skip)]
    pub series: Vec<StepStat>,
    #[serde(skip)]
    pub events: Vec<Event>,
    #[serde(skip)]
    pub rtv: Vec<RtvRow>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Record {
    admitted: bool,
    assigned_at: Option<f64>,
    picked_up_at: Option<f64>,
    dropped_at: Option<f64>,
    expired: bool,
}

fn vehicle_count_invariants(v: &Vehicle) -> Result<()> {
    if v.onboard_count() > v.capacity || v.scheduled_count() > v.capacity {
        return Err(Error::CapacityExceeded {
            vehicle: v.id,
            scheduled: v.scheduled_count(),
            new: 0,
            capacity: v.capacity,
        });
    }
    Ok(())
}

/// Runs one simulation.
pub fn run(cfg: &SimConfig, net: &RoadNetwork) -> Result<SimReport> {
    cfg.validate()?;
    let speed = cfg.fleet.speed;
    let requests: Vec<Request> = match &cfg.demand {
        DemandSource::Synthetic(d) => generate_poisson(d, net, cfg.step, speed)?,
        DemandSource::Requests(rs) => rs.clone(),
    };
    let mut vehicles = if requests.is_empty() {
        initialize_fleet_uniform(&cfg.fleet, net.graph())?
    } else {
        initialize_fleet(&cfg.fleet, &requests)?
    };
    let index: BTreeMap<RequestId, usize> = requests.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    if index.len() != requests.len() {
        return Err(invalid("requests", "request ids must be unique"));
    }
    let mut records = vec![Record::default(); requests.len()];
    let mut waiting: BTreeMap<RequestId, Request> = BTreeMap::new();
    let mut series = Vec::new();
    let mut events = Vec::new();
    let mut rtv_rows = Vec::new();
    let mut next = 0usize;
    let n_vehicles = vehicles.len() as f64;
    let steps = (cfg.horizon / cfg.step).ceil() as u64;

    for k in 0..steps {
        let now = k as f64 * cfg.step;
        if now >= cfg.horizon {
            break;
        }
        while next < requests.len() && requests[next].request_time <= now + TIME_EPS {
            let r = requests[next];
            records[next].admitted = true;
            waiting.insert(r.id, r);
            next += 1;
        }
        waiting.retain(|id, r| {
            let stale = now - r.request_time > cfg.constraints.max_wait_time + TIME_EPS;
            if stale {
                records[index[id]].expired = true;
            }
            !stale
        });
        if cfg.dispatch.allow_reassignment {
            for v in vehicles.iter_mut() {
                for rider in v.release_pending() {
                    records[index[&rider.request.id]].assigned_at = None;
                    waiting.insert(rider.request.id, rider.request);
                }
            }
        }

        let mut assigned = 0;
        if !waiting.is_empty() {
            let pool: Vec<Request> = waiting.values().copied().collect();
            let candidates = preassign(&pool, &vehicles, &cfg.constraints, net, speed);
            let per_vehicle = limit_candidates(&candidates, &waiting, &cfg.constraints, &cfg.dispatch, now);
            let graph = build_rtv(&per_vehicle, &vehicles, &waiting, &cfg.constraints, &cfg.dispatch, net, speed, now)?;
            let solution = solve_ilp(&graph);
            for &i in &solution.chosen {
                let edge = &graph.edges[i];
                let trip: Vec<Request> = edge.trip.iter().map(|id| waiting[id]).collect();
                vehicles[edge.vehicle as usize].assign(edge.route.stops.clone(), &trip, now)?;
                for r in &trip {
                    waiting.remove(&r.id);
                    records[index[&r.id]].assigned_at = Some(now);
                }
                assigned += trip.len();
            }
            if cfg.rtv_dump {
                let mut chosen = solution.chosen.iter().peekable();
                for (i, e) in graph.edges.iter().enumerate() {
                    let hit = chosen.peek() == Some(&&i);
                    if hit {
                        chosen.next();
                    }
                    rtv_rows.push(RtvRow { time: now, vehicle: e.vehicle, trip: e.trip.clone(), value: e.value, chosen: hit });
                }
            }
        }

        let mut scheduled = 0usize;
        let mut onboard = 0usize;
        for v in vehicles.iter_mut() {
            for e in v.advance(cfg.step, now, net, speed)? {
                let rec = &mut records[index[&e.request_id]];
                match e.kind {
                    EventKind::PickedUp => rec.picked_up_at = Some(e.time),
                    EventKind::DroppedOff => rec.dropped_at = Some(e.time),
                }
                if cfg.trace {
                    events.push(e);
                }
            }
            vehicle_count_invariants(v)?;
            scheduled += v.scheduled_count();
            onboard += v.onboard_count();
        }
        series.push(StepStat {
            time: now,
            mean_scheduled: scheduled as f64 / n_vehicles,
            mean_onboard: onboard as f64 / n_vehicles,
            waiting: waiting.len(),
            assigned,
        });
    }

    summarize(cfg, &requests, &records, series, events, rtv_rows)
}

fn summarize(
    cfg: &SimConfig,
    requests: &[Request],
    records: &[Record],
    series: Vec<StepStat>,
    events: Vec<Event>,
    rtv: Vec<RtvRow>,
) -> Result<SimReport> {
    let warmup = cfg.warmup();
    let n = cfg.fleet.vehicles as f64;
    let mut counts = Counts::default();
    let mut service_times = Vec::new();
    let mut pickups = Vec::new();
    let mut distance_sum = 0.0;
    for (r, rec) in requests.iter().zip(records) {
        if !rec.admitted {
            continue;
        }
        let served = rec.dropped_at.is_some();
        if (served && rec.expired) || (rec.expired && rec.assigned_at.is_some()) {
            return Err(Error::Invariant(format!("request {} both served and expired", r.id)));
        }
        counts.requests += 1;
        let in_window = r.request_time >= warmup - TIME_EPS;
        match (served, rec.expired) {
            (true, _) => counts.served += 1,
            (_, true) => counts.expired += 1,
            _ => counts.in_flight += 1,
        }
        if !in_window {
            continue;
        }
        counts.window_requests += 1;
        distance_sum += r.direct_distance;
        if let Some(p) = rec.picked_up_at {
            pickups.push(p - r.request_time);
        }
        match (rec.dropped_at, rec.expired) {
            (Some(d), _) => {
                counts.window_served += 1;
                let a = rec
                    .assigned_at
                    .ok_or_else(|| Error::Invariant(format!("request {} served without assignment", r.id)))?;
                service_times.push(d - a);
            }
            (None, true) => counts.window_expired += 1,
            _ => counts.window_in_flight += 1,
        }
    }
    if counts.served + counts.expired + counts.in_flight != counts.requests {
        return Err(Error::Invariant("request conservation violated".into()));
    }

    let window: Vec<&StepStat> = series.iter().filter(|s| s.time >= warmup - TIME_EPS).collect();
    let occupancy = if window.is_empty() {
        0.0
    } else {
        window.iter().map(|s| s.mean_scheduled).sum::<f64>() / window.len() as f64
    };
    let finished = if cfg.exclude_in_flight {
        counts.window_served + counts.window_expired
    } else {
        counts.window_requests
    };
    let (service_rate, service_rate_undefined) = if finished == 0 {
        (1.0, true)
    } else {
        (counts.window_served as f64 / finished as f64, false)
    };
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let mean_service_time = mean(&service_times);
    let mean_pickup_time = mean(&pickups);
    let max_pickup_time = pickups.iter().copied().fold(0.0, f64::max);
    let mut hist = Vec::new();
    for p in &pickups {
        let bin = (p.max(0.0) / PICKUP_BIN).floor() as usize;
        if hist.len() <= bin {
            hist.resize(bin + 1, 0u64);
        }
        hist[bin] += 1;
    }
    let arrival_rate = counts.window_requests as f64 / (cfg.horizon - warmup);
    let mean_trip_distance = if counts.window_requests == 0 { 0.0 } else { distance_sum / counts.window_requests as f64 };
    let system_load = arrival_rate * mean_service_time / n;
    let normalized_load = arrival_rate * mean_trip_distance / (n * cfg.fleet.speed);

    let c = cfg.fleet.capacity as f64;
    if !(0.0..=c + 1e-9).contains(&occupancy) || !(0.0..=1.0).contains(&service_rate) {
        return Err(Error::Invariant(format!("report out of range: C̄={occupancy}, R̄={service_rate}")));
    }
    Ok(SimReport {
        vehicles: cfg.fleet.vehicles,
        capacity: cfg.fleet.capacity,
        speed: cfg.fleet.speed,
        step: cfg.step,
        horizon: cfg.horizon,
        warmup,
        occupancy,
        service_rate,
        service_rate_undefined,
        mean_service_time,
        mean_pickup_time,
        max_pickup_time,
        pickup_histogram: Histogram { bin_width: PICKUP_BIN, counts: hist },
        arrival_rate,
        mean_trip_distance,
        system_load,
        normalized_load,
        counts,
        series,
        events,
        rtv,
    })
}

impl SimReport {
    /// The report's values in the form used by the scaling-law fits.
    pub fn sweep_point(&self) -> laws::SweepPoint {
        laws::SweepPoint {
            fleet_size: self.vehicles,
            capacity: self.capacity,
            load: self.system_load,
            occupancy: self.occupancy,
            service_rate: self.service_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxes {
    pub arrival_rates: Vec<f64>,
    pub capacities: Vec<usize>,
    pub fleet_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub arrival_rate: f64,
    pub vehicles: usize,
    pub capacity: usize,
    pub seed: u64,
    pub result: std::result::Result<SimReport, String>,
}

/// The run configurations of a sweep: capacities outermost, then fleet
/// sizes, then arrival rates; run `i` uses seed `base.seed ^ i`.
pub fn sweep_configs(base: &SimConfig, axes: &SweepAxes) -> Result<Vec<(SweepRow, Option<SimConfig>)>> {
    if axes.arrival_rates.is_empty() || axes.capacities.is_empty() || axes.fleet_sizes.is_empty() {
        return Err(Error::Empty("sweep axis"));
    }
    let mut out = Vec::new();
    for &capacity in &axes.capacities {
        for &vehicles in &axes.fleet_sizes {
            for &rate in &axes.arrival_rates {
                let index = out.len();
                let seed = base.seed ^ index as u64;
                let mut row = SweepRow {
                    index,
                    arrival_rate: rate,
                    vehicles,
                    capacity,
                    seed,
                    result: Err(String::new()),
                };
                let cfg = base.with_arrival_rate(rate).map(|mut cfg| {
                    cfg.fleet.capacity = capacity;
                    cfg.fleet.vehicles = vehicles;
                    cfg.reseed(seed);
                    cfg
                });
                match cfg {
                    Ok(cfg) => out.push((row, Some(cfg))),
                    Err(e) => {
                        row.result = Err(e.to_string());
                        out.push((row, None));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Runs the cross product of the axes on `threads` workers. A failing run
/// is recorded in its row and does not stop the others.
pub fn sweep(base: &SimConfig, axes: &SweepAxes, net: &RoadNetwork, threads: usize) -> Result<Vec<SweepRow>> {
    let jobs = sweep_configs(base, axes)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    Ok(pool.install(|| {
        jobs.into_par_iter()
            .map(|(mut row, cfg)| {
                if let Some(cfg) = cfg {
                    row.result = run(&cfg, net).map_err(|e| e.to_string());
                    if let Err(e) = &row.result {
                        log::warn!("run {} failed: {e}", row.index);
                    }
                }
                row
            })
            .collect()
    }))
}

/// Finds the arrival rate at which the measured load `λ·t̄/N` reaches
/// `target`, by fixed-point iteration `λ ← target·N/t̄` over pilot runs.
pub fn tune_arrival_rate(base: &SimConfig, net: &RoadNetwork, target: f64, iterations: usize) -> Result<f64> {
    if !(target > 0.0) {
        return Err(invalid("target", format!("must be positive, got {target}")));
    }
    let n = base.fleet.vehicles as f64;
    // first guess: direct ride plus a short pickup
    let probe = match &base.demand {
        DemandSource::Synthetic(d) => {
            let mut d = d.clone();
            d.arrival_rate = 1.0;
            d.horizon = d.horizon.min(600.0);
            generate_poisson(&d, net, base.step, base.fleet.speed)?
        }
        DemandSource::Requests(rs) => rs.clone(),
    };
    let d_bar = crate::demand::mean_direct_distance(&probe)?;
    let mut t_bar = d_bar / base.fleet.speed + 120.0;
    let mut rate = target * n / t_bar;
    for _ in 0..iterations {
        let report = run(&base.with_arrival_rate(rate)?, net)?;
        if report.counts.window_served == 0 {
            break;
        }
        t_bar = report.mean_service_time;
        let measured = report.system_load;
        // the realized rate differs from the configured one by noise only
        rate *= target / measured.max(1e-9);
        log::debug!("tune: rate {rate:.5} t̄ {t_bar:.1} u {measured:.3}");
    }
    Ok(rate)
}

/// Sweep over target loads instead of arrival rates: each run's rate is
/// tuned with [`tune_arrival_rate`] before the measured run, and the row
/// records the tuned rate. Ordering and seeds follow [`sweep_configs`].
pub fn tuned_sweep(
    base: &SimConfig,
    capacities: &[usize],
    fleet_sizes: &[usize],
    target_loads: &[f64],
    iterations: usize,
    net: &RoadNetwork,
    threads: usize,
) -> Result<Vec<SweepRow>> {
    if target_loads.is_empty() || capacities.is_empty() || fleet_sizes.is_empty() {
        return Err(Error::Empty("sweep axis"));
    }
    let mut jobs = Vec::new();
    for &capacity in capacities {
        for &vehicles in fleet_sizes {
            for &target in target_loads {
                let index = jobs.len();
                let mut cfg = base.clone();
                cfg.fleet.capacity = capacity;
                cfg.fleet.vehicles = vehicles;
                cfg.reseed(base.seed ^ index as u64);
                jobs.push((index, target, cfg));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    Ok(pool.install(|| {
        jobs.into_par_iter()
            .map(|(index, target, cfg)| {
                let outcome = tune_arrival_rate(&cfg, net, target, iterations)
                    .and_then(|rate| Ok((rate, run(&cfg.with_arrival_rate(rate)?, net)?)));
                let (arrival_rate, result) = match outcome {
                    Ok((rate, report)) => (rate, Ok(report)),
                    Err(e) => {
                        log::warn!("run {index} failed: {e}");
                        (f64::NAN, Err(e.to_string()))
                    }
                };
                SweepRow {
                    index,
                    arrival_rate,
                    vehicles: cfg.fleet.vehicles,
                    capacity: cfg.fleet.capacity,
                    seed: cfg.seed,
                    result,
                }
            })
            .collect()
    }))
}

#[derive(Serialize)]
struct TableRow<'a> {
    index: usize,
    vehicles: usize,
    capacity: usize,
    arrival_rate: f64,
    seed: u64,
    status: &'a str,
    occupancy: Option<f64>,
    service_rate: Option<f64>,
    mean_service_time: Option<f64>,
    mean_pickup_time: Option<f64>,
    system_load: Option<f64>,
    normalized_load: Option<f64>,
    mean_trip_distance: Option<f64>,
    requests: Option<usize>,
    served: Option<usize>,
    expired: Option<usize>,
    error: &'a str,
}

/// Writes one CSV line per sweep row; failed runs keep their row with
/// empty measurements and the error message.
pub fn write_sweep_table<W: std::io::Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        let r = row.result.as_ref().ok();
        w.serialize(TableRow {
            index: row.index,
            vehicles: row.vehicles,
            capacity: row.capacity,
            arrival_rate: row.arrival_rate,
            seed: row.seed,
            status: if r.is_some() { "ok" } else { "failed" },
            occupancy: r.map(|r| r.occupancy),
            service_rate: r.map(|r| r.service_rate),
            mean_service_time: r.map(|r| r.mean_service_time),
            mean_pickup_time: r.map(|r| r.mean_pickup_time),
            system_load: r.map(|r| r.system_load),
            normalized_load: r.map(|r| r.normalized_load),
            mean_trip_distance: r.map(|r| r.mean_trip_distance),
            requests: r.map(|r| r.counts.window_requests),
            served: r.map(|r| r.counts.window_served),
            expired: r.map(|r| r.counts.window_expired),
            error: row.result.as_ref().err().map_or("", String::as_str),
        })?;
    }
    w.flush()?;
    Ok(())
}
