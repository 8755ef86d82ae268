use ridepool::demand::{DemandConfig, OdDistribution, Request, RequestId};
use ridepool::engine::{run, sweep, tune_arrival_rate, write_sweep_table, DemandSource, SimConfig, SimReport, SweepAxes};
use ridepool::fleet::{EventKind, FleetConfig};
use ridepool::network::{generate_grid, NodeId, RoadNetwork};

fn grid(n: usize) -> RoadNetwork {
    RoadNetwork::new(generate_grid(n, n, 100.0).unwrap())
}

fn config(vehicles: usize, capacity: usize, rate: f64, horizon: f64, seed: u64) -> SimConfig {
    let demand = DemandConfig { arrival_rate: rate, horizon, od: OdDistribution::Uniform, seed };
    SimConfig::new(
        FleetConfig { vehicles, capacity, speed: 6.0, seed },
        DemandSource::Synthetic(demand),
        horizon,
        seed,
    )
}

fn check_invariants(r: &SimReport, cfg: &SimConfig) {
    let c = &r.counts;
    assert_eq!(c.requests, c.served + c.expired + c.in_flight);
    assert_eq!(c.window_requests, c.window_served + c.window_expired + c.window_in_flight);
    assert!((0.0..=1.0).contains(&r.service_rate));
    assert!(r.occupancy >= 0.0 && r.occupancy <= cfg.fleet.capacity as f64 + 1e-9);
    assert!(r.max_pickup_time <= cfg.constraints.max_pickup_time + cfg.step + 1e-6);
    assert!(r.max_pickup_time <= cfg.constraints.matching_radius_time + cfg.step + 1e-6);
    for s in &r.series {
        assert!(s.mean_onboard <= s.mean_scheduled + 1e-12);
        assert!(s.mean_scheduled <= cfg.fleet.capacity as f64 + 1e-12);
    }
}

#[test]
fn identical_seeds_give_identical_reports() {
    let net = grid(12);
    let mut cfg = config(15, 3, 0.12, 2400.0, 42);
    cfg.trace = true;
    let a = run(&cfg, &net).unwrap();
    let b = run(&cfg, &net).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let mut other = cfg.clone();
    other.reseed(43);
    assert_ne!(format!("{a:?}"), format!("{:?}", run(&other, &net).unwrap()));
}

#[test]
fn counts_and_ranges_hold_across_loads() {
    let net = grid(12);
    for (i, rate) in [0.01, 0.05, 0.2, 0.6].into_iter().enumerate() {
        let cfg = config(12, 2 + i, rate, 2400.0, i as u64);
        let r = run(&cfg, &net).unwrap();
        check_invariants(&r, &cfg);
    }
}

#[test]
fn trace_is_consistent_with_counts() {
    let net = grid(10);
    let mut cfg = config(10, 3, 0.1, 1800.0, 3);
    cfg.trace = true;
    let r = run(&cfg, &net).unwrap();
    let drops = r.events.iter().filter(|e| e.kind == EventKind::DroppedOff).count();
    let picks = r.events.iter().filter(|e| e.kind == EventKind::PickedUp).count();
    assert_eq!(drops, r.counts.served);
    assert!(picks >= drops);
    for e in r.events.iter().filter(|e| e.kind == EventKind::DroppedOff) {
        let p = r.events.iter().find(|p| p.request_id == e.request_id && p.kind == EventKind::PickedUp);
        assert!(p.is_some_and(|p| p.time <= e.time && p.vehicle_id == e.vehicle_id));
    }
}

#[test]
fn light_load_serves_nearly_everyone() {
    let net = grid(20);
    let base = config(50, 2, 0.1, 7200.0, 11);
    let rate = tune_arrival_rate(&base, &net, 0.5, 3).unwrap();
    let r = run(&base.with_arrival_rate(rate).unwrap(), &net).unwrap();
    assert!((r.system_load - 0.5).abs() < 0.1, "u = {}", r.system_load);
    assert!(r.service_rate >= 0.97, "R = {}", r.service_rate);
}

#[test]
fn occupancy_rises_with_demand_and_obeys_littles_law() {
    let net = grid(15);
    let mut last = -1.0;
    for rate in [0.02, 0.05, 0.1, 0.2, 0.4] {
        let cfg = config(30, 4, rate, 5400.0, 5);
        let r = run(&cfg, &net).unwrap();
        check_invariants(&r, &cfg);
        assert!(r.occupancy > last, "occupancy {} after {last} at rate {rate}", r.occupancy);
        last = r.occupancy;
        if r.system_load > 0.5 {
            let little = r.arrival_rate * r.mean_service_time * r.service_rate / 30.0;
            assert!((r.occupancy - little).abs() / r.occupancy <= 0.15, "{} vs {little}", r.occupancy);
        }
    }
}

#[test]
fn fixed_request_list_runs() {
    let net = grid(8);
    let reqs: Vec<Request> = (0..40)
        .map(|i| Request::new(RequestId(i), NodeId((i * 7 % 64) as u32), NodeId((i * 13 % 64 + 1) as u32 % 64), i as f64 * 20.0, &net, 6.0))
        .filter(|r| r.origin != r.destination)
        .collect();
    let mut cfg = config(6, 2, 0.0, 1200.0, 1);
    cfg.demand = DemandSource::Requests(reqs.clone());
    cfg.warmup = Some(0.0);
    let r = run(&cfg, &net).unwrap();
    check_invariants(&r, &cfg);
    assert_eq!(r.counts.requests, reqs.len());
}

#[test]
fn sweep_rows_follow_axis_order_and_keep_failures() {
    let net = grid(8);
    let reqs: Vec<Request> = (0..30)
        .map(|i| Request::new(RequestId(i), NodeId(0), NodeId(63), i as f64 * 30.0, &net, 6.0))
        .collect();
    let mut base = config(4, 2, 0.0, 900.0, 9);
    base.demand = DemandSource::Requests(reqs);
    let axes = SweepAxes { arrival_rates: vec![0.01, 1.0], capacities: vec![1, 3], fleet_sizes: vec![2] };
    let rows = sweep(&base, &axes, &net, 2).unwrap();
    let shape: Vec<(usize, usize, f64, u64)> = rows.iter().map(|r| (r.index, r.capacity, r.arrival_rate, r.seed)).collect();
    assert_eq!(shape, vec![(0, 1, 0.01, 9), (1, 1, 1.0, 8), (2, 3, 0.01, 11), (3, 3, 1.0, 10)]);
    // the request list cannot be thinned up to one request per second
    assert!(rows[0].result.is_ok() && rows[1].result.is_err());
    let mut out = Vec::new();
    write_sweep_table(&mut out, &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(2).unwrap().contains("failed"));
}
