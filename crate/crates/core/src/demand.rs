//! Request stream: ingestion and filtering of raw trip records, uniform
//! subsampling, and synthetic Poisson demand.

use std::fmt;
use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{snap_to_nearest_node, NodeId, RoadGraph, RoadNetwork};

/// Trips at or below this network distance (m) are discarded.
pub const MIN_TRIP_DISTANCE: f64 = 500.0;

/// Attempts per request before an OD distribution is declared infeasible.
pub const MAX_OD_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A single-passenger trip request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub origin: NodeId,
    pub destination: NodeId,
    /// Seconds from simulation start; a multiple of the matching interval.
    pub request_time: f64,
    /// Shortest-path distance origin to destination (m).
    pub direct_distance: f64,
    /// `direct_distance / speed` (s).
    pub direct_time: f64,
}

impl Request {
    pub fn new(
        id: RequestId,
        origin: NodeId,
        destination: NodeId,
        request_time: f64,
        net: &RoadNetwork,
        speed: f64,
    ) -> Self {
        let direct_distance = net.distance(origin, destination);
        Request {
            id,
            origin,
            destination,
            request_time,
            direct_distance,
            direct_time: direct_distance / speed,
        }
    }
}

/// Raw trip record as found in trip datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawTrip {
    pub timestamp: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub dest_x: f64,
    pub dest_y: f64,
}

/// Axis-aligned study area, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// Smallest box enclosing every node of `graph`.
    pub fn of_graph(graph: &RoadGraph) -> Self {
        let mut b = BoundingBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for n in graph.nodes() {
            b.min_x = b.min_x.min(n.x);
            b.min_y = b.min_y.min(n.y);
            b.max_x = b.max_x.max(n.x);
            b.max_y = b.max_y.max(n.y);
        }
        b
    }
}

/// Rounds to the nearest multiple of `step`; exact halves round up.
pub fn round_to_step(t: f64, step: f64) -> f64 {
    (t / step + 0.5).floor() * step
}

/// Applies the trip filtering protocol, in order: study-area test, snapping
/// to the nearest intersection, dropping trips of at most 500 m network
/// distance, and rounding timestamps to the matching grid. Ids are assigned
/// sequentially by `(request_time, input order)`.
pub fn filter_trips(
    raw: &[RawTrip],
    net: &RoadNetwork,
    step: f64,
    area: &BoundingBox,
    speed: f64,
) -> Result<Vec<Request>> {
    if !(step > 0.0) {
        return Err(invalid("step", format!("matching interval must be positive, got {step}")));
    }
    if !(speed > 0.0) {
        return Err(invalid("speed", format!("must be positive, got {speed}")));
    }
    let graph = net.graph();
    let mut kept: Vec<(usize, Request)> = Vec::new();
    for (index, trip) in raw.iter().enumerate() {
        let values = [trip.timestamp, trip.origin_x, trip.origin_y, trip.dest_x, trip.dest_y];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedRecord { index, message: "non-finite field".into() });
        }
        if trip.timestamp < 0.0 {
            return Err(Error::MalformedRecord { index, message: "negative timestamp".into() });
        }
        if !area.contains(trip.origin_x, trip.origin_y) || !area.contains(trip.dest_x, trip.dest_y) {
            continue;
        }
        let origin = snap_to_nearest_node(graph, trip.origin_x, trip.origin_y);
        let destination = snap_to_nearest_node(graph, trip.dest_x, trip.dest_y);
        if net.distance(origin, destination) <= MIN_TRIP_DISTANCE {
            continue;
        }
        let t = round_to_step(trip.timestamp, step);
        kept.push((index, Request::new(RequestId(0), origin, destination, t, net, speed)));
    }
    kept.sort_by(|a, b| a.1.request_time.total_cmp(&b.1.request_time).then(a.0.cmp(&b.0)));
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut r))| {
            r.id = RequestId(i as u64);
            r
        })
        .collect())
}

/// Keeps each request independently with probability `rate`.
///
/// Every request consumes exactly one uniform draw, so for a fixed seed the
/// sample at a lower rate is a subset of the sample at a higher rate.
pub fn subsample(requests: &[Request], rate: f64, seed: u64) -> Result<Vec<Request>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(invalid("rate", format!("must lie in (0, 1], got {rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(requests
        .iter()
        .filter(|_| rng.random::<f64>() < rate)
        .copied()
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdWeight {
    pub origin: NodeId,
    pub destination: NodeId,
    pub weight: f64,
}

/// Origin-destination sampling law for synthetic demand.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OdDistribution {
    /// Origin and destination uniform over nodes.
    #[default]
    Uniform,
    /// Origins weighted by a Gaussian bump, destinations uniform.
    Hotspot { center_x: f64, center_y: f64, spread: f64 },
    /// Explicit categorical weights over node pairs.
    Pairs { pairs: Vec<OdWeight> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandConfig {
    /// Requests per second.
    pub arrival_rate: f64,
    /// Seconds of demand to generate.
    pub horizon: f64,
    #[serde(default)]
    pub od: OdDistribution,
    pub seed: u64,
}

impl DemandConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate >= 0.0) || !self.arrival_rate.is_finite() {
            return Err(invalid("arrival_rate", format!("must be non-negative, got {}", self.arrival_rate)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        match &self.od {
            OdDistribution::Uniform => {}
            OdDistribution::Hotspot { center_x, center_y, spread } => {
                if !center_x.is_finite() || !center_y.is_finite() || !(*spread > 0.0) {
                    return Err(invalid("od.spread", "hotspot needs a finite center and positive spread"));
                }
            }
            OdDistribution::Pairs { pairs } => {
                if pairs.iter().any(|p| !(p.weight >= 0.0) || !p.weight.is_finite()) {
                    return Err(invalid("od.pairs", "weights must be finite and non-negative"));
                }
                if !pairs.iter().any(|p| p.weight > 0.0) {
                    return Err(invalid("od.pairs", "at least one weight must be positive"));
                }
            }
        }
        Ok(())
    }
}

enum OdSampler {
    Free { origins: Option<WeightedIndex<f64>>, nodes: u32 },
    Pairs { pairs: Vec<(NodeId, NodeId)>, index: WeightedIndex<f64> },
}

impl OdSampler {
    fn new(od: &OdDistribution, net: &RoadNetwork) -> Result<Self> {
        let graph = net.graph();
        let nodes = graph.node_count() as u32;
        Ok(match od {
            OdDistribution::Uniform => OdSampler::Free { origins: None, nodes },
            OdDistribution::Hotspot { center_x, center_y, spread } => {
                let weights = graph.nodes().iter().map(|n| {
                    let d2 = (n.x - center_x).powi(2) + (n.y - center_y).powi(2);
                    (-d2 / (2.0 * spread * spread)).exp()
                });
                let index = WeightedIndex::new(weights)
                    .map_err(|e| invalid("od", format!("hotspot weights unusable: {e}")))?;
                OdSampler::Free { origins: Some(index), nodes }
            }
            OdDistribution::Pairs { pairs } => {
                let usable: Vec<&OdWeight> = pairs
                    .iter()
                    .filter(|p| {
                        p.weight > 0.0
                            && graph.contains(p.origin)
                            && graph.contains(p.destination)
                            && net.distance(p.origin, p.destination) > MIN_TRIP_DISTANCE
                    })
                    .collect();
                if usable.is_empty() {
                    return Err(Error::NoFeasibleOdPair {
                        min_distance: MIN_TRIP_DISTANCE,
                        attempts: pairs.len(),
                    });
                }
                let index = WeightedIndex::new(usable.iter().map(|p| p.weight))
                    .map_err(|e| invalid("od.pairs", e.to_string()))?;
                OdSampler::Pairs {
                    pairs: usable.iter().map(|p| (p.origin, p.destination)).collect(),
                    index,
                }
            }
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng, net: &RoadNetwork) -> Result<(NodeId, NodeId)> {
        match self {
            OdSampler::Pairs { pairs, index } => Ok(pairs[index.sample(rng)]),
            OdSampler::Free { origins, nodes } => {
                for _ in 0..MAX_OD_ATTEMPTS {
                    let o = match origins {
                        Some(w) => NodeId(w.sample(rng) as u32),
                        None => NodeId(rng.random_range(0..*nodes)),
                    };
                    let d = NodeId(rng.random_range(0..*nodes));
                    if net.distance(o, d) > MIN_TRIP_DISTANCE {
                        return Ok((o, d));
                    }
                }
                Err(Error::NoFeasibleOdPair {
                    min_distance: MIN_TRIP_DISTANCE,
                    attempts: MAX_OD_ATTEMPTS,
                })
            }
        }
    }
}

/// Synthetic demand: a Poisson(λ·Δ) batch at every matching time `k·Δ`
/// below the horizon, OD pairs drawn from the configured distribution and
/// resampled until longer than 500 m.
pub fn generate_poisson(cfg: &DemandConfig, net: &RoadNetwork, step: f64, speed: f64) -> Result<Vec<Request>> {
    cfg.validate()?;
    if !(step > 0.0) {
        return Err(invalid("step", format!("matching interval must be positive, got {step}")));
    }
    if !(speed > 0.0) {
        return Err(invalid("speed", format!("must be positive, got {speed}")));
    }
    if cfg.arrival_rate == 0.0 {
        return Ok(Vec::new());
    }
    let sampler = OdSampler::new(&cfg.od, net)?;
    let batch = Poisson::new(cfg.arrival_rate * step).map_err(|e| invalid("arrival_rate", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps = (cfg.horizon / step).ceil() as u64;
    let mut out = Vec::with_capacity((cfg.arrival_rate * cfg.horizon * 1.1) as usize + 16);
    for k in 0..steps {
        let t = k as f64 * step;
        if t >= cfg.horizon {
            break;
        }
        let count = batch.sample(&mut rng) as u64;
        for _ in 0..count {
            let (o, d) = sampler.sample(&mut rng, net)?;
            out.push(Request::new(RequestId(out.len() as u64), o, d, t, net, speed));
        }
    }
    Ok(out)
}

/// Mean direct trip distance `d̄` (m).
pub fn mean_direct_distance(requests: &[Request]) -> Result<f64> {
    if requests.is_empty() {
        return Err(Error::Empty("request list"));
    }
    Ok(requests.iter().map(|r| r.direct_distance).sum::<f64>() / requests.len() as f64)
}

/// Reads raw trips from delimited text with header
/// `timestamp,origin_x,origin_y,dest_x,dest_y`; extra columns are ignored.
pub fn read_raw_trips<R: Read>(reader: R) -> Result<Vec<RawTrip>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Serialize)]
struct RequestRow {
    timestamp: f64,
    origin_x: f64,
    origin_y: f64,
    dest_x: f64,
    dest_y: f64,
    id: u64,
    origin_node: u32,
    destination_node: u32,
    request_time: f64,
    direct_distance: f64,
    direct_time: f64,
}

/// Writes requests in the raw-trip layout followed by computed columns, so
/// the output can be re-ingested with [`read_raw_trips`].
pub fn write_requests<W: Write>(writer: W, requests: &[Request], graph: &RoadGraph) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in requests {
        let (o, d) = (graph.node(r.origin), graph.node(r.destination));
        w.serialize(RequestRow {
            timestamp: r.request_time,
            origin_x: o.x,
            origin_y: o.y,
            dest_x: d.x,
            dest_y: d.y,
            id: r.id.0,
            origin_node: r.origin.0,
            destination_node: r.destination.0,
            request_time: r.request_time,
            direct_distance: r.direct_distance,
            direct_time: r.direct_time,
        })?;
    }
    w.flush()?;
    Ok(())
}
