use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ridepool::demand::{
    filter_trips, generate_poisson, read_raw_trips, subsample, BoundingBox, DemandConfig, OdDistribution, Request,
};
use ridepool::engine::{DemandSource, SimConfig};
use ridepool::fleet::FleetConfig;
use ridepool::matching::{ConstraintSet, DispatchConfig};
use ridepool::network::{generate_grid, load_graph, RoadNetwork};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub seed: u64,
    /// Matching interval (s).
    #[serde(default = "default_step")]
    pub step: f64,
    pub horizon: f64,
    #[serde(default)]
    pub warmup: Option<f64>,
    #[serde(default = "default_true")]
    pub exclude_in_flight: bool,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub rtv_dump: bool,
    pub network: NetworkSection,
    pub fleet: FleetSection,
    pub demand: DemandSection,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub dispatch: DispatchConfig,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Topology term of the load approximation; 0 for regular street grids.
    #[serde(default)]
    pub complexity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSection {
    pub vehicles: usize,
    pub capacity: usize,
    #[serde(default = "default_speed")]
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    /// Poisson arrivals per second; excludes `trips`.
    #[serde(default)]
    pub arrival_rate: Option<f64>,
    #[serde(default)]
    pub od: OdDistribution,
    /// Raw trip CSV to filter onto the network; excludes `arrival_rate`.
    #[serde(default)]
    pub trips: Option<PathBuf>,
    /// Study area for `trips`; defaults to the network's bounding box.
    #[serde(default)]
    pub area: Option<BoundingBox>,
    /// Keep each filtered trip with this probability.
    #[serde(default)]
    pub subsample: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub arrival_rates: Vec<f64>,
    /// Measured loads to hit by tuning the arrival rate; excludes `arrival_rates`.
    #[serde(default)]
    pub target_loads: Vec<f64>,
    #[serde(default)]
    pub capacities: Vec<usize>,
    #[serde(default)]
    pub fleet_sizes: Vec<usize>,
    #[serde(default = "default_tune_iterations")]
    pub tune_iterations: usize,
}

fn default_step() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

fn default_speed() -> f64 {
    6.0
}

fn default_tune_iterations() -> usize {
    3
}

fn config_err(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid {field}: {message}"))
}

/// Maps library validation failures onto configuration errors.
fn checked(e: ridepool::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// A config file with paths made absolute and defaults written out.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: PathBuf,
    pub file: FileConfig,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Loaded, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut file: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let absolute = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = file.network.file.as_mut() {
            absolute(p);
        }
        if let Some(p) = file.demand.trips.as_mut() {
            absolute(p);
        }
        file.check()?;
        file.resolve_defaults();
        Ok(Loaded { path: path.to_path_buf(), file })
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.path.clone()];
        v.extend(self.file.network.file.clone());
        v.extend(self.file.demand.trips.clone());
        v
    }
}

impl FileConfig {
    /// Structural checks that the library cannot see.
    fn check(&self) -> Result<(), CliError> {
        match (&self.network.file, &self.network.grid) {
            (Some(_), Some(_)) => return Err(config_err("network", "give either `file` or `grid`, not both")),
            (None, None) => return Err(config_err("network", "one of `file` or `grid` is required")),
            _ => {}
        }
        if !(self.network.complexity >= 0.0) {
            return Err(config_err("network.complexity", format!("must be non-negative, got {}", self.network.complexity)));
        }
        match (&self.demand.arrival_rate, &self.demand.trips) {
            (Some(_), Some(_)) => {
                return Err(config_err("demand.arrival_rate", "give either `arrival_rate` or `trips`, not both"))
            }
            (None, None) => return Err(config_err("demand.arrival_rate", "one of `arrival_rate` or `trips` is required")),
            _ => {}
        }
        if self.demand.trips.is_none() && (self.demand.area.is_some() || self.demand.subsample.is_some()) {
            return Err(config_err("demand.area", "`area` and `subsample` only apply to `trips`"));
        }
        if let Some(s) = &self.sweep {
            if !s.arrival_rates.is_empty() && !s.target_loads.is_empty() {
                return Err(config_err("sweep.target_loads", "give either `arrival_rates` or `target_loads`, not both"));
            }
            if s.target_loads.iter().any(|u| !(*u > 0.0)) {
                return Err(config_err("sweep.target_loads", "loads must be positive"));
            }
        }
        Ok(())
    }

    fn resolve_defaults(&mut self) {
        self.warmup = Some(self.warmup.unwrap_or(0.1 * self.horizon));
        self.dispatch.request_value = Some(self.dispatch.request_value(&self.constraints));
        if let Some(s) = self.sweep.as_mut() {
            if s.capacities.is_empty() {
                s.capacities.push(self.fleet.capacity);
            }
            if s.fleet_sizes.is_empty() {
                s.fleet_sizes.push(self.fleet.vehicles);
            }
            dedup(&mut s.arrival_rates, "sweep.arrival_rates");
            dedup(&mut s.target_loads, "sweep.target_loads");
            dedup(&mut s.capacities, "sweep.capacities");
            dedup(&mut s.fleet_sizes, "sweep.fleet_sizes");
        }
    }

    pub fn network(&self) -> Result<RoadNetwork, CliError> {
        let graph = match (&self.network.file, &self.network.grid) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                load_graph(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            (None, Some(g)) => generate_grid(g.rows, g.cols, g.spacing).map_err(checked)?,
            (None, None) => unreachable!("checked on load"),
        };
        Ok(RoadNetwork::new(graph))
    }

    /// Requests from the trip file, if demand is ingested rather than synthetic.
    fn ingested(&self, net: &RoadNetwork) -> Result<Option<Vec<Request>>, CliError> {
        let Some(path) = &self.demand.trips else { return Ok(None) };
        let file = std::fs::File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let raw = read_raw_trips(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let area = self.demand.area.unwrap_or_else(|| BoundingBox::of_graph(net.graph()));
        let mut requests = filter_trips(&raw, net, self.step, &area, self.fleet.speed)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(rate) = self.demand.subsample {
            requests = subsample(&requests, rate, self.seed).map_err(|e| config_err("demand.subsample", e))?;
        }
        Ok(Some(requests))
    }

    pub fn sim_config(&self, net: &RoadNetwork) -> Result<SimConfig, CliError> {
        let demand = match self.ingested(net)? {
            Some(requests) => DemandSource::Requests(requests),
            None => DemandSource::Synthetic(DemandConfig {
                arrival_rate: self.demand.arrival_rate.expect("checked on load"),
                horizon: self.horizon,
                od: self.demand.od.clone(),
                seed: self.seed,
            }),
        };
        let fleet = FleetConfig {
            vehicles: self.fleet.vehicles,
            capacity: self.fleet.capacity,
            speed: self.fleet.speed,
            seed: 0,
        };
        let mut cfg = SimConfig::new(fleet, demand, self.horizon, self.seed);
        cfg.step = self.step;
        cfg.warmup = self.warmup;
        cfg.exclude_in_flight = self.exclude_in_flight;
        cfg.trace = self.trace;
        cfg.rtv_dump = self.rtv_dump;
        cfg.constraints = self.constraints;
        cfg.dispatch = self.dispatch;
        cfg.validate().map_err(checked)?;
        Ok(cfg)
    }

    /// The request stream a run with this config would see.
    pub fn requests(&self, net: &RoadNetwork) -> Result<Vec<Request>, CliError> {
        let cfg = self.sim_config(net)?;
        match cfg.demand {
            DemandSource::Requests(r) => Ok(r),
            DemandSource::Synthetic(d) => {
                generate_poisson(&d, net, cfg.step, cfg.fleet.speed).map_err(|e| CliError::Run(e.to_string()))
            }
        }
    }
}

fn dedup<T: PartialEq + Copy + std::fmt::Debug>(values: &mut Vec<T>, field: &str) {
    let mut seen: Vec<T> = Vec::with_capacity(values.len());
    for v in values.iter() {
        if seen.contains(v) {
            log::warn!("{field}: dropping duplicate value {v:?}");
        } else {
            seen.push(*v);
        }
    }
    *values = seen;
}
