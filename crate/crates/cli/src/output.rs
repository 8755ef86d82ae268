use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ridepool::engine::{write_sweep_table, SimReport, SweepRow};
use ridepool::fleet::write_events;
use ridepool::laws::{
    fit_through_origin, load_factor, predicted_occupancy, predicted_service_rate, validate_sweep, FitResult, Law,
    ProportionalFit, SweepPoint, SweepValidation,
};

use crate::config::{FileConfig, Loaded};
use crate::CliError;

const CURVE_STEP: f64 = 0.05;
const CURVE_MIN_LOAD: f64 = 8.0;

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_file: &'a Path,
    inputs: Vec<PathBuf>,
    output_dir: &'a Path,
    seed: u64,
    config: &'a FileConfig,
}

/// `manifest.json` plus `config.toml`, the fully resolved config that
/// reproduces the outputs when fed back in.
pub fn write_manifest(dir: &Path, command: &str, loaded: &Loaded) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "ridepool",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_file: &loaded.path,
        inputs: loaded.inputs(),
        output_dir: dir,
        seed: loaded.file.seed,
        config: &loaded.file,
    };
    let mut w = create(dir, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::Run(e.to_string()))?;
    writeln!(w)?;
    let text = toml::to_string(&loaded.file).map_err(|e| CliError::Run(e.to_string()))?;
    std::fs::write(dir.join("config.toml"), text)?;
    Ok(())
}

#[derive(Serialize)]
struct HistogramRow {
    bin_start: f64,
    bin_end: f64,
    count: u64,
}

#[derive(Serialize)]
struct RtvCsvRow {
    time: f64,
    vehicle: u32,
    trip: String,
    value: f64,
    chosen: bool,
}

pub fn write_report(dir: &Path, report: &SimReport) -> Result<(), CliError> {
    let mut w = create(dir, "summary.json")?;
    serde_json::to_writer_pretty(&mut w, report).map_err(|e| CliError::Run(e.to_string()))?;
    writeln!(w)?;

    let mut series = csv::Writer::from_writer(create(dir, "series.csv")?);
    for s in &report.series {
        series.serialize(s).map_err(|e| CliError::Run(e.to_string()))?;
    }
    series.flush()?;

    let mut hist = csv::Writer::from_writer(create(dir, "pickup_histogram.csv")?);
    let width = report.pickup_histogram.bin_width;
    for (i, &count) in report.pickup_histogram.counts.iter().enumerate() {
        let row = HistogramRow { bin_start: i as f64 * width, bin_end: (i + 1) as f64 * width, count };
        hist.serialize(row).map_err(|e| CliError::Run(e.to_string()))?;
    }
    hist.flush()?;

    if !report.events.is_empty() {
        write_events(create(dir, "events.csv")?, &report.events)?;
    }
    if !report.rtv.is_empty() {
        let mut rtv = csv::Writer::from_writer(create(dir, "rtv.csv")?);
        for r in &report.rtv {
            let trip = r.trip.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(";");
            let row = RtvCsvRow { time: r.time, vehicle: r.vehicle, trip, value: r.value, chosen: r.chosen };
            rtv.serialize(row).map_err(|e| CliError::Run(e.to_string()))?;
        }
        rtv.flush()?;
    }
    Ok(())
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = create(dir, "sweep.csv")?;
    write_sweep_table(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

/// The columns of a sweep table that the analysis needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TablePoint {
    pub point: SweepPoint,
    pub normalized_load: f64,
}

pub fn points_from_rows(rows: &[SweepRow]) -> Vec<TablePoint> {
    rows.iter()
        .filter_map(|r| r.result.as_ref().ok())
        .map(|r| TablePoint { point: r.sweep_point(), normalized_load: r.normalized_load })
        .collect()
}

#[derive(Deserialize)]
struct TableRecord {
    vehicles: usize,
    capacity: usize,
    status: String,
    occupancy: Option<f64>,
    service_rate: Option<f64>,
    system_load: Option<f64>,
    normalized_load: Option<f64>,
}

/// Reads the `status = ok` rows of a table written by `sweep`.
pub fn read_sweep_table(path: &Path) -> Result<Vec<TablePoint>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<TableRecord>().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if rec.status != "ok" {
            continue;
        }
        let missing = || CliError::Config(format!("{}: row {} is ok but lacks measurements", path.display(), i + 1));
        out.push(TablePoint {
            point: SweepPoint {
                fleet_size: rec.vehicles,
                capacity: rec.capacity,
                load: rec.system_load.ok_or_else(missing)?,
                occupancy: rec.occupancy.ok_or_else(missing)?,
                service_rate: rec.service_rate.ok_or_else(missing)?,
            },
            normalized_load: rec.normalized_load.ok_or_else(missing)?,
        });
    }
    Ok(out)
}

pub struct Analysis {
    pub laws: Vec<(Law, Result<SweepValidation, String>)>,
    pub approximation: Result<ProportionalFit, String>,
    points: Vec<TablePoint>,
    max_detour_ratio: f64,
    complexity: f64,
    /// First failure, if any analysis step could not be computed.
    pub error: Option<String>,
}

pub fn analyze(points: &[TablePoint], max_detour_ratio: f64, complexity: f64) -> Analysis {
    let sweep: Vec<SweepPoint> = points.iter().map(|p| p.point).collect();
    let laws: Vec<(Law, Result<SweepValidation, String>)> = [Law::Occupancy, Law::ServiceRate]
        .into_iter()
        .map(|law| (law, validate_sweep(&sweep, law).map_err(|e| format!("{} fit: {e}", law.name()))))
        .collect();
    let x: Vec<f64> = points
        .iter()
        .map(|p| load_factor(max_detour_ratio, complexity, p.point.capacity) * p.normalized_load)
        .collect();
    let u: Vec<f64> = sweep.iter().map(|p| p.load).collect();
    let approximation = fit_through_origin(&x, &u).map_err(|e| format!("load approximation: {e}"));
    let error = laws
        .iter()
        .find_map(|(_, r)| r.as_ref().err().cloned())
        .or_else(|| approximation.as_ref().err().cloned());
    Analysis { laws, approximation, points: points.to_vec(), max_detour_ratio, complexity, error }
}

#[derive(Serialize)]
struct FitRow<'a> {
    law: &'a str,
    capacity: String,
    r_squared: f64,
    mse: f64,
    rmse: f64,
    mae: f64,
    mape: f64,
}

fn fit_row<'a>(law: &'a str, capacity: String, f: &FitResult) -> FitRow<'a> {
    FitRow { law, capacity, r_squared: f.r_squared, mse: f.mse, rmse: f.rmse, mae: f.mae, mape: f.mape }
}

#[derive(Serialize)]
struct ResidualRow<'a> {
    law: &'a str,
    fleet_size: usize,
    capacity: usize,
    load: f64,
    measured: f64,
    predicted: f64,
    residual: f64,
}

#[derive(Serialize)]
struct CurveRow {
    capacity: usize,
    load: f64,
    occupancy: f64,
    service_rate: f64,
}

#[derive(Serialize)]
struct ApproxRow {
    fleet_size: usize,
    capacity: usize,
    normalized_load: f64,
    load_factor: f64,
    approximate_load: f64,
    system_load: f64,
}

#[derive(Serialize)]
struct AnalysisSummary<'a> {
    laws: Vec<(&'a str, Option<&'a SweepValidation>)>,
    load_approximation: Option<&'a ProportionalFit>,
    max_detour_ratio: f64,
    complexity: f64,
    errors: Vec<&'a str>,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Run(e.to_string())
}

/// `fit.csv`, `residuals.csv`, `curves.csv`, `load_approximation.csv` and
/// `analysis.json`.
pub fn write_analysis(dir: &Path, a: &Analysis) -> Result<(), CliError> {
    let mut fit = csv::Writer::from_writer(create(dir, "fit.csv")?);
    let mut res = csv::Writer::from_writer(create(dir, "residuals.csv")?);
    for (law, v) in &a.laws {
        let Ok(v) = v else { continue };
        for (c, f) in &v.by_capacity {
            fit.serialize(fit_row(law.name(), c.to_string(), f)).map_err(csv_err)?;
        }
        fit.serialize(fit_row(law.name(), "all".into(), &v.overall)).map_err(csv_err)?;
        for r in &v.residuals {
            res.serialize(ResidualRow {
                law: law.name(),
                fleet_size: r.fleet_size,
                capacity: r.capacity,
                load: r.load,
                measured: r.measured,
                predicted: r.predicted,
                residual: r.residual,
            })
            .map_err(csv_err)?;
        }
    }
    fit.flush()?;
    res.flush()?;

    let mut capacities: Vec<usize> = a.points.iter().map(|p| p.point.capacity).collect();
    capacities.sort_unstable();
    capacities.dedup();
    let top = a.points.iter().map(|p| p.point.load).fold(CURVE_MIN_LOAD, f64::max);
    let mut curves = csv::Writer::from_writer(create(dir, "curves.csv")?);
    for &c in &capacities {
        let steps = (top / CURVE_STEP).ceil() as usize;
        for i in 0..=steps {
            let u = i as f64 * CURVE_STEP;
            let row = CurveRow { capacity: c, load: u, occupancy: predicted_occupancy(u, c), service_rate: predicted_service_rate(u, c) };
            curves.serialize(row).map_err(csv_err)?;
        }
    }
    curves.flush()?;

    let mut approx = csv::Writer::from_writer(create(dir, "load_approximation.csv")?);
    for p in &a.points {
        let k = load_factor(a.max_detour_ratio, a.complexity, p.point.capacity);
        approx
            .serialize(ApproxRow {
                fleet_size: p.point.fleet_size,
                capacity: p.point.capacity,
                normalized_load: p.normalized_load,
                load_factor: k,
                approximate_load: k * p.normalized_load,
                system_load: p.point.load,
            })
            .map_err(csv_err)?;
    }
    approx.flush()?;

    let summary = AnalysisSummary {
        laws: a.laws.iter().map(|(l, v)| (l.name(), v.as_ref().ok())).collect(),
        load_approximation: a.approximation.as_ref().ok(),
        max_detour_ratio: a.max_detour_ratio,
        complexity: a.complexity,
        errors: a
            .laws
            .iter()
            .filter_map(|(_, v)| v.as_ref().err())
            .chain(a.approximation.as_ref().err())
            .map(String::as_str)
            .collect(),
    };
    let mut w = create(dir, "analysis.json")?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| CliError::Run(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

pub fn print_analysis(a: &Analysis) {
    println!("{:<13} {:>8} {:>8} {:>9} {:>8}", "law", "capacity", "R2", "RMSE", "MAPE%");
    for (law, v) in &a.laws {
        match v {
            Ok(v) => {
                let rows = v.by_capacity.iter().map(|(c, f)| (c.to_string(), f)).chain([("all".to_string(), &v.overall)]);
                for (c, f) in rows {
                    println!("{:<13} {:>8} {:>8.4} {:>9.4} {:>8.2}", law.name(), c, f.r_squared, f.rmse, 100.0 * f.mape);
                }
            }
            Err(e) => println!("{:<13} {e}", law.name()),
        }
    }
    match &a.approximation {
        Ok(f) => println!("load approximation: slope {:.4}, R2 {:.4}", f.slope, f.r_squared),
        Err(e) => println!("{e}"),
    }
}
