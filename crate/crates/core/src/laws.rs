//! System load, the occupancy / service-rate scaling laws, the load
//! approximation from exogenous quantities, and goodness-of-fit metrics.
//!
//! Notation used in docs below: `u` system load, `C` vehicle capacity,
//! `C̄` mean scheduled passengers per vehicle, `R̄` service rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

fn positive(field: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {value}")))
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be non-negative and finite, got {value}")))
    }
}

/// Exogenous and endogenous inputs of the load formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadInputs {
    /// Request arrival rate (requests/second).
    pub arrival_rate: f64,
    pub fleet_size: usize,
    /// Mean driver service time per request, assignment to dropoff (s).
    pub mean_service_time: f64,
    /// Mean direct trip distance (m).
    pub mean_direct_distance: f64,
    /// Vehicle speed (m/s).
    pub speed: f64,
    pub max_detour_ratio: f64,
    /// Network complexity, supplied as metadata (0 for regular grids).
    pub complexity: f64,
    pub capacity: usize,
}

impl LoadInputs {
    pub fn system_load(&self) -> Result<f64> {
        system_load(self.arrival_rate, self.fleet_size, self.mean_service_time)
    }

    pub fn normalized_load(&self) -> Result<f64> {
        normalized_load(self.arrival_rate, self.mean_direct_distance, self.fleet_size, self.speed)
    }

    pub fn approximate_load(&self) -> Result<f64> {
        approximate_load(self.normalized_load()?, self.max_detour_ratio, self.complexity, self.capacity)
    }
}

/// `u = λ / (N / t̄)`.
pub fn system_load(arrival_rate: f64, fleet_size: usize, mean_service_time: f64) -> Result<f64> {
    let lambda = positive("arrival_rate", arrival_rate)?;
    let n = positive("fleet_size", fleet_size as f64)?;
    let t = positive("mean_service_time", mean_service_time)?;
    Ok(lambda * t / n)
}

/// Predicted `C̄`: `u` up to `u = 1`, then `C·u / (C − 1 + u)`.
pub fn predicted_occupancy(load: f64, capacity: usize) -> f64 {
    let c = capacity as f64;
    if load <= 1.0 {
        load
    } else {
        c * load / (c - 1.0 + load)
    }
}

/// Predicted `R̄`: 1 up to `u = 1`, then `C / (C − 1 + u)`.
pub fn predicted_service_rate(load: f64, capacity: usize) -> f64 {
    let c = capacity as f64;
    if load <= 1.0 {
        1.0
    } else {
        c / (c - 1.0 + load)
    }
}

/// Correlation factor `k_c = 1 / (C − 1)` linking service rate to remaining capacity.
pub fn correlation_factor(capacity: usize) -> Result<f64> {
    if capacity < 2 {
        return Err(invalid("capacity", format!("correlation factor needs C >= 2, got {capacity}")));
    }
    Ok(1.0 / (capacity as f64 - 1.0))
}

/// `R̄ = (C − C̄) / (C − 1)`, clamped to `[0, 1]`.
pub fn linear_remaining_capacity(capacity: usize, occupancy: f64) -> Result<f64> {
    let k = correlation_factor(capacity)?;
    Ok((k * (capacity as f64 - occupancy)).clamp(0.0, 1.0))
}

/// Normalized load `x = λ·d̄ / (N·v)`. Zero demand gives zero.
pub fn normalized_load(arrival_rate: f64, mean_direct_distance: f64, fleet_size: usize, speed: f64) -> Result<f64> {
    let lambda = non_negative("arrival_rate", arrival_rate)?;
    let d = positive("mean_direct_distance", mean_direct_distance)?;
    let n = positive("fleet_size", fleet_size as f64)?;
    let v = positive("speed", speed)?;
    Ok(lambda * d / (n * v))
}

/// The proportionality factor `r_dt + T + ∛C` between `u` and `x`.
pub fn load_factor(max_detour_ratio: f64, complexity: f64, capacity: usize) -> f64 {
    max_detour_ratio + complexity + (capacity as f64).cbrt()
}

/// `u ≈ (r_dt + T + ∛C)·x`.
pub fn approximate_load(normalized: f64, max_detour_ratio: f64, complexity: f64, capacity: usize) -> Result<f64> {
    let x = non_negative("normalized_load", normalized)?;
    Ok(load_factor(max_detour_ratio, complexity, capacity) * x)
}

/// Goodness of fit between observations and predictions.
///
/// `r_squared` is the mean of per-scenario R²; the remaining metrics are
/// pooled over every point. `mape` is a fraction (multiply by 100 for %).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub r_squared: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
}

/// Error metrics over `F` scenarios of observed/predicted series.
pub fn error_metrics(observed: &[Vec<f64>], predicted: &[Vec<f64>]) -> Result<FitResult> {
    if observed.is_empty() {
        return Err(Error::Empty("scenario list"));
    }
    if observed.len() != predicted.len() {
        return Err(invalid(
            "predicted",
            format!("{} scenarios observed but {} predicted", observed.len(), predicted.len()),
        ));
    }
    let mut r2_sum = 0.0;
    let (mut sq, mut abs, mut pct, mut count) = (0.0, 0.0, 0.0, 0usize);
    for (f, (y, y_hat)) in observed.iter().zip(predicted).enumerate() {
        if y.len() != y_hat.len() {
            return Err(invalid(
                "predicted",
                format!("scenario {f}: {} observations but {} predictions", y.len(), y_hat.len()),
            ));
        }
        if y.len() < 2 {
            return Err(invalid("observed", format!("scenario {f} needs at least 2 points for R²")));
        }
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        if ss_tot == 0.0 {
            return Err(invalid("observed", format!("scenario {f} has zero variance; R² undefined")));
        }
        let mut ss_res = 0.0;
        for (i, (&a, &b)) in y.iter().zip(y_hat).enumerate() {
            if a == 0.0 {
                return Err(invalid("observed", format!("scenario {f} point {i} is zero; MAPE undefined")));
            }
            let e = a - b;
            ss_res += e * e;
            abs += e.abs();
            pct += (e / a).abs();
        }
        sq += ss_res;
        count += y.len();
        r2_sum += 1.0 - ss_res / ss_tot;
    }
    let mse = sq / count as f64;
    Ok(FitResult {
        r_squared: r2_sum / observed.len() as f64,
        mse,
        rmse: mse.sqrt(),
        mae: abs / count as f64,
        mape: pct / count as f64,
    })
}

/// Which scaling law to validate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Occupancy,
    ServiceRate,
}

impl Law {
    pub fn predict(self, load: f64, capacity: usize) -> f64 {
        match self {
            Law::Occupancy => predicted_occupancy(load, capacity),
            Law::ServiceRate => predicted_service_rate(load, capacity),
        }
    }

    pub fn measured(self, point: &SweepPoint) -> f64 {
        match self {
            Law::Occupancy => point.occupancy,
            Law::ServiceRate => point.service_rate,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Law::Occupancy => "occupancy",
            Law::ServiceRate => "service_rate",
        }
    }
}

/// One measured sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fleet_size: usize,
    pub capacity: usize,
    /// Measured system load.
    pub load: f64,
    pub occupancy: f64,
    pub service_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub load: f64,
    pub capacity: usize,
    pub fleet_size: usize,
    pub measured: f64,
    pub predicted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepValidation {
    pub law: Law,
    /// One fit per capacity, scenarios being the fleet sizes at that capacity.
    pub by_capacity: Vec<(usize, FitResult)>,
    /// Fit over every (capacity, fleet size) scenario together.
    pub overall: FitResult,
    pub residuals: Vec<Residual>,
}

/// Pairs each measured point with the law at its measured load and scores
/// the agreement, grouping scenarios by fleet size within each capacity.
pub fn validate_sweep(points: &[SweepPoint], law: Law) -> Result<SweepValidation> {
    if points.is_empty() {
        return Err(Error::Empty("sweep"));
    }
    let mut groups: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut residuals = Vec::with_capacity(points.len());
    for p in points {
        let measured = law.measured(p);
        let predicted = law.predict(p.load, p.capacity);
        let g = groups.entry((p.capacity, p.fleet_size)).or_default();
        g.0.push(measured);
        g.1.push(predicted);
        residuals.push(Residual {
            load: p.load,
            capacity: p.capacity,
            fleet_size: p.fleet_size,
            measured,
            predicted,
            residual: measured - predicted,
        });
    }
    let mut by_capacity = Vec::new();
    let mut capacities: Vec<usize> = groups.keys().map(|&(c, _)| c).collect();
    capacities.dedup();
    for c in capacities {
        let (obs, pred): (Vec<_>, Vec<_>) = groups
            .range((c, 0)..=(c, usize::MAX))
            .map(|(_, (o, p))| (o.clone(), p.clone()))
            .unzip();
        by_capacity.push((c, error_metrics(&obs, &pred)?));
    }
    let (obs, pred): (Vec<_>, Vec<_>) = groups.into_values().unzip();
    Ok(SweepValidation {
        law,
        by_capacity,
        overall: error_metrics(&obs, &pred)?,
        residuals,
    })
}

/// Least-squares line through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionalFit {
    pub slope: f64,
    pub r_squared: f64,
}

/// Fits `y = slope·x` and reports R² against the mean of `y`.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> Result<ProportionalFit> {
    if x.len() != y.len() {
        return Err(invalid("y", format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(invalid("x", "need at least 2 points"));
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(invalid("x", "all regressors are zero"));
    }
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(invalid("y", "zero variance; R² undefined"));
    }
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    Ok(ProportionalFit { slope, r_squared: 1.0 - ss_res / ss_tot })
}
