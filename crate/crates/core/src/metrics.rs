//! Forecast accuracy and threshold-violation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Thresholds;

/// Per-station accuracy and violation summary. Areas integrate stage excess
/// or deficit over time at the hourly cadence, so the unit is ft·h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMetrics {
    pub station: String,
    pub mae: f64,
    pub rmse: f64,
    pub over_timesteps: u64,
    pub over_area: f64,
    pub under_timesteps: u64,
    pub under_area: f64,
}

impl StationMetrics {
    fn zero(station: &str) -> Self {
        StationMetrics {
            station: station.to_string(),
            mae: 0.0,
            rmse: 0.0,
            over_timesteps: 0,
            over_area: 0.0,
            under_timesteps: 0,
            under_area: 0.0,
        }
    }
}

/// One method's report: per-station rows plus an aggregate row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    /// Number of windows the method was evaluated on.
    pub windows: u64,
    pub stations: Vec<StationMetrics>,
    pub aggregate: StationMetrics,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "method,station,windows,mae,rmse,over_timesteps,over_area,under_timesteps,under_area";

    pub fn csv_rows(&self) -> Vec<String> {
        self.stations
            .iter()
            .chain(std::iter::once(&self.aggregate))
            .map(|s| {
                format!(
                    "{},{},{},{},{},{},{},{},{}",
                    self.method,
                    s.station,
                    self.windows,
                    s.mae,
                    s.rmse,
                    s.over_timesteps,
                    s.over_area,
                    s.under_timesteps,
                    s.under_area
                )
            })
            .collect()
    }
}

/// Threshold-crossing counts and areas per station over a `steps x stations`
/// series. A value exactly at a threshold is not a violation.
pub fn threshold_metrics(
    levels: &[f64],
    stations: &[String],
    thr: &Thresholds,
) -> Result<Vec<StationMetrics>> {
    let n = stations.len();
    if n == 0 || levels.len() % n != 0 {
        return Err(Error::dim(
            "threshold_metrics",
            format!("{} values do not tile {} stations", levels.len(), n),
        ));
    }
    if thr.n_stations() != n {
        return Err(Error::dim(
            "threshold_metrics",
            format!("{} thresholds for {} stations", thr.n_stations(), n),
        ));
    }
    let mut out: Vec<StationMetrics> = stations.iter().map(|s| StationMetrics::zero(s)).collect();
    for row in levels.chunks(n) {
        for (i, v) in row.iter().enumerate() {
            let flood = thr.flood()[i];
            let waste = thr.waste()[i];
            if *v > flood {
                out[i].over_timesteps += 1;
                out[i].over_area += v - flood;
            }
            if *v < waste {
                out[i].under_timesteps += 1;
                out[i].under_area += waste - v;
            }
        }
    }
    Ok(out)
}

/// Sums station metrics into one aggregate row (MAE/RMSE are value-weighted
/// over all stations, so they are recomputed by callers that have the data;
/// here they are averaged as a plain mean).
pub fn aggregate_metrics(per_station: &[StationMetrics]) -> StationMetrics {
    let mut agg = StationMetrics::zero("ALL");
    let n = per_station.len().max(1) as f64;
    for s in per_station {
        agg.mae += s.mae / n;
        agg.rmse += s.rmse / n;
        agg.over_timesteps += s.over_timesteps;
        agg.over_area += s.over_area;
        agg.under_timesteps += s.under_timesteps;
        agg.under_area += s.under_area;
    }
    agg
}

/// Mean absolute error and root mean square error over all values.
pub fn mae_rmse(pred: &[f64], obs: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != obs.len() || pred.is_empty() {
        return Err(Error::dim(
            "mae_rmse",
            format!("{} vs {} values", pred.len(), obs.len()),
        ));
    }
    let n = pred.len() as f64;
    let mae = pred.iter().zip(obs).map(|(p, o)| (p - o).abs()).sum::<f64>() / n;
    let mse = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum::<f64>() / n;
    Ok((mae, mse.sqrt()))
}
