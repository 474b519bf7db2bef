//! Test-split assessment of schedules and forecasts.
//!
//! Mitigation methods are compared on the same physics: the rule-based row
//! replays the recorded trajectory, and the manager row re-runs the
//! simulator closed-loop under the manager's schedules (receding horizon,
//! first action applied each hour). The GA row scores surrogate-predicted
//! t+1 levels on a window subsample, since a per-window evolutionary search
//! over the whole split is exactly the cost this system is built to avoid.

use std::time::Instant;

use serde::Serialize;

use crate::autodiff::{Tape, Tensor};
use crate::baselines::{ga_optimize, GaConfig, GaGeneration};
use crate::data::{Normalizer, TimeSeriesFrame, VarClass, WindowSet};
use crate::error::{Error, Result};
use crate::losses::Thresholds;
use crate::metrics::{aggregate_metrics, mae_rmse, threshold_metrics, MetricsReport};
use crate::models::{assemble_batch, EvaluatorModel, ManagerModel, RawBatch};
use crate::sim::{step_dynamics, RiverTopology, SimState};
use crate::training::PreparedData;

/// Everything cmd-assess needs beyond the models.
#[derive(Clone, Debug)]
pub struct AssessConfig {
    pub thresholds: Thresholds,
    pub ga: GaConfig,
    /// Upper bound on GA-assessed windows (evenly spaced over the split).
    pub ga_windows: usize,
    pub with_ga: bool,
    pub batch_size: usize,
}

impl AssessConfig {
    pub fn new(thresholds: Thresholds) -> Self {
        AssessConfig {
            thresholds,
            ga: GaConfig::default(),
            ga_windows: 8,
            with_ga: true,
            batch_size: 512,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssessReport {
    /// One row set per method, Table-3 style.
    pub methods: Vec<MetricsReport>,
    /// Forecast skill of the evaluator over the full horizon.
    pub evaluator_mae: f64,
    pub evaluator_rmse: f64,
    /// Persistence (last level held) over the same horizon.
    pub persistence_mae: f64,
    pub persistence_rmse: f64,
    /// GA fitness traces per assessed window.
    pub ga_traces: Vec<(usize, Vec<GaGeneration>)>,
}

impl AssessReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(MetricsReport::CSV_HEADER);
        out.push('\n');
        for m in &self.methods {
            for row in m.csv_rows() {
                out.push_str(&row);
                out.push('\n');
            }
        }
        out
    }

    pub fn method(&self, name: &str) -> Option<&MetricsReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn station_names(frame: &TimeSeriesFrame) -> Vec<String> {
    frame
        .columns()
        .iter()
        .filter(|c| c.class == VarClass::Water)
        .map(|c| c.station.clone())
        .collect()
}

fn water_columns(frame: &TimeSeriesFrame) -> Vec<usize> {
    frame
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.class == VarClass::Water)
        .map(|(i, _)| i)
        .collect()
}

/// Actual recorded levels over rows `[from, to)`, row-major steps x stations.
pub fn recorded_levels(frame: &TimeSeriesFrame, from: usize, to: usize) -> Vec<f64> {
    let cols = water_columns(frame);
    let mut out = Vec::with_capacity((to - from) * cols.len());
    for r in from..to {
        for &c in &cols {
            out.push(frame.columns()[c].values[r]);
        }
    }
    out
}

/// Rolling normalized history used by the closed-loop run.
struct History {
    rows: Vec<Vec<f64>>,
    w: usize,
}

impl History {
    fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
        if self.rows.len() > self.w {
            self.rows.remove(0);
        }
    }
}

/// Re-runs the test period through the simulator under the manager's
/// receding-horizon control. Returns the simulated levels for rows
/// `[split_row, end_row)` where `end_row = T - k` keeps the full forecast
/// window available.
pub fn closed_loop_levels(
    manager: &ManagerModel,
    raw: &TimeSeriesFrame,
    normalizer: &Normalizer,
    topology: &RiverTopology,
    split_row: usize,
) -> Result<Vec<f64>> {
    let io = &manager.core.io;
    let (w, k) = (io.w, io.k);
    let t_len = raw.len();
    if split_row < w || split_row + k >= t_len {
        return Err(Error::Config(format!(
            "split row {split_row} leaves no room for a {w}-hour history and {k}-hour horizon"
        )));
    }
    let end_row = t_len - k;
    let cols = raw.columns();
    let n_all = cols.len();
    let water_cols = water_columns(raw);
    let rain_col = cols.iter().position(|c| c.class == VarClass::Rain).expect("rain column");
    let tide_col = cols.iter().position(|c| c.class == VarClass::Tide).expect("tide column");
    let struct_cols: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| matches!(c.class, VarClass::Gate | VarClass::Pump))
        .map(|(i, _)| i)
        .collect();

    // seed the history with actual (normalized) rows
    let mut history = History { rows: Vec::with_capacity(w), w };
    for r in split_row - w..split_row {
        let row: Vec<f64> =
            (0..n_all).map(|c| normalizer.normalize_value(c, cols[c].values[r])).collect();
        history.push(row);
    }
    let mut state = SimState {
        levels: water_cols.iter().map(|&c| cols[c].values[split_row]).collect(),
        clock: split_row as u64,
    };

    let mut out = Vec::with_capacity((end_row - split_row) * water_cols.len());
    let mut tape_mode = Tape::inference();
    for t in split_row..end_row {
        // future rain/tide from the dataset (the forecastable covariates)
        let mut fut_known = Vec::with_capacity(k * 2);
        for j in 0..k {
            fut_known.push(normalizer.normalize_value(rain_col, cols[rain_col].values[t + j]));
            fut_known.push(normalizer.normalize_value(tide_col, cols[tide_col].values[t + j]));
        }

        let batch = history_batch(&history, io, &water_cols, &[rain_col, tide_col], fut_known)?;
        let (sched, _) = manager.forward(&mut tape_mode, &batch)?;
        let controls: Vec<f64> = sched.data()[..io.n_struct].to_vec();

        // record the pre-step stage, then advance the physics one hour
        out.extend_from_slice(&state.levels);
        let rain = cols[rain_col].values[t];
        let (next, _) = step_dynamics(&state, &controls, rain, topology)?;

        // append what an observer would have recorded at hour t
        let mut row_raw = vec![0.0; n_all];
        row_raw[rain_col] = rain;
        row_raw[tide_col] = cols[tide_col].values[t];
        for (si, &c) in struct_cols.iter().enumerate() {
            row_raw[c] = controls[si];
        }
        for (wi, &c) in water_cols.iter().enumerate() {
            row_raw[c] = state.levels[wi];
        }
        let row_norm: Vec<f64> =
            (0..n_all).map(|c| normalizer.normalize_value(c, row_raw[c])).collect();
        history.push(row_norm);
        state = next;
    }
    Ok(out)
}

/// Builds a one-sample batch from the rolling history. Columns of the
/// backing frame are assumed canonical (rain, tide, gates, pumps, water).
fn history_batch(
    history: &History,
    io: &crate::models::IoSpec,
    water_cols: &[usize],
    known_cols: &[usize],
    fut_known: Vec<f64>,
) -> Result<RawBatch> {
    let w = io.w;
    let mut past_seq = Vec::with_capacity(w * io.n_all);
    let mut past_cov = Vec::with_capacity(w * io.n_known);
    let mut past_water = vec![0.0; io.n_water * w];
    for (t, row) in history.rows.iter().enumerate() {
        past_seq.extend_from_slice(row);
        for &c in known_cols {
            past_cov.push(row[c]);
        }
        for (si, &c) in water_cols.iter().enumerate() {
            past_water[si * w + t] = row[c];
        }
    }
    Ok(RawBatch {
        b: 1,
        w,
        k: io.k,
        n_all: io.n_all,
        n_cov: io.n_known,
        n_known: io.n_known,
        n_struct: io.n_struct,
        n_water: io.n_water,
        n_target: io.n_struct,
        past_seq,
        past_cov,
        past_water,
        fut_known,
        fut_sched: None,
        target: vec![0.0; io.k * io.n_struct],
        cov_names: vec!["RAIN_1".into(), "TIDE_S4".into()],
    })
}

fn denorm_water(levels_norm: &[f64], normalizer: &Normalizer, water_cols: &[usize]) -> Vec<f64> {
    let n = water_cols.len();
    levels_norm
        .iter()
        .enumerate()
        .map(|(i, v)| normalizer.denormalize_value(water_cols[i % n], *v))
        .collect()
}

/// Evaluator-predicted levels at the first horizon step for every test
/// window, under the schedules the batch carries (observed ones by default).
pub fn surrogate_t1_series(
    evaluator: &EvaluatorModel,
    eval_windows_norm: &WindowSet,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let water_cols = water_cols_of(&evaluator.core.normalizer);
    let mut out = Vec::with_capacity(eval_windows_norm.len() * evaluator.core.io.n_water);
    let order: Vec<usize> = (0..eval_windows_norm.len()).collect();
    for chunk in order.chunks(batch_size) {
        let samples: Vec<_> = chunk.iter().map(|&i| eval_windows_norm.get(i)).collect();
        let batch = assemble_batch(&samples)?;
        let mut tape = Tape::inference();
        let (pred, _) = evaluator.forward(&mut tape, &batch, None)?;
        // time-major: the first b rows are step t+1 for the whole chunk
        let n = batch.n_water;
        let first = &pred.data()[..batch.b * n];
        out.extend(denorm_water(first, &evaluator.core.normalizer, &water_cols));
    }
    Ok(out)
}

fn water_cols_of(norm: &Normalizer) -> Vec<usize> {
    norm.columns
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("WS_"))
        .map(|(i, _)| i)
        .collect()
}

/// Full-horizon evaluator forecasts (ft) plus matching observations and the
/// persistence forecast, concatenated over all test windows.
pub fn horizon_forecasts(
    evaluator: &EvaluatorModel,
    eval_windows_norm: &WindowSet,
    raw_eval_windows: &WindowSet,
    batch_size: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let water_cols = water_cols_of(&evaluator.core.normalizer);
    let n = water_cols.len();
    let k = eval_windows_norm.k;
    let w = eval_windows_norm.w;
    let mut pred_all = Vec::new();
    let mut obs_all = Vec::new();
    let mut persist_all = Vec::new();
    let order: Vec<usize> = (0..eval_windows_norm.len()).collect();
    for chunk in order.chunks(batch_size) {
        let samples: Vec<_> = chunk.iter().map(|&i| eval_windows_norm.get(i)).collect();
        let batch = assemble_batch(&samples)?;
        let mut tape = Tape::inference();
        let (pred, _) = evaluator.forward(&mut tape, &batch, None)?;
        pred_all.extend(denorm_water(pred.data(), &evaluator.core.normalizer, &water_cols));

        for &i in chunk {
            let raw_sample = raw_eval_windows.get(i);
            let obs = raw_sample.target();
            let past = raw_sample.past();
            let last: Vec<f64> = {
                let layout = raw_sample.layout();
                layout
                    .water
                    .iter()
                    .map(|&c| past[(w - 1) * layout.n_all + c])
                    .collect()
            };
            // reorder per-window observations into the chunk's time-major
            // layout is unnecessary for error metrics; keep window-major
            obs_all.extend_from_slice(&obs);
            for _ in 0..k {
                persist_all.extend_from_slice(&last);
            }
        }
    }
    // pred_all is chunk-time-major; rebuild window-major to align with obs
    let mut pred_aligned = vec![0.0; pred_all.len()];
    let mut offset = 0;
    for chunk in order.chunks(batch_size) {
        let b = chunk.len();
        for (bi, _) in chunk.iter().enumerate() {
            for t in 0..k {
                let src = offset + (t * b + bi) * n;
                let dst = offset + (bi * k + t) * n;
                pred_aligned[dst..dst + n].copy_from_slice(&pred_all[src..src + n]);
            }
        }
        offset += b * k * n;
    }
    Ok((pred_aligned, obs_all, persist_all))
}

fn report_for(
    method: &str,
    levels: &[f64],
    stations: &[String],
    thr: &Thresholds,
    windows: u64,
    accuracy: Option<(f64, f64)>,
) -> Result<MetricsReport> {
    let mut per = threshold_metrics(levels, stations, thr)?;
    if let Some((mae, rmse)) = accuracy {
        for s in per.iter_mut() {
            s.mae = mae;
            s.rmse = rmse;
        }
    }
    let mut aggregate = aggregate_metrics(&per);
    if let Some((mae, rmse)) = accuracy {
        aggregate.mae = mae;
        aggregate.rmse = rmse;
    }
    Ok(MetricsReport { method: method.to_string(), windows, stations: per, aggregate })
}

/// Assembles the full comparison report.
pub fn assess(
    data: &PreparedData,
    evaluator: &EvaluatorModel,
    manager: &ManagerModel,
    topology: &RiverTopology,
    cfg: &AssessConfig,
) -> Result<AssessReport> {
    let stations = station_names(&data.raw);
    let thr = &cfg.thresholds;
    let end_row = data.raw.len() - data.eval_test.k;
    let hours = (end_row - data.split_row) as u64;

    // rule-based replay: the recorded trajectory is the baseline
    let actual = recorded_levels(&data.raw, data.split_row, end_row);
    let rule_report = report_for("rule-based", &actual, &stations, thr, hours, None)?;

    // manager closed-loop through the physics oracle
    let sim_levels = closed_loop_levels(
        manager,
        &data.raw,
        &data.normalizer,
        topology,
        data.split_row,
    )?;
    let manager_report = report_for("manager", &sim_levels, &stations, thr, hours, None)?;

    // manager surrogate t+1 view (paper-style table row)
    let manager_t1 = manager_t1_series(data, evaluator, manager, cfg.batch_size)?;
    let manager_t1_report = report_for(
        "manager-t1",
        &manager_t1,
        &stations,
        thr,
        data.eval_test.len() as u64,
        None,
    )?;

    // evaluator skill: full-horizon forecasts and the persistence bar
    let (pred, obs, persist) =
        horizon_forecasts(evaluator, &data.eval_test, &data.raw_eval_test, cfg.batch_size)?;
    let (ev_mae, ev_rmse) = mae_rmse(&pred, &obs)?;
    let (p_mae, p_rmse) = mae_rmse(&persist, &obs)?;
    let t1 = surrogate_t1_series(evaluator, &data.eval_test, cfg.batch_size)?;
    let evaluator_report = report_for(
        "evaluator",
        &t1,
        &stations,
        thr,
        data.eval_test.len() as u64,
        Some((ev_mae, ev_rmse)),
    )?;
    let persistence_t1: Vec<f64> = {
        // persistence at t+1 equals the last observed level per window
        let mut out = Vec::with_capacity(data.raw_eval_test.len() * stations.len());
        for i in 0..data.raw_eval_test.len() {
            let s = data.raw_eval_test.get(i);
            let past = s.past();
            let layout = s.layout();
            for &c in &layout.water {
                out.push(past[(s.w - 1) * layout.n_all + c]);
            }
        }
        out
    };
    let persistence_report = report_for(
        "persistence",
        &persistence_t1,
        &stations,
        thr,
        data.raw_eval_test.len() as u64,
        Some((p_mae, p_rmse)),
    )?;

    let mut methods = vec![
        rule_report,
        manager_report,
        manager_t1_report,
        evaluator_report,
        persistence_report,
    ];

    // GA on an evenly spaced window subsample
    let mut ga_traces = Vec::new();
    if cfg.with_ga && cfg.ga_windows > 0 {
        let n = data.eval_test.len();
        let take = cfg.ga_windows.min(n);
        let stride = (n / take).max(1);
        let water_cols = water_cols_of(&evaluator.core.normalizer);
        let mut levels = Vec::with_capacity(take * stations.len());
        let mut count = 0u64;
        for i in (0..n).step_by(stride).take(take) {
            let window = data.eval_test.get(i);
            let (result, _calls) =
                ga_optimize(&window, evaluator, thr, &manager.bounds, &cfg.ga)?;
            // score the winning schedule's first-step prediction
            let batch = assemble_batch(&[window])?;
            let mut tape = Tape::inference();
            let sched = Tensor::new(
                vec![batch.k, batch.n_struct],
                result.best.genes.clone(),
            )?;
            let sched_n = evaluator.normalize_schedule(&mut tape, &sched)?;
            let (pred_n, _) = evaluator.forward(&mut tape, &batch, Some(&sched_n))?;
            let first =
                denorm_water(&pred_n.data()[..stations.len()], &evaluator.core.normalizer, &water_cols);
            levels.extend(first);
            ga_traces.push((i, result.trace));
            count += 1;
        }
        methods.push(report_for("ga-t1", &levels, &stations, thr, count, None)?);
    }

    Ok(AssessReport {
        methods,
        evaluator_mae: ev_mae,
        evaluator_rmse: ev_rmse,
        persistence_mae: p_mae,
        persistence_rmse: p_rmse,
        ga_traces,
    })
}

fn manager_t1_series(
    data: &PreparedData,
    evaluator: &EvaluatorModel,
    manager: &ManagerModel,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let water_cols = water_cols_of(&evaluator.core.normalizer);
    let n = water_cols.len();
    let mut out = Vec::with_capacity(data.mgr_test.len() * n);
    let order: Vec<usize> = (0..data.mgr_test.len()).collect();
    for chunk in order.chunks(batch_size) {
        let m_samples: Vec<_> = chunk.iter().map(|&i| data.mgr_test.get(i)).collect();
        let e_samples: Vec<_> = chunk.iter().map(|&i| data.eval_test.get(i)).collect();
        let m_batch = assemble_batch(&m_samples)?;
        let e_batch = assemble_batch(&e_samples)?;
        let mut tape = Tape::inference();
        let (sched, _) = manager.forward(&mut tape, &m_batch)?;
        let sched_n = evaluator.normalize_schedule(&mut tape, &sched)?;
        let (pred, _) = evaluator.forward(&mut tape, &e_batch, Some(&sched_n))?;
        let first = &pred.data()[..m_batch.b * n];
        out.extend(denorm_water(first, &evaluator.core.normalizer, &water_cols));
    }
    Ok(out)
}

/// Wall-clock benchmark of the three scheduling paths.
#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub evaluator_test_total_s: f64,
    pub evaluator_per_window_median_s: f64,
    pub evaluator_per_window_p95_s: f64,
    pub manager_per_window_median_s: f64,
    pub manager_per_window_p95_s: f64,
    pub ga_per_window_median_s: f64,
    pub ga_per_window_p95_s: f64,
    pub ga_calls_per_window: usize,
    /// Median GA time over median manager time.
    pub speedup: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,median_s,p95_s\n");
        s.push_str(&format!(
            "evaluator_window,{},{}\n",
            self.evaluator_per_window_median_s, self.evaluator_per_window_p95_s
        ));
        s.push_str(&format!(
            "manager_window,{},{}\n",
            self.manager_per_window_median_s, self.manager_per_window_p95_s
        ));
        s.push_str(&format!(
            "ga_window,{},{}\n",
            self.ga_per_window_median_s, self.ga_per_window_p95_s
        ));
        s.push_str(&format!("speedup_ga_over_manager,{},\n", self.speedup));
        s
    }
}

fn median_p95(samples: &mut [f64]) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    let median = samples[samples.len() / 2];
    let p95 = samples[((samples.len() as f64 * 0.95) as usize).min(samples.len() - 1)];
    (median, p95)
}

/// Times evaluator inference over the split, manager scheduling per window,
/// and GA search per window (sequential forecaster calls, like-for-like).
pub fn bench(
    data: &PreparedData,
    evaluator: &EvaluatorModel,
    manager: &ManagerModel,
    thresholds: &Thresholds,
    ga_cfg: &GaConfig,
    manager_windows: usize,
    ga_windows: usize,
) -> Result<BenchReport> {
    // (a) evaluator over the whole test split, batched
    let start = Instant::now();
    let _ = surrogate_t1_series(evaluator, &data.eval_test, 512)?;
    let evaluator_total = start.elapsed().as_secs_f64();

    // per-window evaluator forwards
    let n = data.eval_test.len();
    let take = manager_windows.min(n).max(1);
    let stride = (n / take).max(1);
    let mut ev_times = Vec::new();
    let mut mgr_times = Vec::new();
    for i in (0..n).step_by(stride).take(take) {
        let e_batch = assemble_batch(&[data.eval_test.get(i)])?;
        let m_batch = assemble_batch(&[data.mgr_test.get(i)])?;
        let mut tape = Tape::inference();
        let start = Instant::now();
        let _ = evaluator.forward(&mut tape, &e_batch, None)?;
        ev_times.push(start.elapsed().as_secs_f64());
        let start = Instant::now();
        let _ = manager.forward(&mut tape, &m_batch)?;
        mgr_times.push(start.elapsed().as_secs_f64());
    }

    let ga_take = ga_windows.min(n).max(1);
    let ga_stride = (n / ga_take).max(1);
    let mut ga_times = Vec::new();
    let mut ga_calls = 0usize;
    for i in (0..n).step_by(ga_stride).take(ga_take) {
        let window = data.eval_test.get(i);
        let start = Instant::now();
        let (_, calls) = ga_optimize(&window, evaluator, thresholds, &manager.bounds, ga_cfg)?;
        ga_times.push(start.elapsed().as_secs_f64());
        ga_calls = calls;
    }

    let (ev_med, ev_p95) = median_p95(&mut ev_times);
    let (mgr_med, mgr_p95) = median_p95(&mut mgr_times);
    let (ga_med, ga_p95) = median_p95(&mut ga_times);
    Ok(BenchReport {
        evaluator_test_total_s: evaluator_total,
        evaluator_per_window_median_s: ev_med,
        evaluator_per_window_p95_s: ev_p95,
        manager_per_window_median_s: mgr_med,
        manager_per_window_p95_s: mgr_p95,
        ga_per_window_median_s: ga_med,
        ga_per_window_p95_s: ga_p95,
        ga_calls_per_window: ga_calls,
        speedup: ga_med / mgr_med,
    })
}
