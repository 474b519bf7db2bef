//! Hourly multivariate frames, CSV ingestion, sliding windows and the
//! chronological split.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default look-back window length in hours.
pub const W_DEFAULT: usize = 72;
/// Default prediction horizon in hours.
pub const K_DEFAULT: usize = 24;

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Variable class of a column, inferred from its header prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarClass {
    Rain,
    Tide,
    Gate,
    Pump,
    Water,
}

impl VarClass {
    pub fn from_column_name(name: &str) -> Result<(VarClass, String)> {
        for (prefix, class) in [
            ("RAIN_", VarClass::Rain),
            ("TIDE_", VarClass::Tide),
            ("GATE_", VarClass::Gate),
            ("PUMP_", VarClass::Pump),
            ("WS_", VarClass::Water),
        ] {
            if let Some(rest) = name.strip_prefix(prefix) {
                return Ok((class, rest.to_string()));
            }
        }
        Err(Error::Schema(format!("unknown column prefix in '{name}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub class: VarClass,
    pub station: String,
    pub values: Vec<f64>,
}

/// Aligned hourly multivariate series. Rows are implicitly spaced 1 h apart
/// starting at `start`; the loader enforces that on the way in.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesFrame {
    start: NaiveDateTime,
    columns: Vec<Column>,
}

impl TimeSeriesFrame {
    pub fn new(start: NaiveDateTime, columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("frame has no columns".to_string()));
        }
        let len = columns[0].values.len();
        for c in &columns {
            if c.values.len() != len {
                return Err(Error::Schema(format!(
                    "column {} has {} rows, expected {len}",
                    c.name,
                    c.values.len()
                )));
            }
            if let Some(v) = c.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Ingest(format!("non-finite value {v} in column {}", c.name)));
            }
        }
        Ok(TimeSeriesFrame { start, columns })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn len(&self) -> usize {
        self.columns[0].values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn timestamp(&self, row: usize) -> NaiveDateTime {
        self.start + Duration::hours(row as i64)
    }

    /// Counts per variable class, for schema validation.
    pub fn class_counts(&self) -> BTreeMap<VarClass, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.columns {
            *counts.entry(c.class).or_insert(0) += 1;
        }
        counts
    }

    /// One row across all columns, in column order.
    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.values[row]).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<&str> = std::iter::once("timestamp")
            .chain(self.columns.iter().map(|c| c.name.as_str()))
            .collect();
        writeln!(file, "{}", header.join(","))?;
        for r in 0..self.len() {
            let mut line = self.timestamp(r).format(TS_FORMAT).to_string();
            for c in &self.columns {
                line.push(',');
                line.push_str(&format_f64(c.values[r]));
            }
            writeln!(file, "{line}")?;
        }
        file.flush()?;
        Ok(())
    }
}

/// f64 formatting that round-trips exactly through parse.
fn format_f64(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Loads the canonical CSV, enforcing the hourly-gapless invariant and the
/// default 1/1/3/2/4 class counts.
pub fn load_csv(path: &Path) -> Result<TimeSeriesFrame> {
    load_csv_with_counts(path, Some([1, 1, 3, 2, 4]))
}

/// Loads a frame, optionally checking (rain, tide, gate, pump, water) counts.
pub fn load_csv_with_counts(
    path: &Path,
    expect: Option<[usize; 5]>,
) -> Result<TimeSeriesFrame> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.get(0) != Some("timestamp") {
        return Err(Error::Schema("first column must be 'timestamp'".to_string()));
    }
    let mut columns: Vec<Column> = headers
        .iter()
        .skip(1)
        .map(|name| {
            let (class, station) = VarClass::from_column_name(name)?;
            Ok(Column { name: name.to_string(), class, station, values: Vec::new() })
        })
        .collect::<Result<_>>()?;

    let mut start: Option<NaiveDateTime> = None;
    let mut prev: Option<NaiveDateTime> = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let ts_raw = record
            .get(0)
            .ok_or_else(|| Error::Ingest(format!("row {i}: empty record")))?;
        let ts = NaiveDateTime::parse_from_str(ts_raw, TS_FORMAT)
            .map_err(|e| Error::Ingest(format!("row {i}: bad timestamp '{ts_raw}': {e}")))?;
        if let Some(p) = prev {
            let expected = p + Duration::hours(1);
            if ts != expected {
                return Err(Error::Ingest(format!(
                    "gap in timestamps at row {i}: expected {}, found {}",
                    expected.format(TS_FORMAT),
                    ts.format(TS_FORMAT)
                )));
            }
        } else {
            start = Some(ts);
        }
        prev = Some(ts);
        if record.len() != columns.len() + 1 {
            return Err(Error::Ingest(format!(
                "row {i}: {} fields, expected {}",
                record.len(),
                columns.len() + 1
            )));
        }
        for (c, field) in columns.iter_mut().zip(record.iter().skip(1)) {
            let v: f64 = field
                .parse()
                .map_err(|e| Error::Ingest(format!("row {i}, column {}: {e}", c.name)))?;
            if !v.is_finite() {
                return Err(Error::Ingest(format!("row {i}, column {}: non-finite value", c.name)));
            }
            c.values.push(v);
        }
    }
    let start = start.ok_or_else(|| Error::Ingest("file has no data rows".to_string()))?;

    if let Some([rain, tide, gate, pump, water]) = expect {
        let counts = {
            let mut m = BTreeMap::new();
            for c in &columns {
                *m.entry(c.class).or_insert(0usize) += 1;
            }
            m
        };
        let got = [
            counts.get(&VarClass::Rain).copied().unwrap_or(0),
            counts.get(&VarClass::Tide).copied().unwrap_or(0),
            counts.get(&VarClass::Gate).copied().unwrap_or(0),
            counts.get(&VarClass::Pump).copied().unwrap_or(0),
            counts.get(&VarClass::Water).copied().unwrap_or(0),
        ];
        if got != [rain, tide, gate, pump, water] {
            return Err(Error::Schema(format!(
                "class counts (rain,tide,gate,pump,water) = {got:?}, expected {:?}",
                [rain, tide, gate, pump, water]
            )));
        }
    }

    TimeSeriesFrame::new(start, columns)
}

/// SHA-256 of a file's bytes, for dataset manifests.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

// ── variable layout ─────────────────────────────────────────────────

/// Column indices grouped by class; fixes the ordering of model inputs.
/// Covariate blocks are laid out class-major (rain, tide, gate, pump).
#[derive(Clone, Debug, PartialEq)]
pub struct VarLayout {
    pub rain: Vec<usize>,
    pub tide: Vec<usize>,
    pub gate: Vec<usize>,
    pub pump: Vec<usize>,
    pub water: Vec<usize>,
    pub n_all: usize,
}

impl VarLayout {
    pub fn of(frame: &TimeSeriesFrame) -> Self {
        let mut l = VarLayout {
            rain: Vec::new(),
            tide: Vec::new(),
            gate: Vec::new(),
            pump: Vec::new(),
            water: Vec::new(),
            n_all: frame.columns().len(),
        };
        for (i, c) in frame.columns().iter().enumerate() {
            match c.class {
                VarClass::Rain => l.rain.push(i),
                VarClass::Tide => l.tide.push(i),
                VarClass::Gate => l.gate.push(i),
                VarClass::Pump => l.pump.push(i),
                VarClass::Water => l.water.push(i),
            }
        }
        l
    }

    /// Forecastable covariates only: what the manager may see of the future.
    pub fn cov_manager(&self) -> Vec<usize> {
        [self.rain.clone(), self.tide.clone()].concat()
    }

    /// Covariates plus controls: what the evaluator sees of the future.
    pub fn cov_evaluator(&self) -> Vec<usize> {
        [self.rain.clone(), self.tide.clone(), self.gate.clone(), self.pump.clone()].concat()
    }

    /// Gate and pump columns, the manager's output slots.
    pub fn structures(&self) -> Vec<usize> {
        [self.gate.clone(), self.pump.clone()].concat()
    }

    pub fn n_water(&self) -> usize {
        self.water.len()
    }

    pub fn n_structures(&self) -> usize {
        self.gate.len() + self.pump.len()
    }
}

// ── windows ─────────────────────────────────────────────────────────

/// Whether future gate/pump columns belong to the inputs (evaluator) or the
/// targets (manager).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowMode {
    Evaluator,
    Manager,
}

/// A set of stride-1 sliding windows over one frame.
#[derive(Clone, Debug)]
pub struct WindowSet {
    frame: Arc<TimeSeriesFrame>,
    layout: VarLayout,
    pub w: usize,
    pub k: usize,
    pub mode: WindowMode,
    starts: Vec<usize>,
}

/// One training instance: `w` past steps of everything, `k` future steps of
/// covariates, and `k` future steps of targets. Blocks are materialized on
/// demand from the backing frame.
#[derive(Clone, Debug)]
pub struct WindowSample {
    frame: Arc<TimeSeriesFrame>,
    layout: VarLayout,
    pub w: usize,
    pub k: usize,
    pub mode: WindowMode,
    pub start: usize,
}

/// Builds all `T - w - k + 1` stride-1 windows.
pub fn make_windows(
    frame: &Arc<TimeSeriesFrame>,
    w: usize,
    k: usize,
    mode: WindowMode,
) -> Result<WindowSet> {
    if w == 0 || k == 0 {
        return Err(Error::Config("window lengths must be positive".to_string()));
    }
    let t = frame.len();
    if t < w + k {
        return Err(Error::Config(format!(
            "frame has {t} rows; need at least w + k = {}",
            w + k
        )));
    }
    Ok(WindowSet {
        frame: Arc::clone(frame),
        layout: VarLayout::of(frame),
        w,
        k,
        mode,
        starts: (0..=t - w - k).collect(),
    })
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    pub fn frame(&self) -> &Arc<TimeSeriesFrame> {
        &self.frame
    }

    pub fn get(&self, i: usize) -> WindowSample {
        WindowSample {
            frame: Arc::clone(&self.frame),
            layout: self.layout.clone(),
            w: self.w,
            k: self.k,
            mode: self.mode,
            start: self.starts[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = WindowSample> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Keeps every `stride`-th window (training thin-out; stride 1 keeps all).
    pub fn strided(&self, stride: usize) -> WindowSet {
        let mut out = self.clone();
        out.starts = self.starts.iter().copied().step_by(stride.max(1)).collect();
        out
    }

    /// Sub-range by window position (windows are already in time order).
    pub fn slice(&self, from: usize, to: usize) -> WindowSet {
        let mut out = self.clone();
        out.starts = self.starts[from..to].to_vec();
        out
    }

    /// Same windows with the selected positions only.
    pub fn subset(&self, positions: &[usize]) -> WindowSet {
        let mut out = self.clone();
        out.starts = positions.iter().map(|&i| self.starts[i]).collect();
        out
    }

    /// Same windows viewed in the other mode (future covariate composition
    /// and targets change; starts stay identical).
    pub fn with_mode(&self, mode: WindowMode) -> WindowSet {
        let mut out = self.clone();
        out.mode = mode;
        out
    }

    /// First row index never touched by these windows' past or target blocks.
    pub fn rows_touched(&self) -> usize {
        self.starts.last().map_or(0, |s| s + self.w + self.k)
    }
}

impl WindowSample {
    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    /// Column names of the backing frame, in frame order.
    pub fn frame_columns(&self) -> Vec<String> {
        self.frame.columns().iter().map(|c| c.name.clone()).collect()
    }

    fn gather(&self, rows: std::ops::Range<usize>, cols: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for r in rows {
            for &c in cols {
                out.push(self.frame.columns()[c].values[r]);
            }
        }
        out
    }

    /// `w x n_all` block of all variables, row-major over time.
    pub fn past(&self) -> Vec<f64> {
        let all: Vec<usize> = (0..self.layout.n_all).collect();
        self.gather(self.start..self.start + self.w, &all)
    }

    /// `k x n_cov` future covariate block; composition depends on the mode.
    pub fn future_cov(&self) -> Vec<f64> {
        let cols = match self.mode {
            WindowMode::Evaluator => self.layout.cov_evaluator(),
            WindowMode::Manager => self.layout.cov_manager(),
        };
        self.gather(self.start + self.w..self.start + self.w + self.k, &cols)
    }

    /// `k x n_target` block: water levels (evaluator) or controls (manager).
    pub fn target(&self) -> Vec<f64> {
        let cols = match self.mode {
            WindowMode::Evaluator => self.layout.water.clone(),
            WindowMode::Manager => self.layout.structures(),
        };
        self.gather(self.start + self.w..self.start + self.w + self.k, &cols)
    }

    pub fn n_cov(&self) -> usize {
        match self.mode {
            WindowMode::Evaluator => self.layout.cov_evaluator().len(),
            WindowMode::Manager => self.layout.cov_manager().len(),
        }
    }
}

/// Splits windows chronologically: first `floor(frac * N)` train, rest test.
pub fn chronological_split(set: &WindowSet, train_fraction: f64) -> (WindowSet, WindowSet) {
    let n_train = (train_fraction * set.len() as f64).floor() as usize;
    (set.slice(0, n_train), set.slice(n_train, set.len()))
}

// ── normalization ───────────────────────────────────────────────────

/// Per-column z-score statistics, fitted on training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Pass-through statistics (mean 0, std 1), mostly for tests.
    pub fn identity(columns: Vec<String>) -> Normalizer {
        let n = columns.len();
        Normalizer { columns, mean: vec![0.0; n], std: vec![1.0; n] }
    }

    /// Fits on rows `[0, n_rows)` of the frame.
    pub fn fit(frame: &TimeSeriesFrame, n_rows: usize) -> Result<Self> {
        let n_rows = n_rows.min(frame.len());
        if n_rows == 0 {
            return Err(Error::Config("normalizer needs at least one row".to_string()));
        }
        let mut columns = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for c in frame.columns() {
            let vals = &c.values[..n_rows];
            let m = vals.iter().sum::<f64>() / n_rows as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n_rows as f64;
            let s = var.sqrt();
            columns.push(c.name.clone());
            mean.push(m);
            std.push(if s < 1e-12 { 1.0 } else { s });
        }
        Ok(Normalizer { columns, mean, std })
    }

    pub fn normalize_frame(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        if frame.columns().len() != self.columns.len() {
            return Err(Error::Schema("normalizer/frame column mismatch".to_string()));
        }
        let columns = frame
            .columns()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if c.name != self.columns[i] {
                    return Err(Error::Schema(format!(
                        "column order mismatch: {} vs {}",
                        c.name, self.columns[i]
                    )));
                }
                Ok(Column {
                    name: c.name.clone(),
                    class: c.class,
                    station: c.station.clone(),
                    values: c
                        .values
                        .iter()
                        .map(|v| (v - self.mean[i]) / self.std[i])
                        .collect(),
                })
            })
            .collect::<Result<_>>()?;
        TimeSeriesFrame::new(frame.start(), columns)
    }

    pub fn normalize_value(&self, col: usize, v: f64) -> f64 {
        (v - self.mean[col]) / self.std[col]
    }

    pub fn denormalize_value(&self, col: usize, v: f64) -> f64 {
        v * self.std[col] + self.mean[col]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_frame(rows: usize) -> Arc<TimeSeriesFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = NaiveDateTime::parse_from_str("2020-01-01T00:00:00", TS_FORMAT).unwrap();
        let names = [
            "RAIN_1", "TIDE_S4", "GATE_S26", "GATE_S25B", "GATE_S25A", "PUMP_S26", "PUMP_S25B",
            "WS_S1", "WS_S26", "WS_S25B", "WS_S25A",
        ];
        let columns = names
            .iter()
            .map(|n| {
                let (class, station) = VarClass::from_column_name(n).unwrap();
                Column {
                    name: n.to_string(),
                    class,
                    station,
                    values: (0..rows).map(|_| rng.gen_range(-1.0..4.0)).collect(),
                }
            })
            .collect();
        Arc::new(TimeSeriesFrame::new(start, columns).unwrap())
    }

    #[test]
    fn csv_roundtrip_is_identical() {
        let frame = toy_frame(120);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.csv");
        frame.write_csv(&path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(*frame, back);
    }

    #[test]
    fn gap_detection_names_timestamp() {
        let frame = toy_frame(100);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.csv");
        frame.write_csv(&path).unwrap();
        // drop one line in the middle
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut trimmed = lines.clone();
        trimmed.remove(50);
        std::fs::write(&path, trimmed.join("\n")).unwrap();
        let err = load_csv(&path).unwrap_err().to_string();
        assert!(err.contains("2020-01-03T01:00:00"), "{err}");
    }

    #[test]
    fn default_file_has_expected_class_counts() {
        let frame = toy_frame(96);
        let counts = frame.class_counts();
        assert_eq!(counts[&VarClass::Rain], 1);
        assert_eq!(counts[&VarClass::Tide], 1);
        assert_eq!(counts[&VarClass::Gate], 3);
        assert_eq!(counts[&VarClass::Pump], 2);
        assert_eq!(counts[&VarClass::Water], 4);
    }

    #[test]
    fn unknown_prefix_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "timestamp,BOGUS_X\n2020-01-01T00:00:00,1.0\n").unwrap();
        match load_csv_with_counts(&path, None) {
            Err(Error::Schema(msg)) => assert!(msg.contains("BOGUS_X")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn window_counts() {
        let frame = toy_frame(96);
        let set = make_windows(&frame, 72, 24, WindowMode::Evaluator).unwrap();
        assert_eq!(set.len(), 1);
        let frame = toy_frame(100);
        let set = make_windows(&frame, 72, 24, WindowMode::Evaluator).unwrap();
        assert_eq!(set.len(), 5);
        assert!(make_windows(&toy_frame(95), 72, 24, WindowMode::Manager).is_err());
    }

    #[test]
    fn future_cov_widths_per_mode() {
        let frame = toy_frame(100);
        let eval = make_windows(&frame, 72, 24, WindowMode::Evaluator).unwrap();
        assert_eq!(eval.get(0).n_cov(), 7);
        assert_eq!(eval.get(0).future_cov().len(), 24 * 7);
        let mgr = make_windows(&frame, 72, 24, WindowMode::Manager).unwrap();
        assert_eq!(mgr.get(0).n_cov(), 2);
        assert_eq!(mgr.get(0).future_cov().len(), 24 * 2);
        // targets: water for evaluator, controls for manager
        assert_eq!(eval.get(0).target().len(), 24 * 4);
        assert_eq!(mgr.get(0).target().len(), 24 * 5);
    }

    #[test]
    fn split_counts_and_order() {
        let frame = toy_frame(96 + 9);
        let set = make_windows(&frame, 72, 24, WindowMode::Evaluator).unwrap();
        assert_eq!(set.len(), 10);
        let (train, test) = chronological_split(&set, 0.8);
        assert_eq!((train.len(), test.len()), (8, 2));
        let max_train = (0..train.len()).map(|i| train.get(i).start).max().unwrap();
        let min_test = (0..test.len()).map(|i| test.get(i).start).min().unwrap();
        assert!(max_train < min_test);

        let frame = toy_frame(96 + 6);
        let set = make_windows(&frame, 72, 24, WindowMode::Evaluator).unwrap();
        assert_eq!(set.len(), 7);
        let (train, test) = chronological_split(&set, 0.8);
        assert_eq!((train.len(), test.len()), (5, 2));
    }

    #[test]
    fn no_leakage_past_windows_end_before_test_targets() {
        let frame = toy_frame(200);
        let set = make_windows(&frame, 72, 24, WindowMode::Evaluator).unwrap();
        let (train, test) = chronological_split(&set, 0.8);
        let latest_train_past_end = (0..train.len())
            .map(|i| train.get(i).start + train.w - 1)
            .max()
            .unwrap();
        let earliest_test_target = (0..test.len()).map(|i| test.get(i).start + test.w).min().unwrap();
        assert!(latest_train_past_end < earliest_test_target);
    }

    #[test]
    fn stride1_windows_reconstruct_frame() {
        let frame = toy_frame(140);
        let set = make_windows(&frame, 72, 24, WindowMode::Evaluator).unwrap();
        // row r of the frame equals row 0 of window r's past block, for all
        // window starts; remaining rows come from the final window
        let n_all = set.layout().n_all;
        let mut rebuilt: Vec<Vec<f64>> = Vec::new();
        for i in 0..set.len() {
            let past = set.get(i).past();
            rebuilt.push(past[..n_all].to_vec());
        }
        let last = set.get(set.len() - 1);
        let tail = last.past();
        for r in 1..set.w {
            rebuilt.push(tail[r * n_all..(r + 1) * n_all].to_vec());
        }
        let fut_rows = {
            let all: Vec<usize> = (0..n_all).collect();
            last.gather(last.start + last.w..last.start + last.w + last.k, &all)
        };
        for r in 0..set.k {
            rebuilt.push(fut_rows[r * n_all..(r + 1) * n_all].to_vec());
        }
        assert_eq!(rebuilt.len(), frame.len());
        for (r, row) in rebuilt.iter().enumerate() {
            assert_eq!(*row, frame.row(r), "row {r}");
        }
    }

    #[test]
    fn normalizer_roundtrip_and_test_invariance() {
        let frame = toy_frame(150);
        let norm = Normalizer::fit(&frame, 100).unwrap();
        for col in 0..frame.columns().len() {
            for v in [-1.5, 0.0, 2.75] {
                let round = norm.denormalize_value(col, norm.normalize_value(col, v));
                assert!((round - v).abs() < 1e-12);
            }
        }
        // perturbing rows beyond the fit range leaves statistics untouched
        let mut mutated = (*frame).clone();
        let columns: Vec<Column> = mutated
            .columns()
            .iter()
            .map(|c| {
                let mut c = c.clone();
                for v in c.values.iter_mut().skip(100) {
                    *v += 100.0;
                }
                c
            })
            .collect();
        mutated = TimeSeriesFrame::new(frame.start(), columns).unwrap();
        let norm2 = Normalizer::fit(&mutated, 100).unwrap();
        assert_eq!(norm, norm2);
    }
}
