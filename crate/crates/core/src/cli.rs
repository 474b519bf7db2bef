//! Operator-facing command surface: simulate, train both phases, assess,
//! benchmark, explain, mitigate. Every command drops a manifest beside its
//! outputs so a run can be reproduced from the run directory alone.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::assess::{assess, bench, AssessConfig};
use crate::baselines::GaConfig;
use crate::data::{file_sha256, load_csv, K_DEFAULT, W_DEFAULT};
use crate::error::Error;
use crate::losses::Thresholds;
use crate::models::{Arch, EvaluatorModel, ManagerModel};
use crate::sim::{generate_dataset, to_physical, RiverTopology};
use crate::training::{
    benchmark_evaluator_config, benchmark_manager_config, prepare, train_evaluator, train_manager,
    TrainConfig,
};

/// Exit status plus a message for stderr.
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn io(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn validation(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Capability(_) | Error::Csv(_) => 2,
            _ => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "floodctl",
    about = "Gradient-based gate/pump pre-release scheduling on a synthetic coastal river",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic hourly dataset under rule-based control.
    Simulate(SimulateArgs),
    /// Phase 1: train the water-level forecaster.
    TrainEvaluator(TrainEvaluatorArgs),
    /// Phase 2: train the schedule generator against a frozen forecaster.
    TrainManager(TrainManagerArgs),
    /// Compare rule-based, GA and manager schedules on the test split.
    Assess(AssessArgs),
    /// Wall-clock comparison of scheduling paths.
    Bench(BenchArgs),
    /// Export one cross-attention heatmap as a CSV matrix.
    Explain(ExplainArgs),
    /// Emit the manager schedule and predicted levels for one window.
    Mitigate(MitigateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 20_000)]
    hours: usize,
    /// Output CSV path (defaults to <run-dir>/dataset.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a sidecar CSV with gate/pump columns in physical units.
    #[arg(long, default_value_t = false)]
    physical: bool,
}

#[derive(Args, Clone)]
struct TrainCommonArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "gtn")]
    arch: String,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = W_DEFAULT)]
    w: usize,
    #[arg(long, default_value_t = K_DEFAULT)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainEvaluatorArgs {
    #[command(flatten)]
    common: TrainCommonArgs,
}

#[derive(Args)]
struct TrainManagerArgs {
    #[command(flatten)]
    common: TrainCommonArgs,
    /// Frozen evaluator checkpoint from phase 1.
    #[arg(long)]
    evaluator: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// "upper,lower" stage thresholds in feet.
    #[arg(long, default_value = "3.5,0.0")]
    thresholds: String,
    /// Train only on windows whose observed levels violate a threshold.
    #[arg(long, default_value_t = false)]
    violations_only: bool,
}

#[derive(Args)]
struct AssessArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    evaluator: PathBuf,
    #[arg(long)]
    manager: PathBuf,
    #[arg(long, default_value = "3.5,0.0")]
    thresholds: String,
    #[arg(long, default_value_t = 8)]
    ga_windows: usize,
    /// Skip the GA row entirely.
    #[arg(long, default_value_t = false)]
    no_ga: bool,
    #[arg(long, default_value_t = 7)]
    ga_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    evaluator: PathBuf,
    #[arg(long)]
    manager: PathBuf,
    #[arg(long, default_value = "3.5,0.0")]
    thresholds: String,
    /// Windows timed for per-window paths.
    #[arg(long, default_value_t = 20)]
    windows: usize,
    /// Windows given to the (slow) GA path.
    #[arg(long, default_value_t = 3)]
    ga_windows: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    data: PathBuf,
    /// GTN checkpoint (evaluator or manager role).
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    window: usize,
    /// Covariate column name, e.g. TIDE_S4.
    #[arg(long, default_value = "TIDE_S4")]
    covariate: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MitigateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    evaluator: PathBuf,
    #[arg(long)]
    manager: PathBuf,
    /// Test-split window index to schedule for.
    #[arg(long, default_value_t = 0)]
    window: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses and dispatches; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version output
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::TrainEvaluator(args) => cmd_train_evaluator(args),
        Command::TrainManager(args) => cmd_train_manager(args),
        Command::Assess(args) => cmd_assess(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Mitigate(args) => cmd_mitigate(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Run-directory layout: config.json, dataset.csv, checkpoints/, reports/,
/// traces/. The root comes from --out or FLOODCTL_DIR (default ./runs).
struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn resolve(out: Option<PathBuf>) -> Result<RunDir, CliError> {
        let root = out.unwrap_or_else(|| {
            std::env::var_os("FLOODCTL_DIR").map(PathBuf::from).unwrap_or_else(|| "runs".into())
        });
        std::fs::create_dir_all(&root)
            .map_err(|e| CliError::io(format!("cannot create run dir {root:?}: {e}")))?;
        Ok(RunDir { root })
    }

    fn sub(&self, name: &str) -> Result<PathBuf, CliError> {
        let dir = self.root.join(name);
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::io(format!("cannot create {dir:?}: {e}")))?;
        Ok(dir)
    }

    fn manifest(&self, command: &str, payload: serde_json::Value) -> Result<(), CliError> {
        let path = self.root.join(format!("manifest-{command}.json"));
        let doc = json!({ "command": command, "details": payload });
        std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap())
            .map_err(|e| CliError::io(format!("cannot write {path:?}: {e}")))?;
        Ok(())
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::io(format!("{what} not found: {path:?}")));
    }
    Ok(())
}

fn parse_thresholds(text: &str, n_stations: usize) -> Result<Thresholds, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::validation(format!(
            "thresholds must be \"upper,lower\", got '{text}'"
        )));
    }
    let upper: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|e| CliError::validation(format!("bad upper threshold: {e}")))?;
    let lower: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|e| CliError::validation(format!("bad lower threshold: {e}")))?;
    Ok(Thresholds::uniform(n_stations, upper, lower)?)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let min_hours = W_DEFAULT + K_DEFAULT;
    if args.hours < min_hours {
        return Err(CliError::io(format!(
            "hours must be at least w + k = {min_hours}, got {}",
            args.hours
        )));
    }
    let run = RunDir::resolve(args.out.as_ref().and_then(|p| p.parent().map(PathBuf::from)))?;
    let out_path = args.out.clone().unwrap_or_else(|| run.root.join("dataset.csv"));
    let topology = RiverTopology::default_two_branch();
    let frame = generate_dataset(args.seed, args.hours, &topology)?;
    frame.write_csv(&out_path)?;

    if args.physical {
        let physical_path = out_path.with_extension("physical.csv");
        write_physical_csv(&frame, &topology, &physical_path)?;
    }

    let hash = file_sha256(&out_path)?;
    run.manifest(
        "simulate",
        json!({
            "seed": args.seed,
            "hours": args.hours,
            "out": out_path,
            "dataset_sha256": hash,
        }),
    )?;
    println!("wrote {} rows to {}", args.hours, out_path.display());
    Ok(())
}

/// Sidecar CSV with gate openings in feet and pump rates in ft^3/s.
fn write_physical_csv(
    frame: &crate::data::TimeSeriesFrame,
    topology: &RiverTopology,
    path: &Path,
) -> Result<(), Error> {
    let mut scaled = frame.clone();
    let columns: Vec<crate::data::Column> = scaled
        .columns()
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if let Some(s) = topology.structures.iter().find(|s| s.id == c.name) {
                for v in c.values.iter_mut() {
                    *v = to_physical(s, *v);
                }
            }
            c
        })
        .collect();
    scaled = crate::data::TimeSeriesFrame::new(frame.start(), columns)?;
    scaled.write_csv(path)
}

fn build_config(common: &TrainCommonArgs, base: TrainConfig) -> Result<TrainConfig, CliError> {
    let mut cfg = base;
    cfg.arch = Arch::parse(&common.arch)?;
    cfg.seed = common.seed;
    if let Some(lr) = common.lr {
        cfg.lr = lr;
    }
    if let Some(epochs) = common.epochs {
        cfg.max_epochs = epochs;
        cfg.patience = cfg.patience.min(epochs);
    }
    if let Some(p) = common.patience {
        cfg.patience = p;
    }
    if let Some(b) = common.batch {
        cfg.batch_size = b;
    }
    if let Some(s) = common.stride {
        cfg.train_stride = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train_evaluator(args: TrainEvaluatorArgs) -> CliResult {
    let common = &args.common;
    require_file(&common.data, "dataset")?;
    let run = RunDir::resolve(common.out.clone())?;
    let cfg = build_config(common, benchmark_evaluator_config())?;

    let frame = Arc::new(load_csv(&common.data)?);
    let data = prepare(frame, common.w, common.k, 0.8)?;
    let topology = RiverTopology::default_two_branch();
    let (mut model, mut manifest) =
        train_evaluator(&data.eval_train, &data.normalizer, &topology.adjacency, &cfg)?;
    manifest.dataset_hash = Some(file_sha256(&common.data)?);
    model.freeze();

    let ckpt = run.sub("checkpoints")?.join("evaluator.json");
    model.save(&ckpt)?;
    std::fs::write(
        run.root.join("evaluator_manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(|e| CliError::io(e.to_string()))?;
    run.manifest(
        "train-evaluator",
        json!({
            "data": common.data,
            "dataset_sha256": manifest.dataset_hash,
            "config": cfg,
            "checkpoint": ckpt,
            "fingerprint": model.fingerprint(),
        }),
    )?;
    println!("evaluator checkpoint: {}", ckpt.display());
    Ok(())
}

fn cmd_train_manager(args: TrainManagerArgs) -> CliResult {
    let common = &args.common;
    require_file(&common.data, "dataset")?;
    require_file(&args.evaluator, "evaluator checkpoint")?;
    let run = RunDir::resolve(common.out.clone())?;
    let mut cfg = build_config(common, benchmark_manager_config())?;
    cfg.alpha = args.alpha;
    cfg.beta = args.beta;
    cfg.violations_only = args.violations_only;
    cfg.validate()?;

    let evaluator = EvaluatorModel::load(&args.evaluator)?;
    let frame = Arc::new(load_csv(&common.data)?);
    let data = prepare(frame, common.w, common.k, 0.8)?;
    let topology = RiverTopology::default_two_branch();
    let thresholds = parse_thresholds(&args.thresholds, topology.n_stations())?;
    let (model, mut manifest) = train_manager(
        &data.mgr_train,
        &evaluator,
        &thresholds,
        &topology.adjacency,
        topology.control_bounds(),
        &cfg,
    )?;
    manifest.dataset_hash = Some(file_sha256(&common.data)?);

    let ckpt = run.sub("checkpoints")?.join("manager.json");
    model.save(&ckpt)?;
    std::fs::write(
        run.root.join("manager_manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(|e| CliError::io(e.to_string()))?;
    run.manifest(
        "train-manager",
        json!({
            "data": common.data,
            "dataset_sha256": manifest.dataset_hash,
            "evaluator": args.evaluator,
            "evaluator_fingerprint": manifest.evaluator_fingerprint,
            "config": cfg,
            "checkpoint": ckpt,
            "fingerprint": model.fingerprint(),
        }),
    )?;
    println!("manager checkpoint: {}", ckpt.display());
    Ok(())
}

fn cmd_assess(args: AssessArgs) -> CliResult {
    require_file(&args.data, "dataset")?;
    require_file(&args.evaluator, "evaluator checkpoint")?;
    require_file(&args.manager, "manager checkpoint")?;
    let run = RunDir::resolve(args.out.clone())?;

    let evaluator = EvaluatorModel::load(&args.evaluator)?;
    let manager = ManagerModel::load(&args.manager)?;
    let frame = Arc::new(load_csv(&args.data)?);
    let io = &evaluator.core.io;
    let data = prepare(frame, io.w, io.k, 0.8)?;
    let topology = RiverTopology::default_two_branch();
    let thresholds = parse_thresholds(&args.thresholds, topology.n_stations())?;

    let mut cfg = AssessConfig::new(thresholds);
    cfg.ga_windows = args.ga_windows;
    cfg.with_ga = !args.no_ga;
    cfg.ga = GaConfig { seed: args.ga_seed, ..GaConfig::default() };
    let report = assess(&data, &evaluator, &manager, &topology, &cfg)?;

    let reports = run.sub("reports")?;
    let csv_path = reports.join("assessment.csv");
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| CliError::io(e.to_string()))?;
    let json_path = reports.join("assessment.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report).unwrap())
        .map_err(|e| CliError::io(e.to_string()))?;

    let traces = run.sub("traces")?;
    for (window, trace) in &report.ga_traces {
        let mut text = String::from("generation,best,mean\n");
        for g in trace {
            text.push_str(&format!("{},{},{}\n", g.generation, g.best, g.mean));
        }
        std::fs::write(traces.join(format!("ga_window_{window}.csv")), text)
            .map_err(|e| CliError::io(e.to_string()))?;
    }

    run.manifest(
        "assess",
        json!({
            "data": args.data,
            "dataset_sha256": file_sha256(&args.data)?,
            "evaluator": args.evaluator,
            "evaluator_fingerprint": evaluator.fingerprint(),
            "manager": args.manager,
            "manager_fingerprint": manager.fingerprint(),
            "thresholds": args.thresholds,
            "ga_windows": args.ga_windows,
            "ga_seed": args.ga_seed,
            "with_ga": !args.no_ga,
            "report_csv": csv_path,
        }),
    )?;
    for m in &report.methods {
        println!(
            "{:12} over_ts {:6} over_area {:10.3} under_ts {:6} under_area {:10.3}",
            m.method,
            m.aggregate.over_timesteps,
            m.aggregate.over_area,
            m.aggregate.under_timesteps,
            m.aggregate.under_area
        );
    }
    println!(
        "evaluator MAE {:.4} RMSE {:.4} | persistence MAE {:.4}",
        report.evaluator_mae, report.evaluator_rmse, report.persistence_mae
    );
    println!("report: {}", csv_path.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    require_file(&args.data, "dataset")?;
    require_file(&args.evaluator, "evaluator checkpoint")?;
    require_file(&args.manager, "manager checkpoint")?;
    let run = RunDir::resolve(args.out.clone())?;

    let evaluator = EvaluatorModel::load(&args.evaluator)?;
    let manager = ManagerModel::load(&args.manager)?;
    let frame = Arc::new(load_csv(&args.data)?);
    let io = &evaluator.core.io;
    let data = prepare(frame, io.w, io.k, 0.8)?;
    let topology = RiverTopology::default_two_branch();
    let thresholds = parse_thresholds(&args.thresholds, topology.n_stations())?;

    let report = bench(
        &data,
        &evaluator,
        &manager,
        &thresholds,
        &GaConfig::default(),
        args.windows,
        args.ga_windows,
    )?;
    let reports = run.sub("reports")?;
    let csv_path = reports.join("bench.csv");
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| CliError::io(e.to_string()))?;
    std::fs::write(
        reports.join("bench.json"),
        serde_json::to_string_pretty(&report).unwrap(),
    )
    .map_err(|e| CliError::io(e.to_string()))?;
    run.manifest(
        "bench",
        json!({
            "data": args.data,
            "windows": args.windows,
            "ga_windows": args.ga_windows,
            "speedup": report.speedup,
        }),
    )?;
    println!(
        "manager median {:.6}s | ga median {:.3}s | speedup {:.0}x",
        report.manager_per_window_median_s, report.ga_per_window_median_s, report.speedup
    );
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> CliResult {
    require_file(&args.data, "dataset")?;
    require_file(&args.checkpoint, "checkpoint")?;
    let run = RunDir::resolve(args.out.as_ref().and_then(|p| p.parent().map(PathBuf::from)))?;

    let frame = Arc::new(load_csv(&args.data)?);
    // an evaluator or a manager checkpoint both work; try both roles
    let maps = match EvaluatorModel::load(&args.checkpoint) {
        Ok(model) => {
            let io = &model.core.io;
            let data = prepare(Arc::clone(&frame), io.w, io.k, 0.8)?;
            if args.window >= data.eval_test.len() {
                return Err(CliError::validation(format!(
                    "window {} out of range (test split has {})",
                    args.window,
                    data.eval_test.len()
                )));
            }
            model.extract_attention(&data.eval_test.get(args.window))?
        }
        Err(_) => {
            let model = ManagerModel::load(&args.checkpoint)?;
            let io = &model.core.io;
            let data = prepare(Arc::clone(&frame), io.w, io.k, 0.8)?;
            if args.window >= data.mgr_test.len() {
                return Err(CliError::validation(format!(
                    "window {} out of range (test split has {})",
                    args.window,
                    data.mgr_test.len()
                )));
            }
            model.extract_attention(&data.mgr_test.get(args.window))?
        }
    };
    let matrix = maps.get(&args.covariate).ok_or_else(|| {
        CliError::validation(format!(
            "covariate '{}' not found; available: {:?}",
            args.covariate,
            maps.keys().collect::<Vec<_>>()
        ))
    })?;

    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| run.root.join(format!("attention_{}.csv", args.covariate)));
    let cols = matrix.cols();
    let mut text = String::new();
    for row in matrix.data().chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    std::fs::write(&out_path, text).map_err(|e| CliError::io(e.to_string()))?;
    run.manifest(
        "explain",
        json!({
            "data": args.data,
            "checkpoint": args.checkpoint,
            "window": args.window,
            "covariate": args.covariate,
            "rows": matrix.rows(),
            "cols": cols,
            "out": out_path,
        }),
    )?;
    println!(
        "attention matrix {}x{} written to {}",
        matrix.rows(),
        cols,
        out_path.display()
    );
    Ok(())
}

fn cmd_mitigate(args: MitigateArgs) -> CliResult {
    require_file(&args.data, "dataset")?;
    require_file(&args.evaluator, "evaluator checkpoint")?;
    require_file(&args.manager, "manager checkpoint")?;
    let run = RunDir::resolve(args.out.clone())?;

    let evaluator = EvaluatorModel::load(&args.evaluator)?;
    let manager = ManagerModel::load(&args.manager)?;
    let frame = Arc::new(load_csv(&args.data)?);
    let io = &evaluator.core.io;
    let data = prepare(frame, io.w, io.k, 0.8)?;
    if args.window >= data.mgr_test.len() {
        return Err(CliError::validation(format!(
            "window {} out of range (test split has {})",
            args.window,
            data.mgr_test.len()
        )));
    }

    let m_batch = crate::models::assemble_batch(&[data.mgr_test.get(args.window)])?;
    let e_batch = crate::models::assemble_batch(&[data.eval_test.get(args.window)])?;
    let mut tape = crate::autodiff::Tape::inference();
    let (sched, _) = manager.forward(&mut tape, &m_batch)?;
    let sched_n = evaluator.normalize_schedule(&mut tape, &sched)?;
    let (levels_n, _) = evaluator.forward(&mut tape, &e_batch, Some(&sched_n))?;

    let norm = &evaluator.core.normalizer;
    let water_cols: Vec<usize> = norm
        .columns
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("WS_"))
        .map(|(i, _)| i)
        .collect();
    let n_water = water_cols.len();
    let levels: Vec<f64> = levels_n
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| norm.denormalize_value(water_cols[i % n_water], *v))
        .collect();

    let reports = run.sub("reports")?;
    let sched_path = reports.join(format!("schedule_window_{}.csv", args.window));
    let mut text = String::from("step,GATE_S26,GATE_S25B,GATE_S25A,PUMP_S26,PUMP_S25B\n");
    for (t, row) in sched.data().chunks(m_batch.n_struct).enumerate() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&format!("{t},{}\n", vals.join(",")));
    }
    std::fs::write(&sched_path, text).map_err(|e| CliError::io(e.to_string()))?;

    let levels_path = reports.join(format!("predicted_levels_window_{}.csv", args.window));
    let mut text = String::from("step,WS_S1,WS_S26,WS_S25B,WS_S25A\n");
    for (t, row) in levels.chunks(n_water).enumerate() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&format!("{t},{}\n", vals.join(",")));
    }
    std::fs::write(&levels_path, text).map_err(|e| CliError::io(e.to_string()))?;

    run.manifest(
        "mitigate",
        json!({
            "data": args.data,
            "window": args.window,
            "schedule": sched_path,
            "predicted_levels": levels_path,
        }),
    )?;
    println!("schedule: {}", sched_path.display());
    println!("predicted levels: {}", levels_path.display());
    Ok(())
}
