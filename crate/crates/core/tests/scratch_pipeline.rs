//! Temporary pipeline calibration probe (deleted before release).

use std::sync::Arc;
use std::time::Instant;

use floodctl::assess::{assess, AssessConfig};
use floodctl::losses::Thresholds;
use floodctl::models::{Arch, GtnConfig};
use floodctl::sim::{generate_dataset, RiverTopology};
use floodctl::training::{prepare, train_evaluator, train_manager, TrainConfig};

#[test]
#[ignore]
fn pipeline_probe() {
    let hours: usize = std::env::var("PROBE_HOURS").map(|s| s.parse().unwrap()).unwrap_or(4000);
    let eval_epochs: usize =
        std::env::var("PROBE_EVAL_EPOCHS").map(|s| s.parse().unwrap()).unwrap_or(10);
    let mgr_epochs: usize =
        std::env::var("PROBE_MGR_EPOCHS").map(|s| s.parse().unwrap()).unwrap_or(8);
    let stride: usize = std::env::var("PROBE_STRIDE").map(|s| s.parse().unwrap()).unwrap_or(3);
    let seed: u64 = std::env::var("PROBE_SEED").map(|s| s.parse().unwrap()).unwrap_or(7);

    let topo = RiverTopology::default_two_branch();
    let t0 = Instant::now();
    let frame = Arc::new(generate_dataset(seed, hours, &topo).unwrap());
    println!("dataset: {:.1}s", t0.elapsed().as_secs_f64());

    let data = prepare(frame, 72, 24, 0.8).unwrap();
    println!(
        "windows: train {} test {} (stride {} -> {} train)",
        data.eval_train.len(),
        data.eval_test.len(),
        stride,
        data.eval_train.strided(stride).len()
    );

    let eval_cfg = TrainConfig {
        arch: Arch::Gtn,
        gtn: GtnConfig::default(),
        lr: 1e-3,
        batch_size: 512,
        max_epochs: eval_epochs,
        patience: 8.min(eval_epochs),
        seed: 7,
        train_stride: stride,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let (mut evaluator, ev_manifest) =
        train_evaluator(&data.eval_train, &data.normalizer, &topo.adjacency, &eval_cfg).unwrap();
    println!(
        "evaluator: {:.1}s best_val {:.6} at epoch {}",
        t0.elapsed().as_secs_f64(),
        ev_manifest.best_val_loss,
        ev_manifest.best_epoch
    );
    evaluator.freeze();

    let mgr_cfg = TrainConfig {
        arch: Arch::Gtn,
        gtn: GtnConfig::default(),
        lr: 3e-3,
        batch_size: 512,
        max_epochs: mgr_epochs,
        patience: 6.min(mgr_epochs),
        alpha: 1.0,
        beta: 1.0,
        seed: 7,
        train_stride: stride,
        ..TrainConfig::default()
    };
    let thresholds = Thresholds::default_for(4);
    let t0 = Instant::now();
    let (manager, mgr_manifest) = train_manager(
        &data.mgr_train,
        &evaluator,
        &thresholds,
        &topo.adjacency,
        vec![(0.0, 1.0); 5],
        &mgr_cfg,
    )
    .unwrap();
    println!(
        "manager: {:.1}s best_val {:.6} at epoch {}",
        t0.elapsed().as_secs_f64(),
        mgr_manifest.best_val_loss,
        mgr_manifest.best_epoch
    );

    let t0 = Instant::now();
    let mut acfg = AssessConfig::new(thresholds);
    acfg.ga_windows = 2;
    let report = assess(&data, &evaluator, &manager, &topo, &acfg).unwrap();
    println!("assess: {:.1}s", t0.elapsed().as_secs_f64());
    println!("evaluator MAE {:.4} vs persistence {:.4}", report.evaluator_mae, report.persistence_mae);
    for m in &report.methods {
        println!(
            "{:12} windows {:6} | over_ts {:5} over_area {:9.2} under_ts {:5} under_area {:9.2}",
            m.method,
            m.windows,
            m.aggregate.over_timesteps,
            m.aggregate.over_area,
            m.aggregate.under_timesteps,
            m.aggregate.under_area
        );
    }
}
