//! Temporary probe: does the trained evaluator predict lower levels when
//! gates open wider? (deleted before release)

use std::sync::Arc;

use floodctl::autodiff::{Tape, Tensor};
use floodctl::models::{assemble_batch, Arch, GtnConfig};
use floodctl::sim::{generate_dataset, RiverTopology};
use floodctl::training::{prepare, train_evaluator, TrainConfig};

#[test]
#[ignore]
fn causal_response_probe() {
    let topo = RiverTopology::default_two_branch();
    let frame = Arc::new(generate_dataset(7, 6000, &topo).unwrap());
    let data = prepare(frame, 72, 24, 0.8).unwrap();
    let cfg = TrainConfig {
        arch: Arch::Gtn,
        gtn: GtnConfig::default(),
        lr: 1e-3,
        batch_size: 512,
        max_epochs: 14,
        patience: 14,
        seed: 7,
        train_stride: 3,
        ..TrainConfig::default()
    };
    let (mut ev, _) =
        train_evaluator(&data.eval_train, &data.normalizer, &topo.adjacency, &cfg).unwrap();
    ev.freeze();

    // pick flood-adjacent test windows: actual level near/above 3 ft
    let norm = &data.normalizer;
    let ws_cols: Vec<usize> = norm
        .columns
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("WS_"))
        .map(|(i, _)| i)
        .collect();
    let gate_frac_cols = [2usize, 3, 4, 5, 6]; // fraction columns in schedule space

    let mut shown = 0;
    for i in 0..data.eval_test.len() {
        if shown >= 8 {
            break;
        }
        let s = data.eval_test.get(i);
        let past = s.past();
        let layout = s.layout().clone();
        let last_levels: Vec<f64> = layout
            .water
            .iter()
            .map(|&c| norm.denormalize_value(c, past[(s.w - 1) * layout.n_all + c]))
            .collect();
        let max_level = last_levels.iter().cloned().fold(f64::MIN, f64::max);
        if max_level < 2.8 {
            continue;
        }
        shown += 1;

        let batch = assemble_batch(std::slice::from_ref(&s)).unwrap();
        let mut tape = Tape::inference();
        let k = batch.k;
        let ns = batch.n_struct;
        let mut mean_for = |v: f64| -> f64 {
            let sched = Tensor::new(vec![k, ns], vec![v; k * ns]).unwrap();
            let sched = ev.normalize_schedule(&mut tape, &sched).unwrap();
            let (pred, _) = ev.forward(&mut tape, &batch, Some(&sched)).unwrap();
            // mean level over horizon and stations, in feet
            pred.data()
                .iter()
                .enumerate()
                .map(|(j, p)| norm.denormalize_value(ws_cols[j % 4], *p))
                .sum::<f64>()
                / pred.numel() as f64
        };
        let closed = mean_for(0.0);
        let low = mean_for(0.2);
        let open = mean_for(1.0);
        let _ = gate_frac_cols;

        // ground truth from the simulator for the same constant schedules
        let truth_for = |v: f64| -> f64 {
            let mut st = floodctl::sim::SimState {
                levels: last_levels.clone(),
                clock: (s.start + s.w) as u64,
            };
            let rain_col_idx = 0usize;
            let mut sum = 0.0;
            for j in 0..s.k {
                sum += st.levels.iter().sum::<f64>();
                let rain = norm
                    .denormalize_value(rain_col_idx, s.future_cov()[j * s.n_cov()]);
                let (next, _) =
                    floodctl::sim::step_dynamics(&st, &vec![v; 5], rain, &topo).unwrap();
                st = next;
            }
            sum / (s.k * 4) as f64
        };
        let t_closed = truth_for(0.0);
        let t_open = truth_for(1.0);
        println!(
            "window {i}: max_past {max_level:.2} | pred closed {closed:.3} low {low:.3} open {open:.3} (D {:+.3}) | truth closed {t_closed:.3} open {t_open:.3} (D {:+.3})",
            open - closed,
            t_open - t_closed
        );
    }
}
