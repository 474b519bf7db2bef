//! Temporary performance probe (deleted before release).

use std::sync::Arc;
use std::time::Instant;

use floodctl::autodiff::{Tape, Tensor};
use floodctl::data::{make_windows, WindowMode};
use floodctl::losses::evaluator_loss_t;
use floodctl::models::{assemble_batch, Arch, EvaluatorModel, GtnConfig, IoSpec, Role};
use floodctl::sim::{generate_dataset, RiverTopology};
use floodctl::training::prepare;

#[test]
#[ignore]
fn perf_probe() {
    let topo = RiverTopology::default_two_branch();
    let frame = Arc::new(generate_dataset(7, 1200, &topo).unwrap());
    let data = prepare(frame, 72, 24, 0.8).unwrap();
    let io = IoSpec::for_role(72, 24, (2, 5, 4, 11), Role::Evaluator);
    let ev = EvaluatorModel::new(
        Arch::Gtn,
        io,
        GtnConfig::default(),
        data.normalizer.clone(),
        &topo.adjacency,
        7,
    )
    .unwrap();

    let samples: Vec<_> = (0..512.min(data.eval_train.len()))
        .map(|i| data.eval_train.get(i))
        .collect();
    let t0 = Instant::now();
    let batch = assemble_batch(&samples).unwrap();
    println!("assemble B={}: {:.3}s", batch.b, t0.elapsed().as_secs_f64());

    // inference forward
    for _ in 0..2 {
        let t0 = Instant::now();
        let mut tape = Tape::inference();
        let _ = ev.forward(&mut tape, &batch, None).unwrap();
        println!("inference forward: {:.3}s", t0.elapsed().as_secs_f64());
    }

    // recorded forward + backward
    for _ in 0..2 {
        let t0 = Instant::now();
        let mut tape = Tape::new();
        let (pred, _) = ev.forward(&mut tape, &batch, None).unwrap();
        let fwd = t0.elapsed().as_secs_f64();
        let target = tape.constant(&Tensor::new(
            vec![batch.k * batch.b, batch.n_water],
            batch.target.clone(),
        ).unwrap());
        let loss = evaluator_loss_t(&mut tape, &pred, &target, batch.k * batch.b).unwrap();
        let t1 = Instant::now();
        let grads = tape.backward(&loss).unwrap();
        println!(
            "recorded forward {fwd:.3}s, backward {:.3}s, nodes {}",
            t1.elapsed().as_secs_f64(),
            tape.node_count()
        );
        let _ = grads.by_name();
    }

    // per-component timing in inference mode
    for (label, cfg) in [
        ("graph-only", GtnConfig { recurrent: false, conv: true, encoder: false, cross_attention: false, ..GtnConfig::default() }),
        ("gru-only+conv", GtnConfig { graph: false, conv: true, encoder: false, cross_attention: false, ..GtnConfig::default() }),
        ("conv-only", GtnConfig { graph: true, recurrent: false, encoder: false, cross_attention: false, ..GtnConfig::default() }),
        ("encoder", GtnConfig { graph: true, recurrent: false, conv: true, encoder: true, cross_attention: false, ..GtnConfig::default() }),
        ("cross", GtnConfig { graph: true, recurrent: false, conv: true, encoder: false, cross_attention: true, ..GtnConfig::default() }),
    ] {
        let io = IoSpec::for_role(72, 24, (2, 5, 4, 11), Role::Evaluator);
        let ev = EvaluatorModel::new(Arch::Gtn, io, cfg, data.normalizer.clone(), &topo.adjacency, 7).unwrap();
        let t0 = Instant::now();
        let mut tape = Tape::new();
        let (pred, _) = ev.forward(&mut tape, &batch, None).unwrap();
        let fwd = t0.elapsed().as_secs_f64();
        let target = tape.constant(&Tensor::new(
            vec![batch.k * batch.b, batch.n_water],
            batch.target.clone(),
        ).unwrap());
        let loss = evaluator_loss_t(&mut tape, &pred, &target, batch.k * batch.b).unwrap();
        let t1 = Instant::now();
        let _ = tape.backward(&loss).unwrap();
        println!("{label}: fwd {fwd:.3}s bwd {:.3}s nodes {}", t1.elapsed().as_secs_f64(), tape.node_count());
    }
}
