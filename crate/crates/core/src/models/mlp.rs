//! Two-hidden-layer baseline: flattened inputs through 64/32 relu units.

use crate::autodiff::{BoundParams, ParamSet, Tape, Tensor};
use crate::error::Result;

use super::common::{linear, seeded_rng, xavier, zeros_row, IoSpec, RawBatch};

const H1: usize = 64;
const H2: usize = 32;

fn d_in(io: &IoSpec) -> usize {
    io.w * io.n_all + io.k * io.n_cov
}

pub fn init(seed: u64, io: &IoSpec) -> ParamSet {
    let mut ps = ParamSet::new();
    let mut rng = seeded_rng(seed, "mlp");
    let d = d_in(io);
    ps.insert("mlp.w1", xavier(&mut rng, d, H1));
    ps.insert("mlp.b1", zeros_row(H1));
    ps.insert("mlp.w2", xavier(&mut rng, H1, H2));
    ps.insert("mlp.b2", zeros_row(H2));
    ps.insert("mlp.w3", xavier(&mut rng, H2, io.k * io.n_out));
    ps.insert("mlp.b3", zeros_row(io.k * io.n_out));
    ps
}

/// Forward pass to a time-major `(k*B) x n_out` output.
pub fn forward(
    tape: &mut Tape,
    p: &BoundParams,
    io: &IoSpec,
    batch: &RawBatch,
    past_seq: &Tensor,
    fut_cov: &Tensor,
) -> Result<Tensor> {
    let b = batch.b;
    let past_bm = tape.swap_blocks(past_seq, io.w, b)?;
    let past_flat = tape.reshape(&past_bm, vec![b, io.w * io.n_all])?;
    let fut_bm = tape.swap_blocks(fut_cov, io.k, b)?;
    let fut_flat = tape.reshape(&fut_bm, vec![b, io.k * io.n_cov])?;
    let x = tape.concat_cols(&[&past_flat, &fut_flat])?;

    let h1 = linear(tape, &x, p.get("mlp.w1"), p.get("mlp.b1"))?;
    let h1 = tape.relu(&h1);
    let h2 = linear(tape, &h1, p.get("mlp.w2"), p.get("mlp.b2"))?;
    let h2 = tape.relu(&h2);
    let out = linear(tape, &h2, p.get("mlp.w3"), p.get("mlp.b3"))?;

    let out_bm = tape.reshape(&out, vec![b * io.k, io.n_out])?;
    tape.swap_blocks(&out_bm, b, io.k)
}
