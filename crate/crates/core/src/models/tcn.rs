//! Dilated causal convolution stack over the joined past/future sequence.
//!
//! Past rows (all variables) and future rows (covariates only) get separate
//! linear embeddings, so unknown future variables never enter the layout.

use crate::autodiff::{BoundParams, ParamSet, Tape, Tensor};
use crate::error::Result;

use super::common::{linear, seeded_rng, xavier, zeros_row, IoSpec, RawBatch};

pub const DILATIONS: [usize; 6] = [1, 2, 4, 8, 16, 32];
pub const FILTERS: usize = 64;
const HEAD: usize = 32;

pub fn init(seed: u64, io: &IoSpec) -> ParamSet {
    let mut ps = ParamSet::new();
    let mut rng = seeded_rng(seed, "tcn");
    ps.insert("tcn.embed_past", xavier(&mut rng, io.n_all, FILTERS));
    ps.insert("tcn.embed_past_b", zeros_row(FILTERS));
    ps.insert("tcn.embed_fut", xavier(&mut rng, io.n_cov, FILTERS));
    ps.insert("tcn.embed_fut_b", zeros_row(FILTERS));
    for (i, _) in DILATIONS.iter().enumerate() {
        ps.insert(&format!("tcn.conv{i}_a"), xavier(&mut rng, FILTERS, FILTERS));
        ps.insert(&format!("tcn.conv{i}_b"), xavier(&mut rng, FILTERS, FILTERS));
        ps.insert(&format!("tcn.conv{i}_bias"), zeros_row(FILTERS));
    }
    ps.insert("tcn.head1", xavier(&mut rng, FILTERS, HEAD));
    ps.insert("tcn.head1_b", zeros_row(HEAD));
    ps.insert("tcn.head2", xavier(&mut rng, HEAD, io.n_out));
    ps.insert("tcn.head2_b", zeros_row(io.n_out));
    ps
}

pub fn forward(
    tape: &mut Tape,
    p: &BoundParams,
    io: &IoSpec,
    batch: &RawBatch,
    past_seq: &Tensor,
    fut_cov: &Tensor,
) -> Result<Tensor> {
    let b = batch.b;
    let t_total = io.w + io.k;

    let p_emb = linear(tape, past_seq, p.get("tcn.embed_past"), p.get("tcn.embed_past_b"))?;
    let f_emb = linear(tape, fut_cov, p.get("tcn.embed_fut"), p.get("tcn.embed_fut_b"))?;
    let mut seq = tape.concat_rows(&[&p_emb, &f_emb])?;

    for (i, d) in DILATIONS.iter().enumerate() {
        // a shift past the sequence start reads pure padding
        let d = (*d).min(t_total);
        let pad = tape.constant(&Tensor::zeros(vec![d * b, FILTERS]));
        let kept = tape.slice_rows(&seq, 0, (t_total - d) * b)?;
        let shifted = tape.concat_rows(&[&pad, &kept])?;
        let ha = tape.matmul(&shifted, p.get(&format!("tcn.conv{i}_a")))?;
        let hb = tape.matmul(&seq, p.get(&format!("tcn.conv{i}_b")))?;
        let h = tape.add(&ha, &hb)?;
        let h = tape.add_row_broadcast(&h, p.get(&format!("tcn.conv{i}_bias")))?;
        let h = tape.relu(&h);
        seq = tape.add(&seq, &h)?;
    }

    let fut_feat = tape.slice_rows(&seq, io.w * b, io.k * b)?;
    let h = linear(tape, &fut_feat, p.get("tcn.head1"), p.get("tcn.head1_b"))?;
    let h = tape.relu(&h);
    linear(tape, &h, p.get("tcn.head2"), p.get("tcn.head2_b"))
}
