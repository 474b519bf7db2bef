//! Shared model plumbing: batch layouts, initialization, attention and
//! graph convolution building blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::{WindowMode, WindowSample};
use crate::error::{Error, Result};

/// Input/output geometry of a model, fixed at construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoSpec {
    pub w: usize,
    pub k: usize,
    /// All variables per past step.
    pub n_all: usize,
    /// Forecastable covariates (rain, tide) per future step.
    pub n_known: usize,
    /// Gate + pump slots.
    pub n_struct: usize,
    /// Water stations.
    pub n_water: usize,
    /// Covariate channels seen by the covariate branch (w+k axis).
    pub n_cov: usize,
    /// Output channels per future step.
    pub n_out: usize,
}

impl IoSpec {
    pub fn for_role(w: usize, k: usize, layout_counts: (usize, usize, usize, usize), role: Role) -> IoSpec {
        let (n_known, n_struct, n_water, n_all) = layout_counts;
        match role {
            Role::Evaluator => IoSpec {
                w,
                k,
                n_all,
                n_known,
                n_struct,
                n_water,
                n_cov: n_known + n_struct,
                n_out: n_water,
            },
            Role::Manager => IoSpec {
                w,
                k,
                n_all,
                n_known,
                n_struct,
                n_water,
                n_cov: n_known,
                n_out: n_struct,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Evaluator,
    Manager,
}

/// One assembled minibatch in the tensor layouts the networks consume.
///
/// Sequences are time-major: step `t` of batch item `b` lives at row
/// `t*B + b`. `past_water` is batch-major with one row per (item, station).
#[derive(Clone, Debug)]
pub struct RawBatch {
    pub b: usize,
    pub w: usize,
    pub k: usize,
    pub n_all: usize,
    pub n_cov: usize,
    pub n_known: usize,
    pub n_struct: usize,
    pub n_water: usize,
    pub n_target: usize,
    /// `(w*B) x n_all` all past variables.
    pub past_seq: Vec<f64>,
    /// `(w*B) x n_cov` past covariate channels (class-major order).
    pub past_cov: Vec<f64>,
    /// `(B*n_water) x w` per-station water history.
    pub past_water: Vec<f64>,
    /// `(k*B) x n_known` future rain/tide.
    pub fut_known: Vec<f64>,
    /// `(k*B) x n_struct` observed future controls (evaluator windows only).
    pub fut_sched: Option<Vec<f64>>,
    /// `(k*B) x n_target` supervised targets.
    pub target: Vec<f64>,
    /// Covariate channel names, aligned with `past_cov` columns.
    pub cov_names: Vec<String>,
}

/// Gathers windows into a batch. All samples must share frame geometry.
pub fn assemble_batch(samples: &[WindowSample]) -> Result<RawBatch> {
    if samples.is_empty() {
        return Err(Error::Contract("empty batch".to_string()));
    }
    let b = samples.len();
    let first = &samples[0];
    let layout = first.layout().clone();
    let (w, k) = (first.w, first.k);
    let n_all = layout.n_all;
    let n_water = layout.n_water();
    let n_struct = layout.n_structures();
    let n_known = layout.cov_manager().len();
    let mode = first.mode;
    let n_cov = match mode {
        WindowMode::Evaluator => n_known + n_struct,
        WindowMode::Manager => n_known,
    };
    let cov_cols = match mode {
        WindowMode::Evaluator => layout.cov_evaluator(),
        WindowMode::Manager => layout.cov_manager(),
    };
    let n_target = match mode {
        WindowMode::Evaluator => n_water,
        WindowMode::Manager => n_struct,
    };

    let mut past_seq = vec![0.0; w * b * n_all];
    let mut past_cov = vec![0.0; w * b * n_cov];
    let mut past_water = vec![0.0; b * n_water * w];
    let mut fut_known = vec![0.0; k * b * n_known];
    let mut fut_sched = if mode == WindowMode::Evaluator {
        Some(vec![0.0; k * b * n_struct])
    } else {
        None
    };
    let mut target = vec![0.0; k * b * n_target];

    for (bi, s) in samples.iter().enumerate() {
        if s.w != w || s.k != k || s.mode != mode || s.layout().n_all != n_all {
            return Err(Error::Contract("mixed window geometry in one batch".to_string()));
        }
        let past = s.past();
        for t in 0..w {
            let dst = (t * b + bi) * n_all;
            past_seq[dst..dst + n_all].copy_from_slice(&past[t * n_all..(t + 1) * n_all]);
            let dst = (t * b + bi) * n_cov;
            for (ci, &c) in cov_cols.iter().enumerate() {
                past_cov[dst + ci] = past[t * n_all + c];
            }
            for (si, &c) in layout.water.iter().enumerate() {
                past_water[(bi * n_water + si) * w + t] = past[t * n_all + c];
            }
        }
        let fut = s.future_cov();
        let fut_cols = fut.len() / k;
        for t in 0..k {
            let dst = (t * b + bi) * n_known;
            fut_known[dst..dst + n_known]
                .copy_from_slice(&fut[t * fut_cols..t * fut_cols + n_known]);
            if let Some(sched) = fut_sched.as_mut() {
                let dst = (t * b + bi) * n_struct;
                sched[dst..dst + n_struct]
                    .copy_from_slice(&fut[t * fut_cols + n_known..(t + 1) * fut_cols]);
            }
        }
        let tg = s.target();
        for t in 0..k {
            let dst = (t * b + bi) * n_target;
            target[dst..dst + n_target].copy_from_slice(&tg[t * n_target..(t + 1) * n_target]);
        }
    }

    let frame = first.frame_columns();
    let cov_names = cov_cols.iter().map(|&c| frame[c].clone()).collect();

    Ok(RawBatch {
        b,
        w,
        k,
        n_all,
        n_cov,
        n_known,
        n_struct,
        n_water,
        n_target,
        past_seq,
        past_cov,
        past_water,
        fut_known,
        fut_sched,
        target,
        cov_names,
    })
}

/// Xavier-uniform tensor.
pub fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_raw(vec![rows, cols], data)
}

pub fn zeros_row(cols: usize) -> Tensor {
    Tensor::zeros(vec![1, cols])
}

/// Fixed sinusoidal step features, `steps x dim`.
pub fn sinusoidal_positions(steps: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; steps * dim];
    for t in 0..steps {
        for d in 0..dim {
            let rate = 1.0 / 10_000f64.powf((2 * (d / 2)) as f64 / dim as f64);
            let angle = t as f64 * rate;
            out[t * dim + d] = if d % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Expands a `steps x dim` table to a time-major `(steps*B) x dim` matrix.
pub fn tile_steps(table: &[f64], steps: usize, dim: usize, b: usize) -> Vec<f64> {
    let mut out = vec![0.0; steps * b * dim];
    for t in 0..steps {
        for bi in 0..b {
            let dst = (t * b + bi) * dim;
            out[dst..dst + dim].copy_from_slice(&table[t * dim..(t + 1) * dim]);
        }
    }
    out
}

/// Scaled dot-product attention. 2-D inputs give one attention map
/// (`q: [m,d], k: [n,d], v: [n,dv]`); 3-D inputs run per batch block.
/// Returns (fused values, attention weights).
pub fn cross_attention(
    tape: &mut Tape,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    d_k: usize,
) -> Result<(Tensor, Tensor)> {
    if d_k == 0 {
        return Err(Error::Config("attention width d_k must be positive".to_string()));
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    match (q.shape().len(), k.shape().len()) {
        (2, 2) => {
            let kt = tape.transpose(k)?;
            let logits = tape.matmul(q, &kt)?;
            let scaled = tape.mul_scalar(&logits, scale);
            let att = tape.softmax_rows(&scaled);
            let fused = tape.matmul(&att, v)?;
            Ok((fused, att))
        }
        (3, 3) => {
            let logits = tape.bmm_nt(q, k)?;
            let scaled = tape.mul_scalar(&logits, scale);
            let att = tape.softmax_rows(&scaled);
            let fused = tape.bmm(&att, v)?;
            Ok((fused, att))
        }
        _ => Err(Error::dim(
            "cross_attention",
            format!("rank mismatch {:?} vs {:?}", q.shape(), k.shape()),
        )),
    }
}

/// Degree-normalized adjacency with self-loops, flattened row-major.
pub fn normalize_adjacency(adjacency: &[Vec<u8>]) -> Vec<f64> {
    let n = adjacency.len();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = f64::from(adjacency[i][j]);
        }
        a[i * n + i] += 1.0;
    }
    let deg: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j]).sum::<f64>())
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] /= (deg[i] * deg[j]).sqrt();
        }
    }
    a
}

/// One graph-convolution layer `relu(Â x W)`. `x` is `[n, f]` for a single
/// graph or `[B, n, f]` batched; `adj_norm` is the flattened normalized
/// adjacency.
pub fn graph_conv(
    tape: &mut Tape,
    x: &Tensor,
    adj_norm: &[f64],
    n_nodes: usize,
    weight: &Tensor,
) -> Result<Tensor> {
    match x.shape().len() {
        2 => {
            if x.rows() != n_nodes {
                return Err(Error::dim(
                    "graph_conv",
                    format!("{} rows for {} nodes", x.rows(), n_nodes),
                ));
            }
            let a = Tensor::from_raw(vec![n_nodes, n_nodes], adj_norm.to_vec());
            let mixed = tape.matmul(&a, x)?;
            let out = tape.matmul(&mixed, weight)?;
            Ok(tape.relu(&out))
        }
        3 => {
            let b = x.shape()[0];
            if x.shape()[1] != n_nodes {
                return Err(Error::dim(
                    "graph_conv",
                    format!("{} rows for {} nodes", x.shape()[1], n_nodes),
                ));
            }
            let f = x.shape()[2];
            let mut tiled = Vec::with_capacity(b * n_nodes * n_nodes);
            for _ in 0..b {
                tiled.extend_from_slice(adj_norm);
            }
            let a = Tensor::from_raw(vec![b, n_nodes, n_nodes], tiled);
            let mixed = tape.bmm(&a, x)?;
            let flat = tape.reshape(&mixed, vec![b * n_nodes, f])?;
            let out = tape.matmul(&flat, weight)?;
            let act = tape.relu(&out);
            tape.reshape(&act, vec![b, n_nodes, weight.cols()])
        }
        s => Err(Error::dim("graph_conv", format!("unsupported rank {s}"))),
    }
}

/// Dense layer helper: `x W + b`.
pub fn linear(tape: &mut Tape, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let h = tape.matmul(x, w)?;
    tape.add_row_broadcast(&h, b)
}

/// Deterministic per-name RNG so parameter values do not depend on the
/// order modules initialize in.
pub fn seeded_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in tag.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}
