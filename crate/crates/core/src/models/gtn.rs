//! Graph/recurrent/convolution/attention hybrid.
//!
//! Water-level history flows through a two-layer graph convolution over the
//! station adjacency and a GRU over all past variables; covariate sequences
//! (rain, tide, and for the evaluator the control schedule) flow through a
//! causal convolution and a one-block self-attention encoder. A per-covariate
//! cross-attention maps the full w+k covariate axis onto the k output steps
//! and doubles as the explainability surface.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{BoundParams, ParamSet, Tape, Tensor};
use crate::error::{Error, Result};

use super::common::{
    cross_attention, graph_conv, linear, seeded_rng, sinusoidal_positions, tile_steps, xavier,
    zeros_row, IoSpec, RawBatch,
};

/// Positional feature width fed to attention keys.
const POS_DIM: usize = 8;
const HEAD_HIDDEN: usize = 64;

/// Architecture hyperparameters and component toggles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtnConfig {
    pub graph_channels: (usize, usize),
    pub recurrent_units: usize,
    pub conv_filters: usize,
    pub attention_heads: usize,
    pub attention_dim: usize,
    pub encoder_dim: usize,
    pub graph: bool,
    pub recurrent: bool,
    pub conv: bool,
    pub encoder: bool,
    pub cross_attention: bool,
}

impl Default for GtnConfig {
    fn default() -> Self {
        GtnConfig {
            graph_channels: (32, 16),
            recurrent_units: 16,
            conv_filters: 96,
            attention_heads: 1,
            attention_dim: 8,
            encoder_dim: 8,
            graph: true,
            recurrent: true,
            conv: true,
            encoder: true,
            cross_attention: true,
        }
    }
}

/// The five ablatable components.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GtnComponent {
    Graph,
    Recurrent,
    Conv,
    Encoder,
    CrossAttention,
}

impl GtnComponent {
    pub const ALL: [GtnComponent; 5] = [
        GtnComponent::Graph,
        GtnComponent::Recurrent,
        GtnComponent::Conv,
        GtnComponent::Encoder,
        GtnComponent::CrossAttention,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "graph" => Ok(GtnComponent::Graph),
            "recurrent" => Ok(GtnComponent::Recurrent),
            "conv" => Ok(GtnComponent::Conv),
            "encoder" => Ok(GtnComponent::Encoder),
            "cross_attention" => Ok(GtnComponent::CrossAttention),
            other => Err(Error::Config(format!("unknown component '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GtnComponent::Graph => "graph",
            GtnComponent::Recurrent => "recurrent",
            GtnComponent::Conv => "conv",
            GtnComponent::Encoder => "encoder",
            GtnComponent::CrossAttention => "cross_attention",
        }
    }
}

impl GtnConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.graph && !self.conv {
            return Err(Error::Config(
                "at least one of the graph or conv components must stay enabled".to_string(),
            ));
        }
        if self.attention_heads == 0 || self.attention_dim == 0 || self.encoder_dim == 0 {
            return Err(Error::Config("attention dimensions must be positive".to_string()));
        }
        Ok(())
    }

    /// Returns a copy with one component disabled.
    pub fn ablate(&self, component: GtnComponent) -> Result<GtnConfig> {
        let mut cfg = self.clone();
        match component {
            GtnComponent::Graph => cfg.graph = false,
            GtnComponent::Recurrent => cfg.recurrent = false,
            GtnComponent::Conv => cfg.conv = false,
            GtnComponent::Encoder => cfg.encoder = false,
            GtnComponent::CrossAttention => cfg.cross_attention = false,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn ctx_dim(&self, io: &IoSpec) -> usize {
        let mut d = 0;
        if self.graph {
            d += io.n_water * self.graph_channels.1;
        }
        if self.recurrent {
            d += self.recurrent_units;
        }
        d
    }

    fn head_in_dim(&self, io: &IoSpec) -> usize {
        let mut d = self.ctx_dim(io);
        if self.cross_attention {
            d += self.attention_heads * self.attention_dim * io.n_cov;
        }
        if self.conv {
            d += self.conv_filters;
        }
        if self.encoder {
            d += self.encoder_dim;
        }
        d
    }
}

pub fn init(seed: u64, io: &IoSpec, cfg: &GtnConfig) -> ParamSet {
    let mut ps = ParamSet::new();
    let mut rng = seeded_rng(seed, "gtn");
    let (gc1, gc2) = cfg.graph_channels;
    let ru = cfg.recurrent_units;
    let (dk, dv, ed) = (cfg.attention_dim, cfg.attention_dim, cfg.encoder_dim);

    if cfg.graph {
        ps.insert("gtn.gcn1", xavier(&mut rng, io.w, gc1));
        ps.insert("gtn.gcn2", xavier(&mut rng, gc1, gc2));
    }
    if cfg.recurrent {
        ps.insert("gtn.gru_wx", xavier(&mut rng, io.n_all, 3 * ru));
        ps.insert("gtn.gru_wh", xavier(&mut rng, ru, 3 * ru));
        ps.insert("gtn.gru_b", zeros_row(3 * ru));
    }
    if cfg.conv {
        ps.insert("gtn.conv_a", xavier(&mut rng, io.n_cov, cfg.conv_filters));
        ps.insert("gtn.conv_b", xavier(&mut rng, io.n_cov, cfg.conv_filters));
        ps.insert("gtn.conv_bias", zeros_row(cfg.conv_filters));
    }
    if cfg.encoder {
        ps.insert("gtn.enc_embed", xavier(&mut rng, io.n_cov, ed));
        ps.insert("gtn.enc_embed_b", zeros_row(ed));
        ps.insert("gtn.enc_wq", xavier(&mut rng, ed, ed));
        ps.insert("gtn.enc_wk", xavier(&mut rng, ed, ed));
        ps.insert("gtn.enc_wv", xavier(&mut rng, ed, ed));
        ps.insert("gtn.enc_ff1", xavier(&mut rng, ed, 2 * ed));
        ps.insert("gtn.enc_ff1_b", zeros_row(2 * ed));
        ps.insert("gtn.enc_ff2", xavier(&mut rng, 2 * ed, ed));
        ps.insert("gtn.enc_ff2_b", zeros_row(ed));
    }
    if cfg.cross_attention {
        let ctx = cfg.ctx_dim(io);
        for h in 0..cfg.attention_heads {
            ps.insert(&format!("gtn.att{h}_qpos"), xavier(&mut rng, io.k, dk));
            if ctx > 0 {
                ps.insert(&format!("gtn.att{h}_qctx"), xavier(&mut rng, ctx, dk));
            }
            ps.insert(&format!("gtn.att{h}_key"), xavier(&mut rng, 1 + POS_DIM, dk));
            ps.insert(&format!("gtn.att{h}_val"), xavier(&mut rng, 1 + POS_DIM, dv));
        }
    }
    ps.insert("gtn.head1", xavier(&mut rng, cfg.head_in_dim(io), HEAD_HIDDEN));
    ps.insert("gtn.head1_b", zeros_row(HEAD_HIDDEN));
    ps.insert("gtn.head2", xavier(&mut rng, HEAD_HIDDEN, io.n_out));
    ps.insert("gtn.head2_b", zeros_row(io.n_out));
    ps
}

/// Attention matrices recorded during a forward pass, one `[B, k, w+k]`
/// tensor per covariate channel (averaged over heads).
pub type AttentionTrace = BTreeMap<String, Tensor>;

#[allow(clippy::too_many_arguments)]
pub fn forward(
    tape: &mut Tape,
    p: &BoundParams,
    io: &IoSpec,
    cfg: &GtnConfig,
    batch: &RawBatch,
    past_seq: &Tensor,
    fut_cov: &Tensor,
    adj_norm: &[f64],
) -> Result<(Tensor, AttentionTrace)> {
    let b = batch.b;
    let t_total = io.w + io.k;
    let ru = cfg.recurrent_units;
    let (dk, dv) = (cfg.attention_dim, cfg.attention_dim);

    // water context: graph embedding of per-station history + GRU over all
    // past variables
    let mut ctx_parts: Vec<Tensor> = Vec::new();
    if cfg.graph {
        let pw = tape.constant(&Tensor::from_raw(
            vec![b * io.n_water, io.w],
            batch.past_water.clone(),
        ));
        let pw3 = tape.reshape(&pw, vec![b, io.n_water, io.w])?;
        let g1 = graph_conv(tape, &pw3, adj_norm, io.n_water, p.get("gtn.gcn1"))?;
        let g2 = graph_conv(tape, &g1, adj_norm, io.n_water, p.get("gtn.gcn2"))?;
        let flat = tape.reshape(&g2, vec![b, io.n_water * cfg.graph_channels.1])?;
        ctx_parts.push(flat);
    }
    if cfg.recurrent {
        let mut h = tape.constant(&Tensor::zeros(vec![b, ru]));
        for t in 0..io.w {
            let x_t = tape.slice_rows(past_seq, t * b, b)?;
            let x3 = linear(tape, &x_t, p.get("gtn.gru_wx"), p.get("gtn.gru_b"))?;
            let h3 = tape.matmul(&h, p.get("gtn.gru_wh"))?;
            let xz = tape.slice_cols(&x3, 0, ru)?;
            let hz = tape.slice_cols(&h3, 0, ru)?;
            let z_pre = tape.add(&xz, &hz)?;
            let z = tape.sigmoid(&z_pre);
            let xr = tape.slice_cols(&x3, ru, ru)?;
            let hr = tape.slice_cols(&h3, ru, ru)?;
            let r_pre = tape.add(&xr, &hr)?;
            let r = tape.sigmoid(&r_pre);
            let xn = tape.slice_cols(&x3, 2 * ru, ru)?;
            let hn = tape.slice_cols(&h3, 2 * ru, ru)?;
            let gated = tape.mul(&r, &hn)?;
            let n_pre = tape.add(&xn, &gated)?;
            let n = tape.tanh(&n_pre);
            let neg_z = tape.mul_scalar(&z, -1.0);
            let keep = tape.add_scalar(&neg_z, 1.0);
            let kept = tape.mul(&keep, &h)?;
            let new = tape.mul(&z, &n)?;
            h = tape.add(&kept, &new)?;
        }
        ctx_parts.push(h);
    }
    let ctx = match ctx_parts.len() {
        0 => None,
        1 => Some(ctx_parts.pop().unwrap()),
        _ => {
            let refs: Vec<&Tensor> = ctx_parts.iter().collect();
            Some(tape.concat_cols(&refs)?)
        }
    };

    // full covariate sequence along the w+k axis
    let past_cov = tape.constant(&Tensor::from_raw(
        vec![io.w * b, io.n_cov],
        batch.past_cov.clone(),
    ));
    let cov_seq = tape.concat_rows(&[&past_cov, fut_cov])?;

    let mut head_parts: Vec<Tensor> = Vec::new();
    let mut trace: AttentionTrace = BTreeMap::new();

    if cfg.cross_attention {
        // queries: learned per-step table, shifted by the projected water
        // context; one query block per head, shared across covariates
        let mut q3s = Vec::with_capacity(cfg.attention_heads);
        for h in 0..cfg.attention_heads {
            let q_base = if let (Some(ctx_t), true) = (&ctx, cfg.ctx_dim(io) > 0) {
                tape.matmul(ctx_t, p.get(&format!("gtn.att{h}_qctx")))?
            } else {
                tape.constant(&Tensor::zeros(vec![b, dk]))
            };
            let base_refs: Vec<&Tensor> = std::iter::repeat(&q_base).take(io.k).collect();
            let q_tiled = tape.concat_rows(&base_refs)?;
            let q_tm =
                tape.add_step_broadcast(&q_tiled, p.get(&format!("gtn.att{h}_qpos")), io.k, b)?;
            let q_bm = tape.swap_blocks(&q_tm, io.k, b)?;
            q3s.push(tape.reshape(&q_bm, vec![b, io.k, dk])?);
        }

        let pos = tape.constant(&Tensor::from_raw(
            vec![t_total * b, POS_DIM],
            tile_steps(&sinusoidal_positions(t_total, POS_DIM), t_total, POS_DIM, b),
        ));

        for (ci, name) in batch.cov_names.iter().enumerate() {
            let col = tape.slice_cols(&cov_seq, ci, 1)?;
            let key_in = tape.concat_cols(&[&col, &pos])?;
            let mut fused_heads = Vec::new();
            let mut att_sum: Option<Tensor> = None;
            for (h, q3) in q3s.iter().enumerate() {
                let kk = tape.matmul(&key_in, p.get(&format!("gtn.att{h}_key")))?;
                let kk_bm = tape.swap_blocks(&kk, t_total, b)?;
                let k3 = tape.reshape(&kk_bm, vec![b, t_total, dk])?;
                let vv = tape.matmul(&key_in, p.get(&format!("gtn.att{h}_val")))?;
                let vv_bm = tape.swap_blocks(&vv, t_total, b)?;
                let v3 = tape.reshape(&vv_bm, vec![b, t_total, dv])?;
                let (fused3, att3) = cross_attention(tape, q3, &k3, &v3, dk)?;
                let fused_bm = tape.reshape(&fused3, vec![b * io.k, dv])?;
                let fused_tm = tape.swap_blocks(&fused_bm, b, io.k)?;
                fused_heads.push(fused_tm);
                att_sum = Some(match att_sum {
                    None => att3,
                    Some(prev) => tape.add(&prev, &att3)?,
                });
            }
            for f in fused_heads {
                head_parts.push(f);
            }
            let att_mean =
                tape.mul_scalar(&att_sum.expect("at least one head"), 1.0 / cfg.attention_heads as f64);
            trace.insert(name.clone(), att_mean);
        }
    }

    if cfg.conv {
        let pad = tape.constant(&Tensor::zeros(vec![b, io.n_cov]));
        let kept = tape.slice_rows(&cov_seq, 0, (t_total - 1) * b)?;
        let shifted = tape.concat_rows(&[&pad, &kept])?;
        let ca = tape.matmul(&shifted, p.get("gtn.conv_a"))?;
        let cb = tape.matmul(&cov_seq, p.get("gtn.conv_b"))?;
        let c = tape.add(&ca, &cb)?;
        let c = tape.add_row_broadcast(&c, p.get("gtn.conv_bias"))?;
        let c = tape.relu(&c);
        head_parts.push(tape.slice_rows(&c, io.w * b, io.k * b)?);
    }

    if cfg.encoder {
        let ed = cfg.encoder_dim;
        let e0 = linear(tape, &cov_seq, p.get("gtn.enc_embed"), p.get("gtn.enc_embed_b"))?;
        let pos_e = tape.constant(&Tensor::from_raw(
            vec![t_total * b, ed],
            tile_steps(&sinusoidal_positions(t_total, ed), t_total, ed, b),
        ));
        let e0 = tape.add(&e0, &pos_e)?;
        let q = tape.matmul(&e0, p.get("gtn.enc_wq"))?;
        let kq = tape.matmul(&e0, p.get("gtn.enc_wk"))?;
        let v = tape.matmul(&e0, p.get("gtn.enc_wv"))?;
        let to3 = |tape: &mut Tape, x: &Tensor| -> Result<Tensor> {
            let bm = tape.swap_blocks(x, t_total, b)?;
            tape.reshape(&bm, vec![b, t_total, ed])
        };
        let q3 = to3(tape, &q)?;
        let k3 = to3(tape, &kq)?;
        let v3 = to3(tape, &v)?;
        let (sa3, _) = cross_attention(tape, &q3, &k3, &v3, ed)?;
        let sa_bm = tape.reshape(&sa3, vec![b * t_total, ed])?;
        let sa_tm = tape.swap_blocks(&sa_bm, b, t_total)?;
        let e1 = tape.add(&e0, &sa_tm)?;
        let f = linear(tape, &e1, p.get("gtn.enc_ff1"), p.get("gtn.enc_ff1_b"))?;
        let f = tape.relu(&f);
        let f2 = linear(tape, &f, p.get("gtn.enc_ff2"), p.get("gtn.enc_ff2_b"))?;
        let enc = tape.add(&e1, &f2)?;
        head_parts.push(tape.slice_rows(&enc, io.w * b, io.k * b)?);
    }

    if let Some(ctx_t) = &ctx {
        let refs: Vec<&Tensor> = std::iter::repeat(ctx_t).take(io.k).collect();
        head_parts.push(tape.concat_rows(&refs)?);
    }

    let refs: Vec<&Tensor> = head_parts.iter().collect();
    let x = tape.concat_cols(&refs)?;
    let h = linear(tape, &x, p.get("gtn.head1"), p.get("gtn.head1_b"))?;
    let h = tape.relu(&h);
    let out = linear(tape, &h, p.get("gtn.head2"), p.get("gtn.head2_b"))?;
    Ok((out, trace))
}
