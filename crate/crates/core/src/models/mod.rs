//! Differentiable evaluator and manager networks.
//!
//! Three interchangeable backbones (MLP, TCN, GTN) serve either role. The
//! evaluator maps (past, future covariates, future schedule) to future water
//! levels; the manager maps (past, future rain/tide) to a bounded gate/pump
//! schedule, with the output clamp applied in one place for every backbone.

pub mod common;
mod gtn;
mod mlp;
mod tcn;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tape, Tensor};
use crate::data::{Normalizer, WindowSample};
use crate::error::{Error, Result};

pub use common::{
    assemble_batch, cross_attention, graph_conv, normalize_adjacency, IoSpec, RawBatch, Role,
};
pub use gtn::{AttentionTrace, GtnComponent, GtnConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    Mlp,
    Tcn,
    Gtn,
}

impl Arch {
    pub fn parse(name: &str) -> Result<Arch> {
        match name {
            "mlp" => Ok(Arch::Mlp),
            "tcn" => Ok(Arch::Tcn),
            "gtn" => Ok(Arch::Gtn),
            other => Err(Error::Config(format!("unknown architecture '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Arch::Mlp => "mlp",
            Arch::Tcn => "tcn",
            Arch::Gtn => "gtn",
        }
    }
}

/// Everything shared by the two roles.
#[derive(Clone, Debug)]
pub struct ModelCore {
    pub arch: Arch,
    pub io: IoSpec,
    pub gtn: GtnConfig,
    pub params: ParamSet,
    pub normalizer: Normalizer,
    /// Flattened degree-normalized station adjacency (n_water x n_water).
    pub adj_norm: Vec<f64>,
}

impl ModelCore {
    fn new(
        arch: Arch,
        io: IoSpec,
        gtn_cfg: GtnConfig,
        normalizer: Normalizer,
        adjacency: &[Vec<u8>],
        seed: u64,
    ) -> Result<Self> {
        gtn_cfg.validate()?;
        if adjacency.len() != io.n_water {
            return Err(Error::dim(
                "model",
                format!("adjacency over {} stations, io has {}", adjacency.len(), io.n_water),
            ));
        }
        let params = match arch {
            Arch::Mlp => mlp::init(seed, &io),
            Arch::Tcn => tcn::init(seed, &io),
            Arch::Gtn => gtn::init(seed, &io, &gtn_cfg),
        };
        Ok(ModelCore {
            arch,
            io,
            gtn: gtn_cfg,
            params,
            normalizer,
            adj_norm: normalize_adjacency(adjacency),
        })
    }

    fn check_batch(&self, batch: &RawBatch) -> Result<()> {
        if batch.w != self.io.w || batch.k != self.io.k || batch.n_all != self.io.n_all {
            return Err(Error::dim(
                "forward",
                format!(
                    "batch geometry (w={}, k={}, n_all={}) does not match model ({}, {}, {})",
                    batch.w, batch.k, batch.n_all, self.io.w, self.io.k, self.io.n_all
                ),
            ));
        }
        Ok(())
    }

    /// Dispatches the backbone on an already-built covariate future block.
    fn run(
        &self,
        tape: &mut Tape,
        batch: &RawBatch,
        fut_cov: &Tensor,
    ) -> Result<(Tensor, AttentionTrace)> {
        let bound = self.params.bind(tape);
        let past_seq = tape.constant(&Tensor::from_raw(
            vec![self.io.w * batch.b, self.io.n_all],
            batch.past_seq.clone(),
        ));
        match self.arch {
            Arch::Mlp => {
                let out = mlp::forward(tape, &bound, &self.io, batch, &past_seq, fut_cov)?;
                Ok((out, AttentionTrace::new()))
            }
            Arch::Tcn => {
                let out = tcn::forward(tape, &bound, &self.io, batch, &past_seq, fut_cov)?;
                Ok((out, AttentionTrace::new()))
            }
            Arch::Gtn => gtn::forward(
                tape,
                &bound,
                &self.io,
                &self.gtn,
                batch,
                &past_seq,
                fut_cov,
                &self.adj_norm,
            ),
        }
    }

    fn supports_attention(&self) -> bool {
        self.arch == Arch::Gtn && self.gtn.cross_attention
    }
}

/// Water-level forecaster.
#[derive(Clone, Debug)]
pub struct EvaluatorModel {
    pub core: ModelCore,
}

impl EvaluatorModel {
    pub fn new(
        arch: Arch,
        io: IoSpec,
        gtn_cfg: GtnConfig,
        normalizer: Normalizer,
        adjacency: &[Vec<u8>],
        seed: u64,
    ) -> Result<Self> {
        Ok(EvaluatorModel { core: ModelCore::new(arch, io, gtn_cfg, normalizer, adjacency, seed)? })
    }

    /// Predicts `(k*B) x n_water` normalized levels (time-major).
    ///
    /// `schedule` overrides the batch's observed future controls; pass a
    /// tape tensor here to differentiate through the schedule.
    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &RawBatch,
        schedule: Option<&Tensor>,
    ) -> Result<(Tensor, AttentionTrace)> {
        self.core.check_batch(batch)?;
        let rows = self.core.io.k * batch.b;
        let fut_known = tape.constant(&Tensor::from_raw(
            vec![rows, batch.n_known],
            batch.fut_known.clone(),
        ));
        let sched = match schedule {
            Some(t) => {
                if t.shape() != [rows, self.core.io.n_struct] {
                    return Err(Error::dim(
                        "evaluator_forward",
                        format!(
                            "schedule shape {:?}, expected [{rows}, {}]",
                            t.shape(),
                            self.core.io.n_struct
                        ),
                    ));
                }
                t.clone()
            }
            None => {
                let observed = batch.fut_sched.as_ref().ok_or_else(|| {
                    Error::Contract("batch carries no observed schedule".to_string())
                })?;
                tape.constant(&Tensor::from_raw(
                    vec![rows, self.core.io.n_struct],
                    observed.clone(),
                ))
            }
        };
        let fut_cov = tape.concat_cols(&[&fut_known, &sched])?;
        self.core.run(tape, batch, &fut_cov)
    }

    pub fn fingerprint(&self) -> String {
        self.core.params.fingerprint()
    }

    pub fn freeze(&mut self) {
        self.core.params.freeze();
    }

    /// Maps a fraction-space `(k*B) x n_struct` schedule into the z-scored
    /// space the forecaster was trained in. Differentiable, so manager
    /// gradients pass through.
    pub fn normalize_schedule(&self, tape: &mut Tape, sched: &Tensor) -> Result<Tensor> {
        let norm = &self.core.normalizer;
        let mut neg_mean = Vec::new();
        let mut inv_std = Vec::new();
        for (i, name) in norm.columns.iter().enumerate() {
            if name.starts_with("GATE_") || name.starts_with("PUMP_") {
                neg_mean.push(-norm.mean[i]);
                inv_std.push(1.0 / norm.std[i]);
            }
        }
        if neg_mean.len() != self.core.io.n_struct {
            return Err(Error::Schema(format!(
                "normalizer has {} control columns, model expects {}",
                neg_mean.len(),
                self.core.io.n_struct
            )));
        }
        let shift = Tensor::new(vec![1, neg_mean.len()], neg_mean)?;
        let scale = Tensor::new(vec![1, inv_std.len()], inv_std)?;
        let centered = tape.add_row_broadcast(sched, &shift)?;
        tape.mul_row_broadcast(&centered, &scale)
    }

    pub fn extract_attention(&self, sample: &WindowSample) -> Result<BTreeMap<String, Tensor>> {
        let batch = assemble_batch(std::slice::from_ref(sample))?;
        let mut tape = Tape::inference();
        let (_, trace) = self.forward(&mut tape, &batch, None)?;
        collect_attention(self.core.supports_attention(), trace, self.core.io.k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::of(&self.core, Role::Evaluator, None).write(path)
    }

    pub fn load(path: &Path) -> Result<EvaluatorModel> {
        let ckpt = Checkpoint::read(path)?;
        if ckpt.role != Role::Evaluator {
            return Err(Error::Contract(format!("{path:?} is not an evaluator checkpoint")));
        }
        Ok(EvaluatorModel { core: ckpt.into_core()? })
    }
}

/// Bounded schedule generator.
#[derive(Clone, Debug)]
pub struct ManagerModel {
    pub core: ModelCore,
    /// Per-structure [MIN, MAX] opening bounds (normalized fractions).
    pub bounds: Vec<(f64, f64)>,
}

impl ManagerModel {
    pub fn new(
        arch: Arch,
        io: IoSpec,
        gtn_cfg: GtnConfig,
        normalizer: Normalizer,
        adjacency: &[Vec<u8>],
        bounds: Vec<(f64, f64)>,
        seed: u64,
    ) -> Result<Self> {
        if bounds.len() != io.n_struct {
            return Err(Error::Config(format!(
                "{} bounds for {} structures",
                bounds.len(),
                io.n_struct
            )));
        }
        let (lo, hi) = bounds[0];
        if bounds.iter().any(|b| *b != (lo, hi)) {
            return Err(Error::Config(
                "per-structure bounds must agree (uniform clamp)".to_string(),
            ));
        }
        if lo >= hi {
            return Err(Error::Config(format!("bounds [{lo}, {hi}] are not ordered")));
        }
        let mut core = ModelCore::new(arch, io, gtn_cfg, normalizer, adjacency, seed)?;
        // start raw outputs at the mid-opening so the clamp band is live
        // from the first step
        let mid = 0.5 * (lo + hi);
        let bias_name = match arch {
            Arch::Mlp => "mlp.b3",
            Arch::Tcn => "tcn.head2_b",
            Arch::Gtn => "gtn.head2_b",
        };
        core.params.apply(bias_name, |d| d.iter_mut().for_each(|v| *v += mid))?;
        Ok(ManagerModel { core, bounds })
    }

    /// Emits a `(k*B) x n_struct` schedule (time-major), clamped to the
    /// structure bounds as the final layer regardless of backbone.
    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &RawBatch,
    ) -> Result<(Tensor, AttentionTrace)> {
        self.core.check_batch(batch)?;
        let rows = self.core.io.k * batch.b;
        let fut_cov = tape.constant(&Tensor::from_raw(
            vec![rows, batch.n_known],
            batch.fut_known.clone(),
        ));
        let (raw, trace) = self.core.run(tape, batch, &fut_cov)?;
        let (lo, hi) = self.bounds[0];
        let clamped = tape.clamp(&raw, lo, hi)?;
        Ok((clamped, trace))
    }

    pub fn fingerprint(&self) -> String {
        self.core.params.fingerprint()
    }

    pub fn extract_attention(&self, sample: &WindowSample) -> Result<BTreeMap<String, Tensor>> {
        let batch = assemble_batch(std::slice::from_ref(sample))?;
        let mut tape = Tape::inference();
        let (_, trace) = self.forward(&mut tape, &batch)?;
        collect_attention(self.core.supports_attention(), trace, self.core.io.k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::of(&self.core, Role::Manager, Some(self.bounds.clone())).write(path)
    }

    pub fn load(path: &Path) -> Result<ManagerModel> {
        let ckpt = Checkpoint::read(path)?;
        if ckpt.role != Role::Manager {
            return Err(Error::Contract(format!("{path:?} is not a manager checkpoint")));
        }
        let bounds = ckpt
            .bounds
            .clone()
            .ok_or_else(|| Error::Contract("manager checkpoint lacks bounds".to_string()))?;
        Ok(ManagerModel { core: ckpt.into_core()?, bounds })
    }
}

fn collect_attention(
    supported: bool,
    trace: AttentionTrace,
    k: usize,
) -> Result<BTreeMap<String, Tensor>> {
    if !supported {
        return Err(Error::Capability(
            "attention extraction needs a gtn model with cross_attention enabled".to_string(),
        ));
    }
    let mut out = BTreeMap::new();
    for (name, att) in trace {
        // [1, k, w+k] -> k x (w+k)
        let t_total = att.shape()[2];
        out.insert(
            name,
            Tensor::new(vec![k, t_total], att.data().to_vec())?,
        );
    }
    Ok(out)
}

// ── checkpoints ─────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Self-describing JSON container for a trained model.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub role: Role,
    pub arch: Arch,
    pub io: IoSpec,
    pub gtn: GtnConfig,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub normalizer: Normalizer,
    pub adj_norm: Vec<f64>,
    pub frozen: bool,
    params: BTreeMap<String, ParamEntry>,
    pub fingerprint: String,
}

impl Checkpoint {
    fn of(core: &ModelCore, role: Role, bounds: Option<Vec<(f64, f64)>>) -> Checkpoint {
        let params = core
            .params
            .iter()
            .map(|(name, t)| {
                (name.to_string(), ParamEntry { shape: t.shape().to_vec(), data: t.data().to_vec() })
            })
            .collect();
        Checkpoint {
            role,
            arch: core.arch,
            io: core.io.clone(),
            gtn: core.gtn.clone(),
            bounds,
            normalizer: core.normalizer.clone(),
            adj_norm: core.adj_norm.clone(),
            frozen: core.params.frozen(),
            params,
            fingerprint: core.params.fingerprint(),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        Ok(ckpt)
    }

    fn into_core(self) -> Result<ModelCore> {
        let mut params = ParamSet::new();
        for (name, entry) in &self.params {
            params.insert(name, Tensor::new(entry.shape.clone(), entry.data.clone())?);
        }
        if params.fingerprint() != self.fingerprint {
            return Err(Error::Contract(
                "checkpoint fingerprint mismatch: parameter data corrupted".to_string(),
            ));
        }
        if self.frozen {
            params.freeze();
        }
        Ok(ModelCore {
            arch: self.arch,
            io: self.io,
            gtn: self.gtn,
            params,
            normalizer: self.normalizer,
            adj_norm: self.adj_norm,
        })
    }
}
