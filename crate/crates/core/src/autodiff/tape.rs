//! Define-by-run reverse-mode differentiation.
//!
//! A `Tape` records primitive applications during a forward pass and replays
//! them in reverse to accumulate gradients. Tapes are rebuilt per forward
//! pass and are single-threaded; tensors bound to a dropped tape simply
//! become constants on the next tape they touch.
//!
//! Layout conventions used by callers:
//! - matrices are row-major `[rows, cols]`
//! - batched 3-D tensors are `[blocks, m, n]` with contiguous blocks
//! - time-major sequences store step `t` of batch item `b` at row `t*B + b`

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::tensor::{NodeRef, Tensor};

static TAPE_IDS: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    Matmul(usize, usize),
    Bmm(usize, usize),
    BmmNt(usize, usize),
    Transpose(usize),
    Reshape(usize),
    SwapBlocks { x: usize, t: usize, b: usize },
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Clamp { x: usize, lo: f64, hi: f64 },
    SoftmaxRows(usize),
    SumAll(usize),
    MeanAll(usize),
    AddRowBroadcast { x: usize, row: usize },
    MulRowBroadcast { x: usize, row: usize },
    AddStepBroadcast { x: usize, table: usize, batch: usize },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows { x: usize, start: usize, len: usize },
    SliceCols { x: usize, start: usize, len: usize },
    SquaredError(usize, usize),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Recording tape. Build one per forward pass; call [`Tape::backward`] once
/// or more (each call recomputes gradients from scratch).
pub struct Tape {
    id: u64,
    recording: bool,
    nodes: Vec<Node>,
    params: Vec<(String, usize)>,
}

impl Tape {
    /// A tape that records operations for differentiation.
    pub fn new() -> Self {
        Tape {
            id: TAPE_IDS.fetch_add(1, Ordering::Relaxed),
            recording: true,
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    /// A non-recording tape: values are computed, nothing is retained and
    /// `backward` is unavailable. Used for inference paths.
    pub fn inference() -> Self {
        Tape {
            id: TAPE_IDS.fetch_add(1, Ordering::Relaxed),
            recording: false,
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn bind(&mut self, t: &Tensor) -> usize {
        match t.node {
            Some(nr) if nr.tape == self.id => nr.index,
            _ => self.push_leaf(t, false).node.unwrap().index,
        }
    }

    fn push_leaf(&mut self, t: &Tensor, needs_grad: bool) -> Tensor {
        let index = self.nodes.len();
        let mut v = t.detached();
        v.node = Some(NodeRef { tape: self.id, index });
        self.nodes.push(Node { op: Op::Leaf, value: v.clone(), needs_grad });
        v
    }

    /// Registers a non-differentiable leaf.
    pub fn constant(&mut self, t: &Tensor) -> Tensor {
        if !self.recording {
            return t.detached();
        }
        self.push_leaf(t, false)
    }

    /// Registers a differentiable unnamed leaf (gradient retrievable via
    /// [`Gradients::wrt`]).
    pub fn input(&mut self, t: &Tensor) -> Tensor {
        if !self.recording {
            return t.detached();
        }
        self.push_leaf(t, true)
    }

    /// Registers a differentiable named parameter leaf.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Tensor {
        if !self.recording {
            return t.detached();
        }
        let v = self.push_leaf(t, true);
        self.params.push((name.to_string(), v.node.unwrap().index));
        v
    }

    fn emit<F>(&mut self, out: Tensor, inputs: &[&Tensor], build: F) -> Tensor
    where
        F: FnOnce(&[usize]) -> Op,
    {
        if !self.recording {
            return out;
        }
        let ids: Vec<usize> = inputs.iter().map(|t| self.bind(t)).collect();
        let needs = ids.iter().any(|&i| self.nodes[i].needs_grad);
        let mut out = out;
        let index = self.nodes.len();
        out.node = Some(NodeRef { tape: self.id, index });
        self.nodes.push(Node { op: build(&ids), value: out.clone(), needs_grad: needs });
        out
    }

    // ── elementwise ─────────────────────────────────────────────────

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("add", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        Ok(self.emit(out, &[a, b], |ids| Op::Add(ids[0], ids[1])))
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("sub", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        Ok(self.emit(out, &[a, b], |ids| Op::Sub(ids[0], ids[1])))
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("mul", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        Ok(self.emit(out, &[a, b], |ids| Op::Mul(ids[0], ids[1])))
    }

    pub fn add_scalar(&mut self, a: &Tensor, c: f64) -> Tensor {
        let data = a.data().iter().map(|x| x + c).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        self.emit(out, &[a], |ids| Op::AddScalar(ids[0]))
    }

    pub fn mul_scalar(&mut self, a: &Tensor, c: f64) -> Tensor {
        let data = a.data().iter().map(|x| x * c).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        self.emit(out, &[a], |ids| Op::MulScalar(ids[0], c))
    }

    // ── linear algebra ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (m, k) = as_matrix("matmul", a)?;
        let (k2, n) = as_matrix("matmul", b)?;
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("inner dimensions differ: {:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let data = mm_nn(a.data(), m, k, b.data(), n);
        let out = Tensor::from_raw(vec![m, n], data);
        Ok(self.emit(out, &[a, b], |ids| Op::Matmul(ids[0], ids[1])))
    }

    /// Batched matmul over `[B, m, k] x [B, k, n]`.
    pub fn bmm(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (bs, m, k) = as_batched("bmm", a)?;
        let (bs2, k2, n) = as_batched("bmm", b)?;
        if bs != bs2 || k != k2 {
            return Err(Error::dim(
                "bmm",
                format!("incompatible shapes {:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let mut data = Vec::with_capacity(bs * m * n);
        for blk in 0..bs {
            data.extend(mm_nn(&a.data()[blk * m * k..(blk + 1) * m * k], m, k,
                              &b.data()[blk * k * n..(blk + 1) * k * n], n));
        }
        let out = Tensor::from_raw(vec![bs, m, n], data);
        Ok(self.emit(out, &[a, b], |ids| Op::Bmm(ids[0], ids[1])))
    }

    /// Batched `q · kᵀ` over `[B, m, d] x [B, n, d] -> [B, m, n]`.
    pub fn bmm_nt(&mut self, q: &Tensor, k: &Tensor) -> Result<Tensor> {
        let (bs, m, d) = as_batched("bmm_nt", q)?;
        let (bs2, n, d2) = as_batched("bmm_nt", k)?;
        if bs != bs2 || d != d2 {
            return Err(Error::dim(
                "bmm_nt",
                format!("incompatible shapes {:?} x {:?}", q.shape(), k.shape()),
            ));
        }
        let mut data = Vec::with_capacity(bs * m * n);
        for blk in 0..bs {
            data.extend(mm_nt(&q.data()[blk * m * d..(blk + 1) * m * d], m, d,
                              &k.data()[blk * n * d..(blk + 1) * n * d], n));
        }
        let out = Tensor::from_raw(vec![bs, m, n], data);
        Ok(self.emit(out, &[q, k], |ids| Op::BmmNt(ids[0], ids[1])))
    }

    pub fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        let (m, n) = as_matrix("transpose", a)?;
        let data = transpose_raw(a.data(), m, n);
        let out = Tensor::from_raw(vec![n, m], data);
        Ok(self.emit(out, &[a], |ids| Op::Transpose(ids[0])))
    }

    pub fn reshape(&mut self, a: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != a.numel() {
            return Err(Error::dim(
                "reshape",
                format!("cannot reshape {:?} to {:?}", a.shape(), shape),
            ));
        }
        // row-major data is unchanged; share the buffer
        let out = a.with_shape(shape);
        Ok(self.emit(out, &[a], |ids| Op::Reshape(ids[0])))
    }

    /// Reorders a time-major `(t*b) x c` matrix into batch-major `(b*t) x c`.
    pub fn swap_blocks(&mut self, a: &Tensor, t: usize, b: usize) -> Result<Tensor> {
        let (rows, c) = as_matrix("swap_blocks", a)?;
        if rows != t * b {
            return Err(Error::dim(
                "swap_blocks",
                format!("{rows} rows cannot split into {t} x {b} blocks"),
            ));
        }
        let data = swap_rows_raw(a.data(), t, b, c);
        let out = Tensor::from_raw(vec![b * t, c], data);
        Ok(self.emit(out, &[a], |ids| Op::SwapBlocks { x: ids[0], t, b }))
    }

    // ── activations ─────────────────────────────────────────────────

    pub fn relu(&mut self, a: &Tensor) -> Tensor {
        let data = a.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        self.emit(out, &[a], |ids| Op::Relu(ids[0]))
    }

    pub fn tanh(&mut self, a: &Tensor) -> Tensor {
        let data = a.data().iter().map(|x| x.tanh()).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        self.emit(out, &[a], |ids| Op::Tanh(ids[0]))
    }

    pub fn sigmoid(&mut self, a: &Tensor) -> Tensor {
        let data = a.data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        self.emit(out, &[a], |ids| Op::Sigmoid(ids[0]))
    }

    /// Elementwise `min(max(x, lo), hi)`. Gradient is 1 strictly inside the
    /// band and 0 elsewhere, including exactly at the boundaries.
    pub fn clamp(&mut self, a: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
        if lo >= hi {
            return Err(Error::Config(format!("clamp bounds [{lo}, {hi}] are not ordered")));
        }
        let data = a.data().iter().map(|x| x.max(lo).min(hi)).collect();
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        Ok(self.emit(out, &[a], |ids| Op::Clamp { x: ids[0], lo, hi }))
    }

    /// Row-stabilized softmax over the last dimension.
    pub fn softmax_rows(&mut self, a: &Tensor) -> Tensor {
        let c = a.cols().max(1);
        let mut data = Vec::with_capacity(a.numel());
        for row in a.data().chunks(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| e / sum));
        }
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        self.emit(out, &[a], |ids| Op::SoftmaxRows(ids[0]))
    }

    // ── reductions ──────────────────────────────────────────────────

    pub fn sum_all(&mut self, a: &Tensor) -> Tensor {
        let s: f64 = a.data().iter().sum();
        let out = Tensor::from_raw(vec![1], vec![s]);
        self.emit(out, &[a], |ids| Op::SumAll(ids[0]))
    }

    pub fn mean_all(&mut self, a: &Tensor) -> Tensor {
        let s: f64 = a.data().iter().sum();
        let out = Tensor::from_raw(vec![1], vec![s / a.numel() as f64]);
        self.emit(out, &[a], |ids| Op::MeanAll(ids[0]))
    }

    /// `sum((a - b)^2)` as a scalar.
    pub fn squared_error(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("squared_error", a, b)?;
        let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let out = Tensor::from_raw(vec![1], vec![s]);
        Ok(self.emit(out, &[a, b], |ids| Op::SquaredError(ids[0], ids[1])))
    }

    // ── broadcasts ──────────────────────────────────────────────────

    /// Adds a `[1, c]` row vector to every row of `[r, c]`.
    pub fn add_row_broadcast(&mut self, a: &Tensor, row: &Tensor) -> Result<Tensor> {
        let (_, c) = as_matrix("add_row_broadcast", a)?;
        if row.numel() != c {
            return Err(Error::dim(
                "add_row_broadcast",
                format!("row {:?} does not match {:?}", row.shape(), a.shape()),
            ));
        }
        let rv = row.data();
        let mut data = Vec::with_capacity(a.numel());
        for r in a.data().chunks(c) {
            data.extend(r.iter().zip(rv).map(|(x, y)| x + y));
        }
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        Ok(self.emit(out, &[a, row], |ids| Op::AddRowBroadcast { x: ids[0], row: ids[1] }))
    }

    /// Multiplies every row of `[r, c]` by a `[1, c]` row vector.
    pub fn mul_row_broadcast(&mut self, a: &Tensor, row: &Tensor) -> Result<Tensor> {
        let (_, c) = as_matrix("mul_row_broadcast", a)?;
        if row.numel() != c {
            return Err(Error::dim(
                "mul_row_broadcast",
                format!("row {:?} does not match {:?}", row.shape(), a.shape()),
            ));
        }
        let rv = row.data();
        let mut data = Vec::with_capacity(a.numel());
        for r in a.data().chunks(c) {
            data.extend(r.iter().zip(rv).map(|(x, y)| x * y));
        }
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        Ok(self.emit(out, &[a, row], |ids| Op::MulRowBroadcast { x: ids[0], row: ids[1] }))
    }

    /// Adds `table[t]` to every batch row of time block `t` in a time-major
    /// `(steps*batch) x c` matrix. Used for learned positional tables.
    pub fn add_step_broadcast(
        &mut self,
        a: &Tensor,
        table: &Tensor,
        steps: usize,
        batch: usize,
    ) -> Result<Tensor> {
        let (rows, c) = as_matrix("add_step_broadcast", a)?;
        let (tr, tc) = as_matrix("add_step_broadcast", table)?;
        if rows != steps * batch || tr != steps || tc != c {
            return Err(Error::dim(
                "add_step_broadcast",
                format!("{:?} + table {:?} with steps {steps}, batch {batch}", a.shape(), table.shape()),
            ));
        }
        let mut data = Vec::with_capacity(a.numel());
        for (i, r) in a.data().chunks(c).enumerate() {
            let t = i / batch;
            data.extend(r.iter().zip(&table.data()[t * c..(t + 1) * c]).map(|(x, y)| x + y));
        }
        let out = Tensor::from_raw(a.shape().to_vec(), data);
        Ok(self.emit(out, &[a, table], |ids| Op::AddStepBroadcast {
            x: ids[0],
            table: ids[1],
            batch,
        }))
    }

    // ── structure ───────────────────────────────────────────────────

    pub fn concat_rows(&mut self, parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::dim("concat_rows", "no inputs".to_string()));
        }
        let c = parts[0].cols();
        let mut rows = 0;
        for p in parts {
            let (r, pc) = as_matrix("concat_rows", p)?;
            if pc != c {
                return Err(Error::dim(
                    "concat_rows",
                    format!("column mismatch: {c} vs {pc}"),
                ));
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * c);
        for p in parts {
            data.extend_from_slice(p.data());
        }
        let out = Tensor::from_raw(vec![rows, c], data);
        Ok(self.emit(out, parts, |ids| Op::ConcatRows(ids.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::dim("concat_cols", "no inputs".to_string()));
        }
        let r = parts[0].rows();
        let mut cols = 0;
        for p in parts {
            let (pr, pc) = as_matrix("concat_cols", p)?;
            if pr != r {
                return Err(Error::dim("concat_cols", format!("row mismatch: {r} vs {pr}")));
            }
            cols += pc;
        }
        let mut data = Vec::with_capacity(r * cols);
        for i in 0..r {
            for p in parts {
                let pc = p.cols();
                data.extend_from_slice(&p.data()[i * pc..(i + 1) * pc]);
            }
        }
        let out = Tensor::from_raw(vec![r, cols], data);
        Ok(self.emit(out, parts, |ids| Op::ConcatCols(ids.to_vec())))
    }

    pub fn slice_rows(&mut self, a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        let (r, c) = as_matrix("slice_rows", a)?;
        if start + len > r {
            return Err(Error::dim(
                "slice_rows",
                format!("rows {start}..{} out of 0..{r}", start + len),
            ));
        }
        let data = a.data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::from_raw(vec![len, c], data);
        Ok(self.emit(out, &[a], |ids| Op::SliceRows { x: ids[0], start, len }))
    }

    pub fn slice_cols(&mut self, a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        let (r, c) = as_matrix("slice_cols", a)?;
        if start + len > c {
            return Err(Error::dim(
                "slice_cols",
                format!("cols {start}..{} out of 0..{c}", start + len),
            ));
        }
        let mut data = Vec::with_capacity(r * len);
        for row in a.data().chunks(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let out = Tensor::from_raw(vec![r, len], data);
        Ok(self.emit(out, &[a], |ids| Op::SliceCols { x: ids[0], start, len }))
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Every registered parameter gets a
    /// gradient entry; leaves the loss does not reach get zeros.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if !self.recording {
            return Err(Error::Contract("backward on a non-recording tape".to_string()));
        }
        let node = match loss.node {
            Some(nr) if nr.tape == self.id => nr.index,
            _ => return Err(Error::Contract("loss tensor is not on this tape".to_string())),
        };
        if !loss.is_scalar() {
            return Err(Error::Contract(format!(
                "loss must be scalar, got shape {:?}",
                loss.shape()
            )));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[node] = Some(vec![1.0]);

        for i in (0..=node).rev() {
            if grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let gy = grads[i].take().unwrap();
            self.propagate(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { named: self.params.clone(), shapes, grads })
    }

    fn propagate(&self, i: usize, gy: &[f64], grads: &mut Vec<Option<Vec<f64>>>) {
        let nodes = &self.nodes;
        let needs = |idx: usize| nodes[idx].needs_grad;
        let val = |idx: usize| nodes[idx].value.data();
        let numel = |idx: usize| nodes[idx].value.numel();

        macro_rules! slot {
            ($idx:expr) => {
                grads[$idx].get_or_insert_with(|| vec![0.0; numel($idx)])
            };
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needs(*a) {
                    for (g, d) in slot!(*a).iter_mut().zip(gy) {
                        *g += d;
                    }
                }
                if needs(*b) {
                    for (g, d) in slot!(*b).iter_mut().zip(gy) {
                        *g += d;
                    }
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    for (g, d) in slot!(*a).iter_mut().zip(gy) {
                        *g += d;
                    }
                }
                if needs(*b) {
                    for (g, d) in slot!(*b).iter_mut().zip(gy) {
                        *g -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let bv = val(*b);
                    for ((g, d), y) in slot!(*a).iter_mut().zip(gy).zip(bv) {
                        *g += d * y;
                    }
                }
                if needs(*b) {
                    let av = val(*a);
                    for ((g, d), x) in slot!(*b).iter_mut().zip(gy).zip(av) {
                        *g += d * x;
                    }
                }
            }
            Op::AddScalar(a) => {
                if needs(*a) {
                    for (g, d) in slot!(*a).iter_mut().zip(gy) {
                        *g += d;
                    }
                }
            }
            Op::MulScalar(a, c) => {
                if needs(*a) {
                    for (g, d) in slot!(*a).iter_mut().zip(gy) {
                        *g += d * c;
                    }
                }
            }
            Op::Matmul(a, b) => {
                let (m, k) = (nodes[*a].value.rows(), nodes[*a].value.cols());
                let n = nodes[*b].value.cols();
                if needs(*a) {
                    let da = mm_nt(gy, m, n, val(*b), k);
                    for (g, d) in slot!(*a).iter_mut().zip(da) {
                        *g += d;
                    }
                }
                if needs(*b) {
                    let db = mm_tn(val(*a), m, k, gy, n);
                    for (g, d) in slot!(*b).iter_mut().zip(db) {
                        *g += d;
                    }
                }
            }
            Op::Bmm(a, b) => {
                let sa = nodes[*a].value.shape();
                let sb = nodes[*b].value.shape();
                let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                if needs(*a) {
                    let bv = val(*b);
                    let sa_g = slot!(*a);
                    for blk in 0..bs {
                        let da = mm_nt(&gy[blk * m * n..(blk + 1) * m * n], m, n,
                                       &bv[blk * k * n..(blk + 1) * k * n], k);
                        for (g, d) in sa_g[blk * m * k..(blk + 1) * m * k].iter_mut().zip(da) {
                            *g += d;
                        }
                    }
                }
                if needs(*b) {
                    let av = val(*a);
                    let sb_g = slot!(*b);
                    for blk in 0..bs {
                        let db = mm_tn(&av[blk * m * k..(blk + 1) * m * k], m, k,
                                       &gy[blk * m * n..(blk + 1) * m * n], n);
                        for (g, d) in sb_g[blk * k * n..(blk + 1) * k * n].iter_mut().zip(db) {
                            *g += d;
                        }
                    }
                }
            }
            Op::BmmNt(q, k) => {
                let sq = nodes[*q].value.shape();
                let sk = nodes[*k].value.shape();
                let (bs, m, d, n) = (sq[0], sq[1], sq[2], sk[1]);
                if needs(*q) {
                    let kv = val(*k);
                    let gq = slot!(*q);
                    for blk in 0..bs {
                        let dq = mm_nn(&gy[blk * m * n..(blk + 1) * m * n], m, n,
                                       &kv[blk * n * d..(blk + 1) * n * d], d);
                        for (g, dd) in gq[blk * m * d..(blk + 1) * m * d].iter_mut().zip(dq) {
                            *g += dd;
                        }
                    }
                }
                if needs(*k) {
                    let qv = val(*q);
                    let gk = slot!(*k);
                    for blk in 0..bs {
                        let dk = mm_tn(&gy[blk * m * n..(blk + 1) * m * n], m, n,
                                       &qv[blk * m * d..(blk + 1) * m * d], d);
                        for (g, dd) in gk[blk * n * d..(blk + 1) * n * d].iter_mut().zip(dk) {
                            *g += dd;
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if needs(*a) {
                    let (m, n) = (nodes[*a].value.rows(), nodes[*a].value.cols());
                    let da = transpose_raw(gy, n, m);
                    for (g, d) in slot!(*a).iter_mut().zip(da) {
                        *g += d;
                    }
                }
            }
            Op::Reshape(a) => {
                if needs(*a) {
                    for (g, d) in slot!(*a).iter_mut().zip(gy) {
                        *g += d;
                    }
                }
            }
            Op::SwapBlocks { x, t, b } => {
                if needs(*x) {
                    let c = nodes[*x].value.cols();
                    let da = swap_rows_raw(gy, *b, *t, c);
                    for (g, d) in slot!(*x).iter_mut().zip(da) {
                        *g += d;
                    }
                }
            }
            Op::Relu(a) => {
                if needs(*a) {
                    let xv = val(*a);
                    for ((g, d), x) in slot!(*a).iter_mut().zip(gy).zip(xv) {
                        if *x > 0.0 {
                            *g += d;
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                if needs(*a) {
                    let yv = nodes[i].value.data();
                    for ((g, d), y) in slot!(*a).iter_mut().zip(gy).zip(yv) {
                        *g += d * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if needs(*a) {
                    let yv = nodes[i].value.data();
                    for ((g, d), y) in slot!(*a).iter_mut().zip(gy).zip(yv) {
                        *g += d * y * (1.0 - y);
                    }
                }
            }
            Op::Clamp { x, lo, hi } => {
                if needs(*x) {
                    let xv = val(*x);
                    for ((g, d), v) in slot!(*x).iter_mut().zip(gy).zip(xv) {
                        if *v > *lo && *v < *hi {
                            *g += d;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if needs(*a) {
                    let yv = nodes[i].value.data();
                    let c = nodes[i].value.cols().max(1);
                    let ga = slot!(*a);
                    for r in 0..yv.len() / c {
                        let s = &yv[r * c..(r + 1) * c];
                        let dy = &gy[r * c..(r + 1) * c];
                        let dot: f64 = s.iter().zip(dy).map(|(si, di)| si * di).sum();
                        for j in 0..c {
                            ga[r * c + j] += s[j] * (dy[j] - dot);
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if needs(*a) {
                    let d = gy[0];
                    for g in slot!(*a).iter_mut() {
                        *g += d;
                    }
                }
            }
            Op::MeanAll(a) => {
                if needs(*a) {
                    let d = gy[0] / numel(*a) as f64;
                    for g in slot!(*a).iter_mut() {
                        *g += d;
                    }
                }
            }
            Op::SquaredError(a, b) => {
                let d = gy[0];
                let (av, bv) = (val(*a), val(*b));
                if needs(*a) {
                    for ((g, x), y) in slot!(*a).iter_mut().zip(av).zip(bv) {
                        *g += 2.0 * d * (x - y);
                    }
                }
                if needs(*b) {
                    for ((g, x), y) in slot!(*b).iter_mut().zip(av).zip(bv) {
                        *g -= 2.0 * d * (x - y);
                    }
                }
            }
            Op::AddRowBroadcast { x, row } => {
                let c = nodes[*row].value.numel();
                if needs(*x) {
                    for (g, d) in slot!(*x).iter_mut().zip(gy) {
                        *g += d;
                    }
                }
                if needs(*row) {
                    let gr = slot!(*row);
                    for chunk in gy.chunks(c) {
                        for (g, d) in gr.iter_mut().zip(chunk) {
                            *g += d;
                        }
                    }
                }
            }
            Op::MulRowBroadcast { x, row } => {
                let c = nodes[*row].value.numel();
                if needs(*x) {
                    let rv = val(*row);
                    let gx = slot!(*x);
                    for (i_row, chunk) in gy.chunks(c).enumerate() {
                        for (j, d) in chunk.iter().enumerate() {
                            gx[i_row * c + j] += d * rv[j];
                        }
                    }
                }
                if needs(*row) {
                    let xv = val(*x);
                    let gr = slot!(*row);
                    for (i_row, chunk) in gy.chunks(c).enumerate() {
                        for (j, d) in chunk.iter().enumerate() {
                            gr[j] += d * xv[i_row * c + j];
                        }
                    }
                }
            }
            Op::AddStepBroadcast { x, table, batch } => {
                let c = nodes[*table].value.cols();
                if needs(*x) {
                    for (g, d) in slot!(*x).iter_mut().zip(gy) {
                        *g += d;
                    }
                }
                if needs(*table) {
                    let gt = slot!(*table);
                    for (i_row, chunk) in gy.chunks(c).enumerate() {
                        let t = i_row / batch;
                        for (j, d) in chunk.iter().enumerate() {
                            gt[t * c + j] += d;
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = numel(p);
                    if needs(p) {
                        for (g, d) in slot!(p).iter_mut().zip(&gy[offset..offset + len]) {
                            *g += d;
                        }
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = nodes[i].value.rows();
                let total_c = nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let pc = nodes[p].value.cols();
                    if needs(p) {
                        let gp = slot!(p);
                        for r in 0..rows {
                            let src = &gy[r * total_c + offset..r * total_c + offset + pc];
                            for (g, d) in gp[r * pc..(r + 1) * pc].iter_mut().zip(src) {
                                *g += d;
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::SliceRows { x, start, len } => {
                if needs(*x) {
                    let c = nodes[*x].value.cols();
                    let gx = slot!(*x);
                    for (g, d) in gx[start * c..(start + len) * c].iter_mut().zip(gy) {
                        *g += d;
                    }
                }
            }
            Op::SliceCols { x, start, len } => {
                if needs(*x) {
                    let c = nodes[*x].value.cols();
                    let gx = slot!(*x);
                    for (r, chunk) in gy.chunks(*len).enumerate() {
                        for (j, d) in chunk.iter().enumerate() {
                            gx[r * c + start + j] += d;
                        }
                    }
                }
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Gradient results of one backward pass.
pub struct Gradients {
    named: Vec<(String, usize)>,
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradients for every parameter registered on the tape, keyed by name.
    /// Parameters the loss never reached map to zero tensors.
    pub fn by_name(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (name, idx) in &self.named {
            out.insert(name.clone(), self.tensor_for(*idx));
        }
        out
    }

    /// Gradient with respect to any tensor produced on the tape.
    pub fn wrt(&self, t: &Tensor) -> Option<Tensor> {
        t.node.map(|nr| self.tensor_for(nr.index))
    }

    fn tensor_for(&self, idx: usize) -> Tensor {
        match &self.grads[idx] {
            Some(g) => Tensor::from_raw(self.shapes[idx].clone(), g.clone()),
            None => Tensor::zeros(self.shapes[idx].clone()),
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn as_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        [n] => Ok((1, *n)),
        s => Err(Error::dim(op, format!("expected matrix, got shape {s:?}"))),
    }
}

fn as_batched(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [b, m, n] => Ok((*b, *m, *n)),
        s => Err(Error::dim(op, format!("expected 3-d tensor, got shape {s:?}"))),
    }
}

// ── raw kernels ─────────────────────────────────────────────────────

/// `a (m x k) · b (k x n)` with 4-row register blocking.
pub(crate) fn mm_nn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let full = m / 4 * 4;
    for (blk, block) in out[..full * n].chunks_exact_mut(4 * n).enumerate() {
        let i0 = blk * 4;
        let (o0, rest) = block.split_at_mut(n);
        let (o1, rest) = rest.split_at_mut(n);
        let (o2, o3) = rest.split_at_mut(n);
        let a0 = &a[i0 * k..(i0 + 1) * k];
        let a1 = &a[(i0 + 1) * k..(i0 + 2) * k];
        let a2 = &a[(i0 + 2) * k..(i0 + 3) * k];
        let a3 = &a[(i0 + 3) * k..(i0 + 4) * k];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let (c0, c1, c2, c3) = (a0[p], a1[p], a2[p], a3[p]);
            for j in 0..n {
                o0[j] += c0 * brow[j];
                o1[j] += c1 * brow[j];
                o2[j] += c2 * brow[j];
                o3[j] += c3 * brow[j];
            }
        }
    }
    for i in full..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `x (m x k) · yᵀ` where `y` is `(n x k)`; out `m x n` of row dot-products.
pub(crate) fn mm_nt(x: &[f64], m: usize, k: usize, y: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let full = m / 4 * 4;
    for (blk, block) in out[..full * n].chunks_exact_mut(4 * n).enumerate() {
        let i0 = blk * 4;
        let x0 = &x[i0 * k..(i0 + 1) * k];
        let x1 = &x[(i0 + 1) * k..(i0 + 2) * k];
        let x2 = &x[(i0 + 2) * k..(i0 + 3) * k];
        let x3 = &x[(i0 + 3) * k..(i0 + 4) * k];
        for j in 0..n {
            let yr = &y[j * k..(j + 1) * k];
            let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for p in 0..k {
                let yv = yr[p];
                s0 += x0[p] * yv;
                s1 += x1[p] * yv;
                s2 += x2[p] * yv;
                s3 += x3[p] * yv;
            }
            block[j] = s0;
            block[n + j] = s1;
            block[2 * n + j] = s2;
            block[3 * n + j] = s3;
        }
    }
    for i in full..m {
        let xr = &x[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let yr = &y[j * k..(j + 1) * k];
            *o = xr.iter().zip(yr).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// `xᵀ · y` where `x` is `(m x k)` and `y` is `(m x n)`; out `k x n`.
pub(crate) fn mm_tn(x: &[f64], m: usize, k: usize, y: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    let full = m / 4 * 4;
    let mut i = 0;
    while i < full {
        let x0 = &x[i * k..(i + 1) * k];
        let x1 = &x[(i + 1) * k..(i + 2) * k];
        let x2 = &x[(i + 2) * k..(i + 3) * k];
        let x3 = &x[(i + 3) * k..(i + 4) * k];
        let y0 = &y[i * n..(i + 1) * n];
        let y1 = &y[(i + 1) * n..(i + 2) * n];
        let y2 = &y[(i + 2) * n..(i + 3) * n];
        let y3 = &y[(i + 3) * n..(i + 4) * n];
        for p in 0..k {
            let (c0, c1, c2, c3) = (x0[p], x1[p], x2[p], x3[p]);
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += c0 * y0[j] + c1 * y1[j] + c2 * y2[j] + c3 * y3[j];
            }
        }
        i += 4;
    }
    for i in full..m {
        let xr = &x[i * k..(i + 1) * k];
        let yr = &y[i * n..(i + 1) * n];
        for (p, &xv) in xr.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &yv) in orow.iter_mut().zip(yr) {
                *o += xv * yv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn swap_rows_raw(a: &[f64], t: usize, b: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for ti in 0..t {
        for bi in 0..b {
            let src = (ti * b + bi) * c;
            let dst = (bi * t + ti) * c;
            out[dst..dst + c].copy_from_slice(&a[src..src + c]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, v: Vec<f64>) -> Tensor {
        Tensor::new(vec![rows, cols], v).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = t2(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let b = t2(2, 2, vec![3.0, 4.0, 5.0, 6.0]);
        let c = tape.matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_hand_value() {
        let mut tape = Tape::new();
        let a = t2(1, 2, vec![1.0, 2.0]);
        let b = t2(2, 1, vec![3.0, 4.0]);
        let c = tape.matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let mut tape = Tape::new();
        let a = t2(1, 2, vec![1.0, 2.0]);
        let b = t2(3, 1, vec![3.0, 4.0, 5.0]);
        let err = tape.matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[1, 2]") && err.contains("[3, 1]"), "{err}");
    }

    #[test]
    fn clamp_cases() {
        let mut tape = Tape::new();
        let x = tape.input(&t2(1, 3, vec![-2.0, 0.3, 7.0]));
        let y = tape.clamp(&x, 0.0, 1.0).unwrap();
        assert_eq!(y.data(), &[0.0, 0.3, 1.0]);
        let loss = tape.sum_all(&y);
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.wrt(&x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn clamp_rejects_bad_bounds() {
        let mut tape = Tape::new();
        let x = Tensor::scalar(0.5).unwrap();
        assert!(tape.clamp(&x, 1.0, 1.0).is_err());
    }

    #[test]
    fn clamp_scalar_saturation_and_interior() {
        let mut tape = Tape::new();
        let hi = tape.clamp(&Tensor::scalar(5.0).unwrap(), 0.0, 1.0).unwrap();
        assert_eq!(hi.item(), 1.0);
        let x = tape.input(&Tensor::scalar(0.5).unwrap());
        let y = tape.clamp(&x, 0.0, 1.0).unwrap();
        assert_eq!(y.item(), 0.5);
        let loss = tape.sum_all(&y);
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.wrt(&x).unwrap().item(), 1.0);
    }

    #[test]
    fn softmax_uniform_and_hand_value() {
        let mut tape = Tape::new();
        let u = tape.softmax_rows(&t2(1, 3, vec![0.0, 0.0, 0.0]));
        for v in u.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = tape.softmax_rows(&t2(1, 2, vec![0.0, 3.0f64.ln()]));
        assert!((s.data()[0] - 0.25).abs() < 1e-12);
        assert!((s.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = t2(4, 5, (0..20).map(|i| (i as f64 * 0.7).sin() * 3.0).collect());
        let s = tape.softmax_rows(&x);
        for row in s.data().chunks(5) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_linear_and_square() {
        let mut tape = Tape::new();
        let x = tape.input(&t2(1, 3, vec![1.0, 2.0, 3.0]));
        let s = tape.sum_all(&x);
        let g = tape.backward(&s).unwrap();
        assert_eq!(g.wrt(&x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let x = tape.input(&Tensor::scalar(3.0).unwrap());
        let y = tape.mul(&x, &x).unwrap();
        let g = tape.backward(&y).unwrap();
        assert_eq!(g.wrt(&x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.input(&t2(1, 2, vec![1.0, 2.0]));
        let y = tape.add_scalar(&x, 1.0);
        assert!(matches!(tape.backward(&y), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_twice_identical() {
        let mut tape = Tape::new();
        let x = tape.input(&t2(2, 2, vec![0.5, -1.0, 2.0, 0.25]));
        let h = tape.tanh(&x);
        let loss = tape.mean_all(&h);
        let g1 = tape.backward(&loss).unwrap();
        let g2 = tape.backward(&loss).unwrap();
        assert_eq!(g1.wrt(&x).unwrap().data(), g2.wrt(&x).unwrap().data());
    }

    #[test]
    fn unreachable_param_gets_zero() {
        let mut tape = Tape::new();
        let used = tape.param("used", &Tensor::scalar(2.0).unwrap());
        let _unused = tape.param("unused", &Tensor::scalar(5.0).unwrap());
        let loss = tape.mul(&used, &used).unwrap();
        let g = tape.backward(&loss).unwrap();
        let named = g.by_name();
        assert_eq!(named["used"].item(), 4.0);
        assert_eq!(named["unused"].item(), 0.0);
    }

    #[test]
    fn concat_slice_roundtrip() {
        let mut tape = Tape::new();
        let a = tape.input(&t2(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.input(&t2(1, 2, vec![5.0, 6.0]));
        let cat = tape.concat_rows(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[3, 2]);
        let back = tape.slice_rows(&cat, 2, 1).unwrap();
        assert_eq!(back.data(), &[5.0, 6.0]);
        let loss = tape.sum_all(&back);
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.wrt(&a).unwrap().data(), &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.wrt(&b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn swap_blocks_roundtrip() {
        let mut tape = Tape::new();
        // 2 steps x 3 batch rows x 1 col, time-major: [t0b0 t0b1 t0b2 t1b0 t1b1 t1b2]
        let x = t2(6, 1, vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        let bm = tape.swap_blocks(&x, 2, 3).unwrap();
        assert_eq!(bm.data(), &[0.0, 10.0, 1.0, 11.0, 2.0, 12.0]);
        let tm = tape.swap_blocks(&bm, 3, 2).unwrap();
        assert_eq!(tm.data(), x.data());
    }

    #[test]
    fn inference_mode_computes_without_nodes() {
        let mut tape = Tape::inference();
        let a = t2(1, 2, vec![1.0, 2.0]);
        let b = t2(2, 1, vec![3.0, 4.0]);
        let c = tape.matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[11.0]);
        assert_eq!(tape.node_count(), 0);
        assert!(tape.backward(&c).is_err());
    }
}
