use std::sync::Arc;

use crate::error::{Error, Result};

/// Handle tying a tensor to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRef {
    pub(crate) tape: u64,
    pub(crate) index: usize,
}

/// Dense 64-bit tensor in row-major order. Cloning is cheap (shared storage).
///
/// A tensor may carry a `NodeRef` linking it to the tape that produced it;
/// detached tensors (constants, loaded parameters) carry none.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    pub(crate) node: Option<NodeRef>,
}

impl Tensor {
    /// Builds a tensor, rejecting NaN/Inf values and shape/length mismatches.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {:?} wants {} values, got {}", shape, numel, data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Ingest(format!("non-finite value {v} in tensor data")));
        }
        Ok(Self::from_raw(shape, data))
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(vec![1], vec![v])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Self::from_raw(shape, vec![0.0; numel])
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let numel: usize = shape.iter().product();
        Self::from_raw(shape, vec![v; numel])
    }

    /// Internal constructor for op outputs; skips the finiteness scan.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Tensor { shape, data: Arc::new(data), node: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Row count of a matrix ([r, c]) or leading dimension in general.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Same values, no tape linkage.
    pub fn detached(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: Arc::clone(&self.data), node: None }
    }

    /// Shared-storage view under a new shape (caller checks the length).
    pub(crate) fn with_shape(&self, shape: Vec<usize>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), self.data.len());
        Tensor { shape, data: Arc::clone(&self.data), node: None }
    }

    /// Mutable access to the underlying values (copy-on-write if shared).
    pub(crate) fn data_mut(&mut self) -> &mut Vec<f64> {
        self.node = None;
        Arc::make_mut(&mut self.data)
    }

    pub fn approx_eq(&self, other: &Tensor, tol: f64) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_mismatch() {
        assert!(Tensor::new(vec![2, 2], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn scalar_roundtrip() {
        let t = Tensor::scalar(3.25).unwrap();
        assert!(t.is_scalar());
        assert_eq!(t.item(), 3.25);
    }
}
