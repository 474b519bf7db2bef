use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::tape::Tape;
use super::tensor::Tensor;

/// Named collection of parameter tensors with a freeze switch.
///
/// Iteration order is always name order, which keeps fingerprints and
/// optimizer walks deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
    frozen: bool,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        debug_assert!(!self.frozen, "inserting into a frozen ParamSet");
        self.entries.insert(name.to_string(), t.detached());
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all tensors.
    pub fn value_count(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    /// Content hash over names, shapes and raw f64 bits; changes iff any
    /// value, name or shape changes.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in &self.entries {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            for d in t.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            hasher.update([0u8]);
            for v in t.data() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Binds every parameter onto a tape. A frozen set binds as constants,
    /// so gradients can never reach it; a trainable set binds as named
    /// parameter leaves.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let mut bound = BTreeMap::new();
        for (name, t) in &self.entries {
            let v = if self.frozen { tape.constant(t) } else { tape.param(name, t) };
            bound.insert(name.clone(), v);
        }
        BoundParams { bound }
    }

    /// In-place update used by the optimizer. Refuses frozen sets.
    pub fn apply<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut [f64]),
    {
        if self.frozen {
            return Err(Error::Contract(format!(
                "attempted to mutate frozen parameter {name}"
            )));
        }
        match self.entries.get_mut(name) {
            Some(t) => {
                f(t.data_mut());
                Ok(())
            }
            None => Err(Error::Contract(format!("unknown parameter {name}"))),
        }
    }

    /// Copy with one value nudged by `delta`; used by finite differencing.
    pub fn perturbed(&self, name: &str, index: usize, delta: f64) -> ParamSet {
        let mut copy = self.clone();
        copy.frozen = false;
        copy.apply(name, |d| d[index] += delta).expect("perturb unknown parameter");
        copy.frozen = self.frozen;
        copy
    }
}

/// Tape-bound views of a ParamSet for one forward pass.
pub struct BoundParams {
    bound: BTreeMap<String, Tensor>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> &Tensor {
        self.bound
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_values() {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let f1 = ps.fingerprint();
        ps.apply("w", |d| d[0] += 1e-12).unwrap();
        assert_ne!(f1, ps.fingerprint());
        ps.apply("w", |d| d[0] -= 1e-12).unwrap();
        assert_eq!(f1, ps.fingerprint());
    }

    #[test]
    fn frozen_set_rejects_mutation() {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::scalar(1.0).unwrap());
        ps.freeze();
        assert!(ps.apply("w", |d| d[0] = 2.0).is_err());
    }

    #[test]
    fn frozen_bind_blocks_gradients() {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::scalar(3.0).unwrap());
        ps.freeze();
        let mut tape = Tape::new();
        let bound = ps.bind(&mut tape);
        let w = bound.get("w");
        let x = tape.input(&Tensor::scalar(2.0).unwrap());
        let y = tape.mul(w, &x).unwrap();
        let g = tape.backward(&y).unwrap();
        assert!(g.by_name().is_empty());
        assert_eq!(g.wrt(&x).unwrap().item(), 3.0);
    }
}
