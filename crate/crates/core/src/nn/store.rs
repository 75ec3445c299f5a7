use std::sync::Mutex;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::adam::AdamState;

/// Named collection of parameter tensors. Names are unique and shapes are
/// fixed after registration; the version counter increases on every applied
/// update.
#[derive(Debug, Clone)]
pub struct ParamStore<S: Scalar> {
    entries: IndexMap<String, Tensor<S>>,
    version: u64,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
            version: 0,
        }
    }

    pub fn register(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Usage(format!("parameter {name:?} already registered")));
        }
        tensor.ensure_finite(name)?;
        self.entries.insert(name.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::IndexOutOfRange(format!("unknown parameter {name:?}")))
    }

    /// Overwrite an existing entry; the shape must not change.
    pub fn set(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        let slot = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::IndexOutOfRange(format!("unknown parameter {name:?}")))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::shape(format!("set {name:?}"), slot.shape(), tensor.shape()));
        }
        *slot = tensor;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) -> u64 {
        self.version += 1;
        self.version
    }

    /// Deep copy of every tensor, consistent as of a single version.
    pub fn snapshot(&self) -> Snapshot<S> {
        Snapshot {
            tensors: self.entries.clone(),
            version: self.version,
        }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }
}

/// Immutable deep copy of a store at one version.
#[derive(Debug, Clone)]
pub struct Snapshot<S: Scalar> {
    tensors: IndexMap<String, Tensor<S>>,
    pub version: u64,
}

impl<S: Scalar> Snapshot<S> {
    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::IndexOutOfRange(format!("unknown parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Test/instrumentation hook: replace one tensor in the snapshot copy.
    pub fn set(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::IndexOutOfRange(format!("unknown parameter {name:?}")))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::shape(format!("snapshot set {name:?}"), slot.shape(), tensor.shape()));
        }
        *slot = tensor;
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> Snapshot<T> {
        Snapshot {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast::<T>()))
                .collect(),
            version: self.version,
        }
    }
}

/// Accumulated gradients keyed by parameter name.
#[derive(Debug, Clone)]
pub struct GradMap<S: Scalar> {
    grads: IndexMap<String, Tensor<S>>,
}

impl<S: Scalar> Default for GradMap<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> GradMap<S> {
    pub fn new() -> Self {
        GradMap { grads: IndexMap::new() }
    }

    /// Add `grad` into the accumulator for `name` (insert if absent).
    pub fn accumulate(&mut self, name: &str, grad: Tensor<S>) -> Result<()> {
        match self.grads.get_mut(name) {
            Some(existing) => existing.add_assign(&grad),
            None => {
                self.grads.insert(name.to_string(), grad);
                Ok(())
            }
        }
    }

    /// Merge another gradient map into this one.
    pub fn merge(&mut self, other: &GradMap<S>) -> Result<()> {
        for (name, grad) in other.iter() {
            self.accumulate(name, grad.clone())?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.grads.keys().map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn clear(&mut self) {
        self.grads.clear();
    }

    pub fn scale(&mut self, c: S) {
        for t in self.grads.values_mut() {
            t.scale(c);
        }
    }
}

/// The one shared-mutable object in the system: parameters plus optimizer
/// state behind a single coarse lock. `snapshot` and `apply_delta` are each
/// atomic; concurrent applies serialize in an unspecified order.
pub struct GlobalStore<S: Scalar> {
    inner: Mutex<GlobalInner<S>>,
}

struct GlobalInner<S: Scalar> {
    params: ParamStore<S>,
    opt: AdamState<S>,
}

impl<S: Scalar> GlobalStore<S> {
    pub fn new(params: ParamStore<S>, opt: AdamState<S>) -> Self {
        GlobalStore {
            inner: Mutex::new(GlobalInner { params, opt }),
        }
    }

    pub fn snapshot(&self) -> Snapshot<S> {
        self.inner.lock().unwrap().params.snapshot()
    }

    pub fn version(&self) -> u64 {
        self.inner.lock().unwrap().params.version()
    }

    /// One optimizer step applied atomically; returns the new version.
    pub fn apply_delta(&self, grads: &GradMap<S>) -> Result<u64> {
        let mut inner = self.inner.lock().unwrap();
        let GlobalInner { params, opt } = &mut *inner;
        opt.step(params, grads)?;
        Ok(params.bump_version())
    }

    /// Run a closure against the locked store (checkpointing, inspection).
    pub fn with_parts<R>(&self, f: impl FnOnce(&ParamStore<S>, &AdamState<S>) -> R) -> R {
        let inner = self.inner.lock().unwrap();
        f(&inner.params, &inner.opt)
    }

    /// Replace parameter values and optimizer state (checkpoint restore).
    pub fn restore(&self, params: ParamStore<S>, opt: AdamState<S>) {
        let mut inner = self.inner.lock().unwrap();
        inner.params = params;
        inner.opt = opt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_rejects_duplicates() {
        let mut store = ParamStore::<f32>::new();
        store.register("w", Tensor::zeros(&[2])).unwrap();
        assert!(store.register("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn snapshot_is_isolated_from_mutation() {
        let mut store = ParamStore::<f32>::new();
        store.register("w", Tensor::zeros(&[2])).unwrap();
        let snap = store.snapshot();
        store.set("w", Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(snap.get("w").unwrap().data(), &[0.0, 0.0]);
        assert_eq!(snap.version, 0);
    }

    #[test]
    fn two_snapshots_without_updates_match() {
        let mut store = ParamStore::<f32>::new();
        store
            .register("w", Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap())
            .unwrap();
        let a = store.snapshot();
        let b = store.snapshot();
        assert_eq!(a.version, b.version);
        assert_eq!(a.get("w").unwrap(), b.get("w").unwrap());
    }

    #[test]
    fn gradmap_accumulates() {
        let mut g = GradMap::<f64>::new();
        g.accumulate("w", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        g.accumulate("w", Tensor::from_vec(&[2], vec![0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(g.get("w").unwrap().data(), &[1.5, 2.5]);
    }
}
