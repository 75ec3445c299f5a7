use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::store::{GradMap, ParamStore};

/// Adam with bias correction. One instance serves the whole store; moment
/// tensors are allocated lazily per parameter name, and parameters absent
/// from a step's gradients are left untouched.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: IndexMap<String, Tensor<S>>,
    second_moment: IndexMap<String, Tensor<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: IndexMap::new(),
            second_moment: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of `params` from `grads`. Unknown gradient names and
    /// shape mismatches are errors; the step counter advances by one.
    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &GradMap<S>) -> Result<()> {
        for (name, grad) in grads.iter() {
            let shape = params.get(name)?.shape().to_vec();
            if grad.shape() != shape.as_slice() {
                return Err(Error::shape(format!("gradient for {name:?}"), &shape, grad.shape()));
            }
            grad.ensure_finite(name)?;
        }
        self.step += 1;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one = S::one();
        let corr1 = S::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let corr2 = S::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let lr = S::from_f64(self.learning_rate);
        let eps = S::from_f64(self.epsilon);
        for (name, grad) in grads.iter() {
            let shape = params.get(name)?.shape().to_vec();
            let m = self
                .first_moment
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(&shape));
            let v = self
                .second_moment
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(&shape));
            let mut updated = params.get(name)?.clone();
            for ((p, (m_i, v_i)), &g) in updated
                .data_mut()
                .iter_mut()
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
                .zip(grad.data().iter())
            {
                *m_i = b1 * *m_i + (one - b1) * g;
                *v_i = b2 * *v_i + (one - b2) * g * g;
                let m_hat = *m_i / corr1;
                let v_hat = *v_i / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            updated.ensure_finite(name)?;
            params.set(name, updated)?;
        }
        Ok(())
    }

    /// Moment tensors for checkpointing, in (name, first, second) form.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor<S>, &Tensor<S>)> {
        self.first_moment
            .iter()
            .map(move |(k, m)| (k.as_str(), m, &self.second_moment[k]))
    }

    /// Rebuild optimizer state from checkpointed moments.
    pub fn restore(
        learning_rate: f64,
        step: u64,
        moments: impl IntoIterator<Item = (String, Tensor<S>, Tensor<S>)>,
    ) -> Self {
        let mut state = AdamState::new(learning_rate);
        state.step = step;
        for (name, m, v) in moments {
            state.first_moment.insert(name.clone(), m);
            state.second_moment.insert(name, v);
        }
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        store.register("theta", Tensor::scalar(v)).unwrap();
        store
    }

    #[test]
    fn first_step_matches_closed_form() {
        // theta=0, g=2, lr=0.001: first update is -lr * g / (|g| + eps')
        let mut store = scalar_store(0.0);
        let mut opt = AdamState::new(0.001);
        let mut grads = GradMap::new();
        grads.accumulate("theta", Tensor::scalar(2.0)).unwrap();
        opt.step(&mut store, &grads).unwrap();
        let theta = store.get("theta").unwrap().data()[0];
        assert!((theta - (-0.000999999995)).abs() < 1e-12, "theta = {theta}");
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut store = scalar_store(0.25);
        let mut opt = AdamState::new(0.001);
        let mut grads = GradMap::new();
        grads.accumulate("theta", Tensor::scalar(0.0)).unwrap();
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(store.get("theta").unwrap().data()[0], 0.25);
    }

    #[test]
    fn absent_parameter_is_bit_identical() {
        let mut store = ParamStore::<f32>::new();
        store.register("a", Tensor::scalar(0.5)).unwrap();
        store.register("b", Tensor::scalar(-1.5)).unwrap();
        let mut opt = AdamState::new(0.001);
        let mut grads = GradMap::new();
        grads.accumulate("a", Tensor::scalar(1.0)).unwrap();
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(store.get("b").unwrap().data()[0].to_bits(), (-1.5f32).to_bits());
        assert_ne!(store.get("a").unwrap().data()[0], 0.5);
    }

    #[test]
    fn unknown_gradient_name_is_an_error() {
        let mut store = scalar_store(0.0);
        let mut opt = AdamState::new(0.001);
        let mut grads = GradMap::new();
        grads.accumulate("nope", Tensor::scalar(1.0)).unwrap();
        assert!(opt.step(&mut store, &grads).is_err());
    }
}
