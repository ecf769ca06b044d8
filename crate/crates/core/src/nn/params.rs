use std::collections::HashMap;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to one entry of a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    pub m: Tensor<S>,
    pub v: Tensor<S>,
    pub step: u64,
    pub trainable: bool,
}

/// Named parameters with gradients and Adam moments.
///
/// Non-trainable entries (batch-norm running statistics) live here too so that they are
/// saved, copied and cast along with the weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<S> {
    pub(crate) entries: Vec<Entry<S>>,
    index: HashMap<String, usize>,
    iterations: u64,
}

/// Gradient buffers for a subset of parameters, produced by one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    slots: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn new(param_count: usize) -> Self {
        Gradients { slots: vec![None; param_count] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<S>> {
        self.slots.get(id.0).and_then(|s| s.as_ref())
    }

    pub(crate) fn accumulate_with(&mut self, id: ParamId, shape: &[usize], f: impl FnOnce(&mut Tensor<S>)) {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, None);
        }
        f(self.slots[id.0].get_or_insert_with(|| Tensor::zeros(shape)));
    }

    /// Adds `other` into `self` entry by entry.
    pub fn merge(&mut self, other: &Gradients<S>) {
        if self.slots.len() < other.slots.len() {
            self.slots.resize(other.slots.len(), None);
        }
        for (mine, theirs) in self.slots.iter_mut().zip(&other.slots) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.add_assign(t),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, factor: S) {
        for t in self.slots.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<S>)> {
        self.slots.iter().enumerate().filter_map(|(i, t)| t.as_ref().map(|t| (ParamId(i), t)))
    }
}

/// Adam hyperparameters; the learning rate decays as `lr / (1 + decay · iterations)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, decay: 1e-6, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn effective_lr(&self, iterations: u64) -> f64 {
        self.lr / (1.0 + self.decay * iterations as f64)
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), index: HashMap::new(), iterations: 0 }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Checkpoint(format!("duplicate parameter name `{name}`")));
        }
        let shape = value.shape().to_vec();
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id.0);
        self.entries.push(Entry {
            name,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            value,
            step: 0,
            trainable,
        });
        Ok(id)
    }

    /// Adds a trainable `[rows, cols]` matrix drawn uniformly from `±1/√fan_in`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| S::of(rng.gen_range(-bound..=bound))).collect();
        self.add(name, Tensor::new(shape.to_vec(), data)?, true)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<S> {
        &self.entries[id.0].grad
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    /// Number of optimizer steps taken so far.
    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    /// Adds a backward pass's gradients to the stored ones (trainable entries only).
    pub fn accumulate(&mut self, grads: &Gradients<S>) {
        for (id, g) in grads.iter() {
            let e = &mut self.entries[id.0];
            if e.trainable {
                e.grad.add_assign(g);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(S::zero());
        }
    }

    /// Writes new values for non-trainable statistics.
    pub fn apply_updates(&mut self, updates: Vec<(ParamId, Tensor<S>)>) {
        for (id, t) in updates {
            self.entries[id.0].value = t;
        }
    }

    /// One Adam update of every trainable entry from the stored gradients, which are
    /// zeroed afterwards. Nothing is changed when a gradient is not finite.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if let Some(bad) = self.entries.iter().find(|e| e.trainable && !e.grad.all_finite()) {
            return Err(Error::NonFiniteGradient(bad.name.clone()));
        }
        let lr = cfg.effective_lr(self.iterations);
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
        for e in self.entries.iter_mut().filter(|e| e.trainable) {
            e.step += 1;
            let c1 = 1.0 - b1.powi(e.step as i32);
            let c2 = 1.0 - b2.powi(e.step as i32);
            let value = e.value.data_mut();
            let (m, v) = (e.m.data_mut(), e.v.data_mut());
            for (k, &g) in e.grad.data().iter().enumerate() {
                let g = g.as_f64();
                let mk = b1 * m[k].as_f64() + (1.0 - b1) * g;
                let vk = b2 * v[k].as_f64() + (1.0 - b2) * g * g;
                m[k] = S::of(mk);
                v[k] = S::of(vk);
                let update = lr * (mk / c1) / ((vk / c2).sqrt() + eps);
                value[k] = S::of(value[k].as_f64() - update);
            }
        }
        self.iterations += 1;
        self.zero_grads();
        Ok(())
    }

    /// Copies every value from a store with the same layout (the optimizer state is kept).
    pub fn copy_values_from(&mut self, other: &ParamStore<S>) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.value = b.value.clone();
        }
        Ok(())
    }

    pub(crate) fn check_layout(&self, other: &ParamStore<S>) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count differs: {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn set_iterations(&mut self, iterations: u64) {
        self.iterations = iterations;
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    grad: e.grad.cast(),
                    m: e.m.cast(),
                    v: e.v.cast(),
                    step: e.step,
                    trainable: e.trainable,
                })
                .collect(),
            index: self.index.clone(),
            iterations: self.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_scalar(g: f32) -> (ParamStore<f32>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(0.5f32), true).unwrap();
        let mut grads = Gradients::new(1);
        grads.accumulate_with(id, &[1, 1], |t| t.data_mut()[0] = g);
        s.accumulate(&grads);
        (s, id)
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let (mut s, id) = one_scalar(1.0);
        s.adam_step(&AdamConfig::default()).unwrap();
        let delta = s.value(id).data()[0] - 0.5;
        assert!((delta + 1e-4).abs() < 1e-7, "delta {delta}");
        assert_eq!(s.grad(id).data()[0], 0.0);
    }

    #[test]
    fn zero_gradient_leaves_values() {
        let (mut s, id) = one_scalar(0.0);
        s.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(s.value(id).data()[0], 0.5);
    }

    #[test]
    fn learning_rate_decay() {
        let cfg = AdamConfig::default();
        assert!((cfg.effective_lr(1_000_000) - 0.5e-4).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut s, _) = one_scalar(f32::NAN);
        match s.adam_step(&AdamConfig::default()) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn statistics_are_not_trained() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add("bn.mean", Tensor::scalar(0.0), false).unwrap();
        let mut g = Gradients::new(1);
        g.accumulate_with(id, &[1, 1], |t| t.data_mut()[0] = 3.0);
        s.accumulate(&g);
        s.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(s.value(id).data()[0], 0.0);
    }
}
