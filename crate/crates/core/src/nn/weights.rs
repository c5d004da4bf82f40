use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One trainable tensor with its Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let m = Tensor::zeros(value.shape().to_vec());
        let v = m.clone();
        Self { value, m, v }
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Settings used for the animation generators and their discriminators.
    pub fn animation(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.5,
            beta2: 0.99,
            eps: 1e-8,
        }
    }

    /// Settings used for the frame renderer.
    pub fn renderer(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameter store with optimizer state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetWeights {
    params: BTreeMap<String, Param>,
    step: u64,
}

impl NetWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub(crate) fn insert_param(&mut self, name: impl Into<String>, p: Param) {
        self.params.insert(name.into(), p);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.all_finite())
    }

    /// Merges `other` into `self`, for composite networks.
    pub fn extend(&mut self, other: NetWeights) {
        self.params.extend(other.params);
    }

    /// One bias-corrected Adam update. Parameters absent from `grads`
    /// are treated as having zero gradient; gradient entries naming
    /// unknown parameters are ignored so that gradient maps from graphs
    /// spanning several networks can be passed unchanged.
    pub fn adam_step(&mut self, grads: &BTreeMap<String, Tensor>, cfg: &AdamConfig) -> Result<()> {
        for (name, p) in &self.params {
            if let Some(g) = grads.get(name) {
                if g.shape() != p.value.shape() {
                    return Err(Error::Shape(format!(
                        "gradient for {name} has shape {:?}, parameter {:?}",
                        g.shape(),
                        p.value.shape()
                    )));
                }
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (name, p) in &mut self.params {
            let g = grads.get(name);
            let value = p.value.data_mut();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            for i in 0..value.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                value[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Sums gradient maps element-wise, in iteration order.
pub fn accumulate_grads(total: &mut BTreeMap<String, Tensor>, add: BTreeMap<String, Tensor>) {
    for (k, g) in add {
        match total.get_mut(&k) {
            Some(t) => t.add_assign(&g),
            None => {
                total.insert(k, g);
            }
        }
    }
}

pub fn scale_grads(grads: &mut BTreeMap<String, Tensor>, c: f64) {
    for g in grads.values_mut() {
        g.scale_assign(c);
    }
}
