//! Adam with bias correction and optional inverse-time learning-rate decay.

use std::collections::BTreeMap;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::nn::{GradMap, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    None,
    /// `lr(t) = base_lr / (1 + k t)`
    InverseTime(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay: Decay,
    /// Rescale the gradient so its global L2 norm is at most this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            decay: Decay::None,
            clip_norm: None,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && match self.decay {
                Decay::None => true,
                Decay::InverseTime(k) => k >= 0.0,
            }
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, name: &str) -> Option<&Matrix> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Matrix> {
        self.v.get(name)
    }

    pub fn lr_schedule(&self, t: u64) -> f64 {
        match self.config.decay {
            Decay::None => self.config.lr,
            Decay::InverseTime(k) => self.config.lr / (1.0 + k * t as f64),
        }
    }

    /// One update of every trainable entry across `stores`. Frozen entries
    /// are left untouched and need no gradient.
    pub fn step(&mut self, stores: &mut [&mut ParamStore], grads: &GradMap) -> Result<()> {
        let mut expected = 0;
        for store in stores.iter() {
            for (name, entry) in store.iter() {
                if !entry.trainable {
                    continue;
                }
                expected += 1;
                match grads.get(name) {
                    None => {
                        return Err(Error::Contract(format!(
                            "no gradient for trainable parameter `{name}`"
                        )))
                    }
                    Some(g) if g.dim() != entry.value.dim() => {
                        return Err(Error::Dimension {
                            op: "adam gradient",
                            left: entry.value.dim(),
                            right: g.dim(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        if expected != grads.len() {
            return Err(Error::Contract(format!(
                "{} gradients supplied for {expected} trainable parameters",
                grads.len()
            )));
        }

        self.t += 1;
        let t = self.t as i32;
        let lr = self.lr_schedule(self.t);
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let scale = match self.config.clip_norm {
            Some(max) => {
                let norm = grads
                    .values()
                    .map(|g| g.iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        for store in stores.iter_mut() {
            for (name, entry) in store.iter_mut() {
                if !entry.trainable {
                    continue;
                }
                let g = &grads[name];
                let m = self
                    .m
                    .entry(name.to_string())
                    .or_insert_with(|| Matrix::zeros(g.raw_dim()));
                let v = self
                    .v
                    .entry(name.to_string())
                    .or_insert_with(|| Matrix::zeros(g.raw_dim()));
                Zip::from(&mut entry.value)
                    .and(m)
                    .and(v)
                    .and(g)
                    .for_each(|p, m, v, &g| {
                        let g = g * scale;
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bias1;
                        let v_hat = *v / bias2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    });
            }
        }
        Ok(())
    }
}
