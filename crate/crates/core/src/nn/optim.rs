use std::collections::{BTreeMap, HashMap};

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

/// Adam with explicit, serializable moment state.
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update to every parameter that received a gradient.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, var) in params.vars() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            // Gradients may still carry their own graph; keep none of it.
            let g = g.detach();
            let (m, v) = match self.moments.get(name) {
                Some((m, v)) => (m.clone(), v.clone()),
                None => (g.zeros_like()?, g.zeros_like()?),
            };
            let m = (m.affine(beta1, 0.0)? + g.affine(1.0 - beta1, 0.0)?)?.detach();
            let v = (v.affine(beta2, 0.0)? + g.sqr()?.affine(1.0 - beta2, 0.0)?)?.detach();
            let denom = v.affine(1.0 / c2, 0.0)?.sqrt()?.affine(1.0, eps)?;
            let update = m.affine(lr / c1, 0.0)?.div(&denom)?;
            var.set(&var.as_tensor().detach().sub(&update)?.detach())?;
            self.moments.insert(name.clone(), (m, v));
        }
        Ok(())
    }

    pub fn export(&self, prefix: &str) -> HashMap<String, Tensor> {
        let mut out = HashMap::new();
        for (name, (m, v)) in &self.moments {
            out.insert(format!("{prefix}{name}.m"), m.clone());
            out.insert(format!("{prefix}{name}.v"), v.clone());
        }
        out
    }

    pub fn import(
        cfg: AdamConfig,
        step: u64,
        tensors: &HashMap<String, Tensor>,
        prefix: &str,
    ) -> Result<Self> {
        let mut moments = BTreeMap::new();
        for (key, m) in tensors {
            let Some(rest) = key.strip_prefix(prefix) else {
                continue;
            };
            let Some(name) = rest.strip_suffix(".m") else {
                continue;
            };
            let v = tensors
                .get(&format!("{prefix}{name}.v"))
                .ok_or_else(|| Error::Checkpoint(format!("missing second moment for {name}")))?;
            moments.insert(name.to_string(), (m.clone(), v.clone()));
        }
        Ok(Self { cfg, step, moments })
    }
}
