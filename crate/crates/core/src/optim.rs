//! Adam with bias correction and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub learning_rate: f64,
    pub eps: f64,
    /// Gradients are rescaled to at most this global norm before the update.
    /// `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            learning_rate: 3e-4,
            eps: 1e-8,
            max_grad_norm: Some(0.5),
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.max_grad_norm.is_none_or(|m| m > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad Adam settings {self:?}")))
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Number of updates taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// Clips `grads` in place, then applies one Adam update. Returns the
    /// gradient norm before clipping.
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &mut [&mut [f64]],
        cfg: &AdamConfig,
    ) -> f64 {
        self.t += 1;
        adam_step(params, grads, self, cfg, self.t)
    }
}

/// One Adam update at step `t >= 1` (bias correction uses `t`).
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &mut [&mut [f64]],
    state: &mut AdamState,
    cfg: &AdamConfig,
    t: u64,
) -> f64 {
    assert!(t >= 1, "Adam step index starts at 1");
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    let norm = match cfg.max_grad_norm {
        Some(max) => grad::clip_global_norm(grads, max),
        None => grad::global_norm(&grads.iter().map(|g| &g[..]).collect::<Vec<_>>()),
    };
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (k, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            p[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
        }
    }
    norm
}
