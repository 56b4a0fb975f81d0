//! RMSProp and WGAN weight clipping over flat parameter buffers.
//!
//! Parameters and accumulators are stored in `f32`; the update itself is
//! evaluated in `f64` and rounded once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            rho: 0.9,
            eps: 1e-8,
        }
    }
}

/// Accumulated squared gradients, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    pub v: Vec<Vec<f32>>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, sizes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            config,
            v: sizes.into_iter().map(|n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Vec<f32>], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.v.len() || grads.len() != self.v.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.v.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), v)) in params.iter().zip(grads).zip(&self.v).enumerate() {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(Error::shape(format!(
                    "tensor {i}: {} params, {} grads, {} accumulators",
                    p.len(),
                    g.len(),
                    v.len()
                )));
            }
        }
        let RmsPropConfig { lr, rho, eps } = self.config;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.v) {
            for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                let vn = rho * *v as f64 + (1.0 - rho) * g * g;
                *v = vn as f32;
                *p = (*p as f64 - lr * g / (vn.sqrt() + eps)) as f32;
            }
        }
        Ok(())
    }
}

/// Single-tensor `f64` form of the update; `v` is the accumulator.
pub fn rmsprop_step(
    params: &mut [f64],
    grads: &[f64],
    v: &mut [f64],
    config: &RmsPropConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != v.len() {
        return Err(Error::shape(format!(
            "{} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            v.len()
        )));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
        *v = config.rho * *v + (1.0 - config.rho) * g * g;
        *p -= config.lr * g / (v.sqrt() + config.eps);
    }
    Ok(())
}

pub fn clip_weights(params: &mut [Vec<f32>], c: f32) {
    for p in params {
        for v in p.iter_mut() {
            *v = v.clamp(-c, c);
        }
    }
}
