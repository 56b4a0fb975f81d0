//! Adversarial training: objectives, configuration, the alternating
//! critic/generator loop with truncated backpropagation across blocks, and the
//! line-delimited JSON log.

mod log;
mod objective;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::RmsPropConfig;

pub use log::{LogRecord, TrainLog};
pub use objective::{
    gan_losses, objective, wgan_critic_loss, wgan_generator_loss, Gan, Objective, ObjectiveRegistry, Wgan,
    GAN_EPS,
};
pub use trainer::{generator_grad_norm, train, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Registered objective name, `wgan` or `gan`.
    pub mode: String,
    pub n_critic: usize,
    pub clip: f64,
    pub optimizer: RmsPropConfig,
    /// Parallel song lanes per step.
    pub batch_size: usize,
    /// Consecutive blocks per lane and step; gradients flow through all of
    /// them, states carry detached beyond.
    pub blocks_per_segment: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Weight of an optional L1 term between generated and real blocks in the
    /// generator loss.
    pub recon_weight: f64,
    /// Epoch interval of numbered checkpoints; `latest.gsc` is always written.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: "wgan".into(),
            n_critic: 5,
            clip: 0.01,
            optimizer: RmsPropConfig::default(),
            batch_size: 8,
            blocks_per_segment: 4,
            epochs: 750,
            seed: 0,
            recon_weight: 0.0,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ObjectiveRegistry::default().get(&self.mode)?;
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.n_critic == 0 {
            return bad("n_critic must be at least 1");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.batch_size == 0 || self.blocks_per_segment == 0 {
            return bad("batch_size and blocks_per_segment must be at least 1");
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || !(0.0..1.0).contains(&o.rho) || !(o.eps > 0.0) {
            return bad("optimizer needs lr > 0, 0 <= rho < 1, eps > 0");
        }
        if !(self.recon_weight >= 0.0) {
            return bad("recon_weight must be non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.n_critic, c.clip, c.batch_size, c.blocks_per_segment, c.epochs), (5, 0.01, 8, 4, 750));
        for f in [
            |c: &mut TrainConfig| c.n_critic = 0,
            |c: &mut TrainConfig| c.clip = 0.0,
            |c: &mut TrainConfig| c.blocks_per_segment = 0,
            |c: &mut TrainConfig| c.mode = "x".into(),
        ] {
            let mut c = TrainConfig::default();
            f(&mut c);
            assert!(c.validate().is_err());
        }
        let partial: TrainConfig = serde_json::from_str(r#"{"mode": "gan", "epochs": 3}"#).unwrap();
        assert_eq!((partial.mode.as_str(), partial.epochs, partial.n_critic), ("gan", 3, 5));
    }
}
