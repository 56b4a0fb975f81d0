//! Adversarial objectives. Each strategy turns critic outputs into per-block
//! loss terms inside a graph; the trainer picks one by name from a registry.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{Graph, NodeId};

/// Probabilities are kept this far from 0 and 1 in the scalar GAN losses.
pub const GAN_EPS: f64 = 1e-7;

pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;

    /// Critic loss term for one (real, fake) pair of raw critic outputs.
    fn critic_term(&self, g: &mut Graph, real: NodeId, fake: NodeId) -> Result<NodeId>;

    /// Generator loss term for one raw critic output on a generated block.
    fn generator_term(&self, g: &mut Graph, fake: NodeId) -> Result<NodeId>;

    /// Whether critic weights are clamped after every critic update.
    fn clips_critic(&self) -> bool;
}

/// Critic maximizes `E[D(real)] - E[D(fake)]` under weight clipping; the
/// generator maximizes `E[D(fake)]`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Wgan;

impl Objective for Wgan {
    fn name(&self) -> &'static str {
        "wgan"
    }

    fn critic_term(&self, g: &mut Graph, real: NodeId, fake: NodeId) -> Result<NodeId> {
        g.sub(fake, real)
    }

    fn generator_term(&self, g: &mut Graph, fake: NodeId) -> Result<NodeId> {
        Ok(g.scale(fake, -1.0))
    }

    fn clips_critic(&self) -> bool {
        true
    }
}

/// Original minimax GAN with a sigmoid on the critic output. Terms are written
/// on the logit `z`: `log D = -softplus(-z)` and `log(1 - D) = -softplus(z)`.
/// The generator minimizes `log(1 - D(fake))`, the saturating form.
#[derive(Debug, Default, Clone, Copy)]
pub struct Gan;

impl Objective for Gan {
    fn name(&self) -> &'static str {
        "gan"
    }

    fn critic_term(&self, g: &mut Graph, real: NodeId, fake: NodeId) -> Result<NodeId> {
        let neg = g.scale(real, -1.0);
        let a = g.softplus(neg);
        let b = g.softplus(fake);
        g.add(a, b)
    }

    fn generator_term(&self, g: &mut Graph, fake: NodeId) -> Result<NodeId> {
        let sp = g.softplus(fake);
        Ok(g.scale(sp, -1.0))
    }

    fn clips_critic(&self) -> bool {
        false
    }
}

type Factory = fn() -> Box<dyn Objective>;

/// Name-to-strategy table.
pub struct ObjectiveRegistry {
    table: BTreeMap<&'static str, Factory>,
}

impl Default for ObjectiveRegistry {
    fn default() -> Self {
        let mut r = Self { table: BTreeMap::new() };
        r.register("wgan", || Box::new(Wgan));
        r.register("gan", || Box::new(Gan));
        r
    }
}

impl ObjectiveRegistry {
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.table.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.table.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<Box<dyn Objective>> {
        self.table.get(name).map(|f| f()).ok_or_else(|| {
            Error::config(format!("unknown mode `{name}`, expected one of {:?}", self.names()))
        })
    }
}

pub fn objective(name: &str) -> Result<Box<dyn Objective>> {
    ObjectiveRegistry::default().get(name)
}

fn mean(v: &[f64], what: &str) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Validation(format!("{what} is empty")));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// `-(mean(d_real) - mean(d_fake))`.
pub fn wgan_critic_loss(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    Ok(-(mean(d_real, "d_real")? - mean(d_fake, "d_fake")?))
}

/// `-mean(d_fake)`.
pub fn wgan_generator_loss(d_fake: &[f64]) -> Result<f64> {
    Ok(-mean(d_fake, "d_fake")?)
}

/// Discriminator and generator losses from probabilities:
/// `L_D = -mean(log d_real + log(1 - d_fake))`, `L_G = mean(log(1 - d_fake))`.
pub fn gan_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.len() != d_fake.len() {
        return Err(Error::shape(format!(
            "{} real and {} fake probabilities",
            d_real.len(),
            d_fake.len()
        )));
    }
    for &p in d_real.iter().chain(d_fake) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!("probability {p} outside [0, 1]")));
        }
    }
    let c = |p: f64| p.clamp(GAN_EPS, 1.0 - GAN_EPS);
    let log_real: Vec<f64> = d_real.iter().map(|&p| c(p).ln()).collect();
    let log_not_fake: Vec<f64> = d_fake.iter().map(|&p| (1.0 - c(p)).ln()).collect();
    let ld = -(mean(&log_real, "d_real")? + mean(&log_not_fake, "d_fake")?);
    let lg = mean(&log_not_fake, "d_fake")?;
    Ok((ld, lg))
}
