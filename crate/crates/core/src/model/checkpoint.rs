//! Model checkpoints in the shared container layout under magic `GSC1`.
//!
//! The payload holds every parameter tensor in layout order, followed by the
//! generator and critic RMSProp accumulators when optimizer state is saved.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::layout;
use super::{ModelConfig, ModelParams, ParamInfo};
use crate::error::{Error, Result};
use crate::features::container::{decode, encode};
use crate::nn::{RmsProp, RmsPropConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GSC1";

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub generator: RmsProp,
    pub critic: RmsProp,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, gen: RmsPropConfig, critic: RmsPropConfig) -> Self {
        let sizes = |r: std::ops::Range<usize>| r.map(|i| params.values[i].len()).collect::<Vec<_>>();
        Self {
            generator: RmsProp::new(gen, sizes(params.generator_range())),
            critic: RmsProp::new(critic, sizes(params.critic_range())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
    /// Number of completed epochs.
    pub epoch: usize,
    pub step: usize,
    /// Free-form metadata such as the training configuration.
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    params: Vec<ParamInfo>,
    n_generator: usize,
    optimizer: Option<(RmsPropConfig, RmsPropConfig)>,
    epoch: usize,
    step: usize,
    #[serde(default)]
    extra: serde_json::Value,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams) -> Self {
        Self {
            config,
            params,
            optimizer: None,
            epoch: 0,
            step: 0,
            extra: serde_json::Value::Null,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_layout(&layout(&self.config).0)?;
        let header = Header {
            config: self.config.clone(),
            params: self.params.infos.clone(),
            n_generator: self.params.n_generator,
            optimizer: self.optimizer.as_ref().map(|o| (o.generator.config, o.critic.config)),
            epoch: self.epoch,
            step: self.step,
            extra: self.extra.clone(),
        };
        let mut payload: Vec<f32> = self.params.values.concat();
        if let Some(o) = &self.optimizer {
            for v in o.generator.v.iter().chain(&o.critic.v) {
                payload.extend_from_slice(v);
            }
        }
        encode(CHECKPOINT_MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (Header, Vec<f32>) = decode(CHECKPOINT_MAGIC, bytes)?;
        h.config.validate()?;
        let (expected, n_generator) = layout(&h.config);
        let mut params = ModelParams {
            infos: expected,
            values: Vec::new(),
            n_generator,
        };
        params.check_layout(&h.params)?;
        if h.n_generator != n_generator {
            return Err(Error::format(format!(
                "header splits generator at {}, layout at {n_generator}",
                h.n_generator
            )));
        }
        let n = params.infos.iter().map(ParamInfo::len).sum::<usize>();
        let want = if h.optimizer.is_some() { 2 * n } else { n };
        if payload.len() != want {
            return Err(Error::format(format!(
                "checkpoint payload has {} values, expected {want}",
                payload.len()
            )));
        }
        let split = |data: &[f32]| -> Vec<Vec<f32>> {
            let mut off = 0;
            params
                .infos
                .iter()
                .map(|i| {
                    let v = data[off..off + i.len()].to_vec();
                    off += i.len();
                    v
                })
                .collect()
        };
        params.values = split(&payload[..n]);
        let optimizer = h.optimizer.map(|(gc, cc)| {
            let mut v = split(&payload[n..]);
            let critic = v.split_off(n_generator);
            OptimizerState {
                generator: RmsProp { config: gc, v },
                critic: RmsProp { config: cc, v: critic },
            }
        });
        Ok(Self {
            config: h.config,
            params,
            optimizer,
            epoch: h.epoch,
            step: h.step,
            extra: h.extra,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
