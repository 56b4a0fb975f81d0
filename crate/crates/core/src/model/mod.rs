//! Generator and critic: configuration, parameter layout, conditioning and the
//! forward passes.
//!
//! The generator is a U-Net of ConvLSTM cells over time: strided encoder cells
//! halve the block length layer by layer, transposed decoder cells restore it,
//! and each decoder cell after the first also sees the encoder output of the
//! same resolution. Cell states carry from one block of a song to the next.
//! The critic reuses the encoder layout with fresh state per block, pools over
//! time and maps to one score.

mod checkpoint;
mod condition;
mod network;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::D_OUT;
use crate::nn::InputConv;

pub use checkpoint::{Checkpoint, OptimizerState, CHECKPOINT_MAGIC};
pub use condition::{
    assemble_condition, encode_log_f0, song_condition_blocks, strip_noise, ConditionSpec, N_NOISE,
};
pub use network::{
    critic_forward, critic_graph, generator_forward, generator_graph, model_gradcheck, CriticNodes, GenNodes,
    GeneratorState, SAMPLED_TOLERANCE,
};
pub use params::{init_params, ModelParams, ParamInfo, ParamKind, ParamTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl LayerSpec {
    pub fn new(channels: usize, kernel: usize, stride: usize) -> Self {
        Self { channels, kernel, stride }
    }

    pub fn encoder_conv(&self) -> InputConv {
        InputConv::Strided {
            k: self.kernel,
            stride: self.stride,
            pad: self.kernel / 2,
        }
    }

    /// Upsampling conv whose output is exactly `stride` times its input.
    pub fn decoder_conv(&self) -> InputConv {
        InputConv::Transposed {
            k: self.kernel,
            stride: self.stride,
            pad: self.kernel / 2,
            out_pad: self.stride - 1,
        }
    }
}

fn layers(channels: &[usize]) -> Vec<LayerSpec> {
    channels.iter().map(|&c| LayerSpec::new(c, 3, 2)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            encoder: layers(&[32, 64, 128, 256, 512]),
            decoder: layers(&[256, 128, 64, 32, 32]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub encoder: Vec<LayerSpec>,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            encoder: layers(&[32, 64, 128, 256, 512]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub condition: ConditionSpec,
    pub d_out: usize,
    pub block_len: usize,
    pub generator: GeneratorConfig,
    pub critic: CriticConfig,
}

impl ModelConfig {
    /// Full-size layout for the given vocabulary sizes.
    pub fn new(n_phonemes: usize, n_singers: usize) -> Self {
        Self {
            condition: ConditionSpec::new(n_phonemes, n_singers),
            d_out: D_OUT,
            block_len: crate::features::blocks::DEFAULT_BLOCK_LEN,
            generator: GeneratorConfig::default(),
            critic: CriticConfig::default(),
        }
    }

    /// Two encoder and two decoder layers with channels `[16, 32]`.
    pub fn tiny(n_phonemes: usize, n_singers: usize) -> Self {
        Self {
            generator: GeneratorConfig {
                encoder: layers(&[16, 32]),
                decoder: layers(&[16, 16]),
            },
            critic: CriticConfig {
                encoder: layers(&[16, 32]),
            },
            ..Self::new(n_phonemes, n_singers)
        }
    }

    /// Input channels of each decoder cell.
    pub fn decoder_inputs(&self) -> Vec<usize> {
        let enc = &self.generator.encoder;
        let dec = &self.generator.decoder;
        let l = enc.len();
        (0..dec.len())
            .map(|m| {
                if m == 0 {
                    enc[l - 1].channels
                } else {
                    dec[m - 1].channels + enc[l - 1 - m].channels
                }
            })
            .collect()
    }

    pub fn critic_input_channels(&self) -> usize {
        self.d_out + self.condition.channels_without_noise()
    }

    /// Block lengths after each generator encoder layer.
    pub fn encoder_lengths(&self) -> Vec<usize> {
        let mut t = self.block_len;
        self.generator
            .encoder
            .iter()
            .map(|l| {
                t /= l.stride;
                t
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        let enc = &self.generator.encoder;
        let dec = &self.generator.decoder;
        if enc.is_empty() || enc.len() != dec.len() {
            return bad(format!(
                "generator needs matching encoder/decoder depth, got {} and {}",
                enc.len(),
                dec.len()
            ));
        }
        if self.critic.encoder.is_empty() {
            return bad("critic needs at least one layer".into());
        }
        if self.d_out == 0 || self.block_len == 0 {
            return bad("d_out and block_len must be positive".into());
        }
        self.condition.validate()?;
        for l in enc.iter().chain(dec).chain(&self.critic.encoder) {
            if l.channels == 0 || l.kernel % 2 == 0 || l.stride == 0 {
                return bad(format!("invalid layer {l:?}: kernels must be odd, sizes positive"));
            }
        }
        let l = enc.len();
        for m in 0..l {
            if dec[m].stride != enc[l - 1 - m].stride {
                return bad(format!(
                    "decoder layer {} stride {} does not mirror encoder layer {} stride {}",
                    m + 1,
                    dec[m].stride,
                    l - m,
                    enc[l - 1 - m].stride
                ));
            }
        }
        for layers in [enc, &self.critic.encoder] {
            let mut t = self.block_len;
            for (i, s) in layers.iter().enumerate() {
                if !t.is_multiple_of(s.stride) || t / s.stride == 0 {
                    return bad(format!(
                        "block length {} does not divide through layer {} (length {t}, stride {})",
                        self.block_len,
                        i + 1,
                        s.stride
                    ));
                }
                t /= s.stride;
            }
        }
        Ok(())
    }
}
