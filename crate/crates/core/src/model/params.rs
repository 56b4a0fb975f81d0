use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::lstm::STATE_KERNEL;
use crate::nn::{Graph, NodeId, Tensor};

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
    Uniform { fan_in: usize, fan_out: usize },
    /// Stacked (i, f, g, o) gate bias: zero except the forget gate, which
    /// starts at 1.
    GateBias { hidden: usize },
    Zero,
}

impl ParamKind {
    pub fn bound(&self) -> f64 {
        match *self {
            ParamKind::Uniform { fan_in, fan_out } => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            ParamKind::GateBias { .. } => 1.0,
            ParamKind::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named tensor view used when inspecting a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<'a> {
    pub info: &'a ParamInfo,
    pub values: &'a [f32],
}

/// All generator and critic weights. Generator tensors come first; the
/// index of a tensor in this list is its parameter index in a [`Graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub infos: Vec<ParamInfo>,
    pub values: Vec<Vec<f32>>,
    pub n_generator: usize,
}

fn cell_infos(prefix: &str, conv: crate::nn::InputConv, cin: usize, ch: usize) -> Vec<ParamInfo> {
    let (r, c) = conv.weight_shape(cin, ch);
    let k = conv.k();
    vec![
        ParamInfo {
            name: format!("{prefix}.wx"),
            rows: r,
            cols: c,
            kind: ParamKind::Uniform {
                fan_in: cin * k,
                fan_out: ch * k,
            },
        },
        ParamInfo {
            name: format!("{prefix}.wh"),
            rows: 4 * ch,
            cols: ch * STATE_KERNEL,
            kind: ParamKind::Uniform {
                fan_in: ch * STATE_KERNEL,
                fan_out: ch * STATE_KERNEL,
            },
        },
        ParamInfo {
            name: format!("{prefix}.b"),
            rows: 4 * ch,
            cols: 1,
            kind: ParamKind::GateBias { hidden: ch },
        },
    ]
}

/// Parameter layout implied by a configuration, in storage order.
pub fn layout(cfg: &ModelConfig) -> (Vec<ParamInfo>, usize) {
    let mut infos = Vec::new();
    let enc = &cfg.generator.encoder;
    let mut cin = cfg.condition.channels();
    for (i, l) in enc.iter().enumerate() {
        infos.extend(cell_infos(&format!("gen.enc{}", i + 1), l.encoder_conv(), cin, l.channels));
        cin = l.channels;
    }
    for ((m, l), cin) in cfg.generator.decoder.iter().enumerate().zip(cfg.decoder_inputs()) {
        infos.extend(cell_infos(&format!("gen.dec{}", m + 1), l.decoder_conv(), cin, l.channels));
    }
    let last = cfg.generator.decoder.last().map_or(0, |l| l.channels);
    infos.push(ParamInfo {
        name: "gen.head.w".into(),
        rows: cfg.d_out,
        cols: last,
        kind: ParamKind::Uniform {
            fan_in: last,
            fan_out: cfg.d_out,
        },
    });
    infos.push(ParamInfo {
        name: "gen.head.b".into(),
        rows: cfg.d_out,
        cols: 1,
        kind: ParamKind::Zero,
    });
    let n_generator = infos.len();
    let mut cin = cfg.critic_input_channels();
    for (i, l) in cfg.critic.encoder.iter().enumerate() {
        infos.extend(cell_infos(&format!("critic.enc{}", i + 1), l.encoder_conv(), cin, l.channels));
        cin = l.channels;
    }
    infos.push(ParamInfo {
        name: "critic.head.w".into(),
        rows: 1,
        cols: cin,
        kind: ParamKind::Uniform { fan_in: cin, fan_out: 1 },
    });
    (infos, n_generator)
}

/// Deterministic initialization from `seed`.
pub fn init_params(seed: u64, cfg: &ModelConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let (infos, n_generator) = layout(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = infos
        .iter()
        .map(|info| match info.kind {
            ParamKind::Uniform { .. } => {
                let b = info.kind.bound();
                (0..info.len()).map(|_| rng.gen_range(-b..=b) as f32).collect()
            }
            ParamKind::GateBias { hidden } => (0..info.len())
                .map(|i| if i / hidden == 1 { 1.0 } else { 0.0 })
                .collect(),
            ParamKind::Zero => vec![0.0; info.len()],
        })
        .collect();
    Ok(ModelParams {
        infos,
        values,
        n_generator,
    })
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (infos, n_generator) = layout(cfg);
        let values = infos.iter().map(|i| vec![0.0; i.len()]).collect();
        Ok(Self {
            infos,
            values,
            n_generator,
        })
    }

    pub fn len(&self) -> usize {
        self.infos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infos.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn generator_range(&self) -> std::ops::Range<usize> {
        0..self.n_generator
    }

    pub fn critic_range(&self) -> std::ops::Range<usize> {
        self.n_generator..self.infos.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.infos.iter().position(|i| i.name == name)
    }

    pub fn get(&self, name: &str) -> Option<ParamTensor<'_>> {
        self.index_of(name).map(|i| ParamTensor {
            info: &self.infos[i],
            values: &self.values[i],
        })
    }

    pub fn tensor(&self, i: usize) -> Tensor {
        let info = &self.infos[i];
        Tensor::new(info.rows, info.cols, self.values[i].iter().map(|&v| v as f64).collect())
            .expect("layout matches storage")
    }

    /// Adds every tensor of `range` to the graph, as trainable parameters or
    /// as constants. Returned ids are indexed like `range`.
    pub fn bind(&self, g: &mut Graph, range: std::ops::Range<usize>, trainable: bool) -> Vec<NodeId> {
        range
            .map(|i| {
                let t = self.tensor(i);
                if trainable {
                    g.param(i, t)
                } else {
                    g.input(t)
                }
            })
            .collect()
    }

    /// Zeroed gradient buffers shaped like the whole parameter list.
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.values.iter().map(|v| vec![0.0; v.len()]).collect()
    }

    /// Fails unless `other` has the same names and shapes.
    pub fn check_layout(&self, other: &[ParamInfo]) -> Result<()> {
        if self.infos.len() != other.len() {
            return Err(Error::shape(format!(
                "parameter count {} does not match expected {}",
                other.len(),
                self.infos.len()
            )));
        }
        for (a, b) in self.infos.iter().zip(other) {
            if a.name != b.name || a.rows != b.rows || a.cols != b.cols {
                return Err(Error::shape(format!(
                    "parameter `{}` is {}x{}, expected `{}` {}x{}",
                    b.name, b.rows, b.cols, a.name, a.rows, a.cols
                )));
            }
        }
        Ok(())
    }
}
