use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::nn::gradcheck::{check_graph, CheckReport, FD_TOLERANCE};
use crate::nn::{cell_step, CellNodes, ConvLstmState, Graph, NodeId, StateNodes, Tensor};

/// Tolerance for sampled coordinates of the whole generator.
pub const SAMPLED_TOLERANCE: f64 = 1e-3;

/// Graph handles of the generator parameters.
#[derive(Debug, Clone)]
pub struct GenNodes {
    pub enc: Vec<CellNodes>,
    pub dec: Vec<CellNodes>,
    pub head_w: NodeId,
    pub head_b: NodeId,
}

impl GenNodes {
    /// `ids` are the bound generator tensors in layout order.
    pub fn new(cfg: &ModelConfig, ids: &[NodeId]) -> Self {
        let mut it = ids.chunks(3);
        let mut cell = |conv| {
            let c = it.next().expect("layout has a cell here");
            CellNodes {
                input: conv,
                wx: c[0],
                wh: c[1],
                b: c[2],
            }
        };
        let enc = cfg.generator.encoder.iter().map(|l| cell(l.encoder_conv())).collect();
        let dec = cfg.generator.decoder.iter().map(|l| cell(l.decoder_conv())).collect();
        let n = ids.len();
        Self {
            enc,
            dec,
            head_w: ids[n - 2],
            head_b: ids[n - 1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriticNodes {
    pub enc: Vec<CellNodes>,
    pub head_w: NodeId,
}

impl CriticNodes {
    pub fn new(cfg: &ModelConfig, ids: &[NodeId]) -> Self {
        let enc = cfg
            .critic
            .encoder
            .iter()
            .zip(ids.chunks(3))
            .map(|(l, c)| CellNodes {
                input: l.encoder_conv(),
                wx: c[0],
                wh: c[1],
                b: c[2],
            })
            .collect();
        Self {
            enc,
            head_w: ids[ids.len() - 1],
        }
    }
}

fn check_input(g: &Graph, x: NodeId, channels: usize, cfg: &ModelConfig, what: &str) -> Result<()> {
    let (c, t) = g.value(x).shape();
    if c != channels || t != cfg.block_len {
        return Err(Error::shape(format!(
            "{what} block is {c}x{t}, expected {channels}x{}",
            cfg.block_len
        )));
    }
    Ok(())
}

/// One generator block. `state` holds the previous block's final states for
/// the encoder cells followed by the decoder cells; `None` means zeros.
/// Returns the `[d_out, T]` output in (-1, 1) and the new states.
pub fn generator_graph(
    g: &mut Graph,
    cfg: &ModelConfig,
    nodes: &GenNodes,
    cond: NodeId,
    state: Option<&[StateNodes]>,
) -> Result<(NodeId, Vec<StateNodes>)> {
    check_input(g, cond, cfg.condition.channels(), cfg, "condition")?;
    let l = nodes.enc.len();
    if let Some(s) = state {
        if s.len() != 2 * l {
            return Err(Error::shape(format!("{} carried states for {} cells", s.len(), 2 * l)));
        }
    }
    let prev = |i: usize| state.map(|s| s[i]);
    let mut states = Vec::with_capacity(2 * l);
    let mut x = cond;
    for (i, cell) in nodes.enc.iter().enumerate() {
        let s = cell_step(g, x, prev(i), cell)?;
        states.push(s);
        x = s.h;
    }
    for (m, cell) in nodes.dec.iter().enumerate() {
        let input = if m == 0 {
            x
        } else {
            g.concat(&[x, states[l - 1 - m].h])?
        };
        let s = cell_step(g, input, prev(l + m), cell)?;
        states.push(s);
        x = s.h;
    }
    let y = g.conv1d(x, nodes.head_w, 1, 0)?;
    let y = g.add_bias(y, nodes.head_b)?;
    Ok((g.tanh(y), states))
}

/// Critic score of one `[d_out, T]` feature block under its noise-free
/// condition. Cells start from zero state every call.
pub fn critic_graph(
    g: &mut Graph,
    cfg: &ModelConfig,
    nodes: &CriticNodes,
    features: NodeId,
    cond: NodeId,
) -> Result<NodeId> {
    check_input(g, features, cfg.d_out, cfg, "critic feature")?;
    check_input(g, cond, cfg.condition.channels_without_noise(), cfg, "critic condition")?;
    let mut x = g.concat(&[features, cond])?;
    for cell in &nodes.enc {
        x = cell_step(g, x, None, cell)?.h;
    }
    let pooled = g.mean_time(x);
    g.conv1d(pooled, nodes.head_w, 1, 0)
}

/// Detached per-cell states of the generator between blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    pub cells: Vec<ConvLstmState>,
}

impl GeneratorState {
    pub fn bind(&self, g: &mut Graph) -> Vec<StateNodes> {
        self.cells
            .iter()
            .map(|s| StateNodes {
                h: g.input(s.h.clone()),
                c: g.input(s.c.clone()),
            })
            .collect()
    }

    pub fn capture(g: &Graph, nodes: &[StateNodes]) -> Self {
        Self {
            cells: nodes
                .iter()
                .map(|s| ConvLstmState {
                    h: g.value(s.h).clone(),
                    c: g.value(s.c).clone(),
                })
                .collect(),
        }
    }
}

/// Runs the generator over consecutive condition blocks of one song, carrying
/// states from block to block. No gradients are recorded.
pub fn generator_forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    conds: &[Tensor],
    initial: Option<GeneratorState>,
) -> Result<(Vec<Tensor>, Option<GeneratorState>)> {
    let mut state = initial;
    let mut out = Vec::with_capacity(conds.len());
    for cond in conds {
        let mut g = Graph::new();
        let ids = params.bind(&mut g, params.generator_range(), false);
        let nodes = GenNodes::new(cfg, &ids);
        let s = state.as_ref().map(|s| s.bind(&mut g));
        let c = g.input(cond.clone());
        let (y, s2) = generator_graph(&mut g, cfg, &nodes, c, s.as_deref())?;
        out.push(g.value(y).clone());
        state = Some(GeneratorState::capture(&g, &s2));
    }
    Ok((out, state))
}

/// Critic score outside of training.
pub fn critic_forward(params: &ModelParams, cfg: &ModelConfig, features: &Tensor, cond: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let ids = params.bind(&mut g, params.critic_range(), false);
    let nodes = CriticNodes::new(cfg, &ids);
    let f = g.input(features.clone());
    let c = g.input(cond.clone());
    let y = critic_graph(&mut g, cfg, &nodes, f, c)?;
    Ok(g.value(y).get(0, 0))
}

/// Finite-difference checks of the full critic (every coordinate) and of the
/// generator over two carried blocks (sampled coordinates).
pub fn model_gradcheck(seed: u64) -> Result<Vec<CheckReport>> {
    use rand::{Rng, SeedableRng};
    let mut cfg = ModelConfig::tiny(3, 2);
    cfg.block_len = 8;
    cfg.d_out = 4;
    let p = super::init_params(seed, &cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rand_tensor = |c: usize, t: usize| {
        Tensor::new(c, t, (0..c * t).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape")
    };
    let plain = cfg.condition.channels_without_noise();
    let mut critic_leaves: Vec<Tensor> = p.critic_range().map(|i| p.tensor(i)).collect();
    let nc = critic_leaves.len();
    // Critic weights are tiny after clipping in practice; larger values keep
    // the check away from the rounding floor.
    for t in &mut critic_leaves {
        for v in t.data_mut() {
            *v *= 4.0;
        }
    }
    critic_leaves.push(rand_tensor(cfg.d_out, cfg.block_len));
    critic_leaves.push(rand_tensor(plain, cfg.block_len));
    let critic = check_graph(
        "critic",
        &critic_leaves,
        |g, ids| {
            let cn = CriticNodes::new(&cfg, &ids[..nc]);
            critic_graph(g, &cfg, &cn, ids[nc], ids[nc + 1])
        },
        None,
        seed,
        FD_TOLERANCE,
    )?;
    let mut leaves: Vec<Tensor> = p.generator_range().map(|i| p.tensor(i)).collect();
    let ng = leaves.len();
    leaves.push(rand_tensor(cfg.condition.channels(), cfg.block_len));
    leaves.push(rand_tensor(cfg.condition.channels(), cfg.block_len));
    let generator = check_graph(
        "generator_two_blocks",
        &leaves,
        |g, ids| {
            let gn = GenNodes::new(&cfg, &ids[..ng]);
            let (y1, s) = generator_graph(g, &cfg, &gn, ids[ng], None)?;
            let (y2, _) = generator_graph(g, &cfg, &gn, ids[ng + 1], Some(&s))?;
            let both = g.concat(&[y1, y2])?;
            let sq = g.mul(both, both)?;
            Ok(g.mean(sq))
        },
        Some(200),
        seed,
        SAMPLED_TOLERANCE,
    )?;
    Ok(vec![critic, generator])
}
