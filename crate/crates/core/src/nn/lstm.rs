//! Convolutional LSTM cell: the four gates are computed by convolutions over
//! time instead of dense products. No peephole terms.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Width and padding of the state-to-state convolution.
pub const STATE_KERNEL: usize = 3;

/// How the input-to-state convolution changes the time resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputConv {
    /// Ordinary convolution, downsampling when `stride > 1`.
    Strided { k: usize, stride: usize, pad: usize },
    /// Transposed convolution, upsampling by `stride`.
    Transposed {
        k: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
    },
}

impl InputConv {
    pub fn k(&self) -> usize {
        match *self {
            InputConv::Strided { k, .. } | InputConv::Transposed { k, .. } => k,
        }
    }

    /// Shape of the stacked gate kernel for `cin` inputs and `ch` hidden
    /// channels.
    pub fn weight_shape(&self, cin: usize, ch: usize) -> (usize, usize) {
        match *self {
            InputConv::Strided { k, .. } => (4 * ch, cin * k),
            InputConv::Transposed { k, .. } => (cin, 4 * ch * k),
        }
    }

    pub fn out_len(&self, t: usize) -> Option<usize> {
        match *self {
            InputConv::Strided { k, stride, pad } => super::conv::conv1d_out_len(t, k, stride, pad),
            InputConv::Transposed {
                k,
                stride,
                pad,
                out_pad,
            } => super::conv::conv1d_transpose_out_len(t, k, stride, pad, out_pad),
        }
    }
}

/// Weights of one cell. Gate kernels are stacked in the order i, f, g, o.
/// For a strided input conv `wx` is `[4 C_h, C_in k]`; for a transposed one it
/// is the kernel of the matching forward conv, `[C_in, 4 C_h k]`. `wh` is
/// `[4 C_h, C_h * 3]` and `b` is `[4 C_h, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmWeights {
    pub input: InputConv,
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

impl ConvLstmWeights {
    pub fn zeros(input: InputConv, cin: usize, ch: usize) -> Self {
        let (r, c) = input.weight_shape(cin, ch);
        Self {
            input,
            wx: Tensor::zeros(r, c),
            wh: Tensor::zeros(4 * ch, ch * STATE_KERNEL),
            b: Tensor::zeros(4 * ch, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.channels() / 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl ConvLstmState {
    pub fn zeros(ch: usize, t: usize) -> Self {
        Self {
            h: Tensor::zeros(ch, t),
            c: Tensor::zeros(ch, t),
        }
    }
}

/// Graph handles for a cell's parameters.
#[derive(Debug, Clone, Copy)]
pub struct CellNodes {
    pub input: InputConv,
    pub wx: NodeId,
    pub wh: NodeId,
    pub b: NodeId,
}

/// Graph handles for a cell's state.
#[derive(Debug, Clone, Copy)]
pub struct StateNodes {
    pub h: NodeId,
    pub c: NodeId,
}

/// Records one cell step. A missing state is treated as zeros, which skips the
/// state-to-state convolution entirely.
pub fn cell_step(
    g: &mut Graph,
    x: NodeId,
    state: Option<StateNodes>,
    w: &CellNodes,
) -> Result<StateNodes> {
    let zx = match w.input {
        InputConv::Strided { stride, pad, .. } => g.conv1d(x, w.wx, stride, pad)?,
        InputConv::Transposed {
            k,
            stride,
            pad,
            out_pad,
        } => g.conv1d_transpose(x, w.wx, k, stride, pad, out_pad)?,
    };
    let ch = g.value(w.b).channels() / 4;
    let t = g.value(zx).length();
    let z = match state {
        Some(s) => {
            if g.value(s.h).shape() != (ch, t) {
                return Err(Error::shape(format!(
                    "state {:?} does not match cell output {ch}x{t}",
                    g.value(s.h).shape()
                )));
            }
            let zh = g.conv1d(s.h, w.wh, 1, STATE_KERNEL / 2)?;
            g.add(zx, zh)?
        }
        None => zx,
    };
    let z = g.add_bias(z, w.b)?;
    let out = g.lstm_update(z, state.map(|s| s.c))?;
    let c = g.rows(out, 0, ch)?;
    let h = g.rows(out, ch, ch)?;
    Ok(StateNodes { h, c })
}

/// One cell step outside of any training graph.
pub fn convlstm_cell(x: &Tensor, state: &ConvLstmState, w: &ConvLstmWeights) -> Result<ConvLstmState> {
    let mut g = Graph::new();
    let xn = g.input(x.clone());
    let nodes = CellNodes {
        input: w.input,
        wx: g.input(w.wx.clone()),
        wh: g.input(w.wh.clone()),
        b: g.input(w.b.clone()),
    };
    let s = StateNodes {
        h: g.input(state.h.clone()),
        c: g.input(state.c.clone()),
    };
    let out = cell_step(&mut g, xn, Some(s), &nodes)?;
    Ok(ConvLstmState {
        h: g.value(out.h).clone(),
        c: g.value(out.c).clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, c: usize, t: usize, s: f64) -> Tensor {
        Tensor::new(c, t, (0..c * t).map(|_| rng.gen_range(-s..s)).collect()).unwrap()
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let input = InputConv::Strided { k: 3, stride: 1, pad: 1 };
        let w = ConvLstmWeights::zeros(input, 2, 3);
        let out = convlstm_cell(&Tensor::zeros(2, 5), &ConvLstmState::zeros(3, 5), &w).unwrap();
        assert_eq!(out, ConvLstmState::zeros(3, 5));
    }

    #[test]
    fn scalar_cell_matches_dense_lstm() {
        fn sig(v: f64) -> f64 {
            1.0 / (1.0 + (-v).exp())
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input = InputConv::Strided { k: 1, stride: 1, pad: 0 };
        for _ in 0..50 {
            let mut w = ConvLstmWeights::zeros(input, 1, 1);
            w.wx = rand_tensor(&mut rng, 4, 1, 2.0);
            w.b = rand_tensor(&mut rng, 4, 1, 1.0);
            // Width-3 state kernel at T=1 reduces to its centre tap.
            let wh = rand_tensor(&mut rng, 4, 1, 2.0);
            for q in 0..4 {
                w.wh.set(q, 1, wh.get(q, 0));
            }
            let x: f64 = rng.gen_range(-3.0..3.0);
            let h: f64 = rng.gen_range(-1.0..1.0);
            let c: f64 = rng.gen_range(-2.0..2.0);
            let state = ConvLstmState {
                h: Tensor::scalar(h),
                c: Tensor::scalar(c),
            };
            let out = convlstm_cell(&Tensor::scalar(x), &state, &w).unwrap();
            let pre = |q: usize| w.wx.get(q, 0) * x + wh.get(q, 0) * h + w.b.get(q, 0);
            let (i, f, gg, o) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
            let c2 = f * c + i * gg;
            let h2 = o * c2.tanh();
            assert!((out.c.get(0, 0) - c2).abs() < 1e-12);
            assert!((out.h.get(0, 0) - h2).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_state_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = InputConv::Strided { k: 3, stride: 2, pad: 1 };
        let mut w = ConvLstmWeights::zeros(input, 3, 4);
        w.wx = rand_tensor(&mut rng, 16, 9, 5.0);
        w.wh = rand_tensor(&mut rng, 16, 12, 5.0);
        w.b = rand_tensor(&mut rng, 16, 1, 5.0);
        let mut state = ConvLstmState::zeros(4, 8);
        for _ in 0..20 {
            let x = rand_tensor(&mut rng, 3, 16, 10.0);
            state = convlstm_cell(&x, &state, &w).unwrap();
            assert!(state.h.data().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn transposed_input_upsamples() {
        let input = InputConv::Transposed {
            k: 3,
            stride: 2,
            pad: 1,
            out_pad: 1,
        };
        let w = ConvLstmWeights::zeros(input, 6, 2);
        assert_eq!(w.wx.shape(), (6, 24));
        let out = convlstm_cell(&Tensor::zeros(6, 4), &ConvLstmState::zeros(2, 8), &w).unwrap();
        assert_eq!(out.h.shape(), (2, 8));
        assert!(convlstm_cell(&Tensor::zeros(6, 4), &ConvLstmState::zeros(2, 7), &w).is_err());
    }
}
