//! Reverse-mode automatic differentiation over a recorded tape of tensor ops.
//!
//! A [`Graph`] is built for one forward pass. Each call appends a node holding
//! its value; [`Graph::backward`] replays the adjoint rules in reverse order.
//! Parameters enter through [`Graph::param`] and are identified by an index the
//! caller chooses, so gradients can be routed back to a parameter store.

use super::conv::{
    conv1d_backward, conv1d_transpose, conv1d_transpose_backward, conv1d_with_cols, ConvSpec,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Conv {
        x: NodeId,
        w: NodeId,
        spec: ConvSpec,
        cols: Vec<f64>,
    },
    ConvT {
        x: NodeId,
        w: NodeId,
        spec: ConvSpec,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Abs(NodeId),
    Softplus(NodeId),
    /// Gate pre-activations `[4C, T]` (i, f, g, o) plus optional previous cell
    /// state to `[2C, T]` holding `c'` then `h'`. Saves activated gates and
    /// `tanh(c')`.
    Lstm {
        gates: NodeId,
        c_prev: Option<NodeId>,
        acts: Vec<f64>,
        tanh_c: Vec<f64>,
    },
    Rows {
        x: NodeId,
        start: usize,
    },
    Concat(Vec<NodeId>),
    MeanTime(NodeId),
    Mean(NodeId),
    Sum(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::new(x.channels(), x.length(), data).expect("same shape")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.channels(), a.length(), data).expect("same shape")
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// Constant leaf; no gradient is tracked.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Leaf whose gradient is reported by [`Gradients::get`] but which is not a
    /// parameter.
    pub fn input_with_grad(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, true)
    }

    /// Trainable leaf tagged with the caller's parameter index.
    pub fn param(&mut self, index: usize, value: Tensor) -> NodeId {
        self.push(value, Op::Param(index), true)
    }

    /// Strided convolution; `w` holds the kernel as `[out_ch, in_ch * k]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let ws = self.value(w).shape();
        let cin = self.value(x).channels();
        if cin == 0 || !ws.1.is_multiple_of(cin) {
            return Err(Error::shape(format!(
                "conv kernel {ws:?} does not fit input with {cin} channels"
            )));
        }
        let spec = ConvSpec::new(ws.0, cin, ws.1 / cin, stride, pad);
        let (y, cols) = conv1d_with_cols(self.value(x), self.value(w).data(), &spec)?;
        let ng = self.ng(x) || self.ng(w);
        Ok(self.push(y, Op::Conv { x, w, spec, cols }, ng))
    }

    /// Transposed convolution with kernel `w` of the forward conv it undoes,
    /// stored `[x_channels, out_ch * k]`.
    pub fn conv1d_transpose(
        &mut self,
        x: NodeId,
        w: NodeId,
        k: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Result<NodeId> {
        let ws = self.value(w).shape();
        if k == 0 || !ws.1.is_multiple_of(k) {
            return Err(Error::shape(format!("transposed kernel {ws:?} is not a multiple of k={k}")));
        }
        let spec = ConvSpec::new(ws.0, ws.1 / k, k, stride, pad);
        let y = conv1d_transpose(self.value(x), self.value(w).data(), &spec, out_pad)?;
        let ng = self.ng(x) || self.ng(w);
        Ok(self.push(y, Op::ConvT { x, w, spec }, ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let y = zip(self.value(a), self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(y, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let y = zip(self.value(a), self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(y, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let y = zip(self.value(a), self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(y, Op::Mul(a, b), ng))
    }

    /// Adds a `[C, 1]` bias to every time step of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (c, t) = self.value(x).shape();
        if self.value(b).shape() != (c, 1) {
            return Err(Error::shape(format!(
                "bias {:?} does not match {c} channels",
                self.value(b).shape()
            )));
        }
        let mut y = self.value(x).clone();
        let bias = self.value(b).data().to_vec();
        for (ch, bv) in bias.iter().enumerate() {
            for v in &mut y.data_mut()[ch * t..(ch + 1) * t] {
                *v += bv;
            }
        }
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(y, Op::AddBias(x, b), ng))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let y = map(self.value(x), |v| v * s);
        let ng = self.ng(x);
        self.push(y, Op::Scale(x, s), ng)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = map(self.value(x), sigmoid);
        let ng = self.ng(x);
        self.push(y, Op::Sigmoid(x), ng)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = map(self.value(x), f64::tanh);
        let ng = self.ng(x);
        self.push(y, Op::Tanh(x), ng)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = map(self.value(x), |v| v.max(0.0));
        let ng = self.ng(x);
        self.push(y, Op::Relu(x), ng)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let y = map(self.value(x), f64::abs);
        let ng = self.ng(x);
        self.push(y, Op::Abs(x), ng)
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let y = map(self.value(x), softplus);
        let ng = self.ng(x);
        self.push(y, Op::Softplus(x), ng)
    }

    /// LSTM state update from summed gate pre-activations `[4C, T]` ordered
    /// (i, f, g, o). Returns a `[2C, T]` node with `c'` in the first `C` rows
    /// and `h'` in the rest; split with [`Graph::rows`].
    pub fn lstm_update(&mut self, gates: NodeId, c_prev: Option<NodeId>) -> Result<NodeId> {
        let (c4, t) = self.value(gates).shape();
        if c4 % 4 != 0 {
            return Err(Error::shape(format!("gate tensor has {c4} rows, not a multiple of 4")));
        }
        let ch = c4 / 4;
        if let Some(c) = c_prev {
            if self.value(c).shape() != (ch, t) {
                return Err(Error::shape(format!(
                    "cell state {:?} does not match gates for {ch}x{t}",
                    self.value(c).shape()
                )));
            }
        }
        let n = ch * t;
        let z = self.value(gates).data();
        let mut acts = vec![0.0; 4 * n];
        for (k, a) in acts.iter_mut().enumerate() {
            *a = if k / n == 2 { z[k].tanh() } else { sigmoid(z[k]) };
        }
        let mut out = vec![0.0; 2 * n];
        let mut tanh_c = vec![0.0; n];
        let prev = c_prev.map(|c| self.value(c).data());
        for k in 0..n {
            let (i, f, g, o) = (acts[k], acts[n + k], acts[2 * n + k], acts[3 * n + k]);
            let c = f * prev.map_or(0.0, |p| p[k]) + i * g;
            let tc = c.tanh();
            out[k] = c;
            out[n + k] = o * tc;
            tanh_c[k] = tc;
        }
        let y = Tensor::new(2 * ch, t, out)?;
        let ng = self.ng(gates) || c_prev.is_some_and(|c| self.ng(c));
        Ok(self.push(
            y,
            Op::Lstm {
                gates,
                c_prev,
                acts,
                tanh_c,
            },
            ng,
        ))
    }

    /// Channels `start..start + count` of `x`.
    pub fn rows(&mut self, x: NodeId, start: usize, count: usize) -> Result<NodeId> {
        let (c, t) = self.value(x).shape();
        if start + count > c {
            return Err(Error::shape(format!("rows {start}..{} of {c}", start + count)));
        }
        let y = Tensor::new(count, t, self.value(x).data()[start * t..(start + count) * t].to_vec())?;
        let ng = self.ng(x);
        Ok(self.push(y, Op::Rows { x, start }, ng))
    }

    /// Stacks tensors of equal length along the channel axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        let t = self.value(*first).length();
        let mut data = Vec::new();
        let mut c = 0;
        for &p in parts {
            let v = self.value(p);
            if v.length() != t {
                return Err(Error::shape(format!(
                    "concat lengths differ: {} vs {t}",
                    v.length()
                )));
            }
            c += v.channels();
            data.extend_from_slice(v.data());
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let y = Tensor::new(c, t, data)?;
        Ok(self.push(y, Op::Concat(parts.to_vec()), ng))
    }

    /// Per-channel mean over time, `[C, T] -> [C, 1]`.
    pub fn mean_time(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let t = v.length() as f64;
        let data = (0..v.channels()).map(|c| v.row(c).iter().sum::<f64>() / t).collect();
        let y = Tensor::new(v.channels(), 1, data).expect("column");
        let ng = self.ng(x);
        self.push(y, Op::MeanTime(x), ng)
    }

    /// Mean of all entries as a `[1, 1]` scalar.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let m = v.data().iter().sum::<f64>() / v.data().len() as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(m), Op::Mean(x), ng)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum::<f64>();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Reverse pass from a `[1, 1]` node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::shape(format!("backward needs a scalar loss, got {shape:?}")));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            self.propagate(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |id: NodeId, g: Tensor| {
            if !self.ng(id) {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        };
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Conv { x, w, spec, cols } => {
                let xv = self.value(*x);
                let (dx, dw) = conv1d_backward(dy, self.value(*w).data(), cols, spec, xv.length(), self.ng(*x));
                if let Some(dx) = dx {
                    acc(*x, Tensor::new(xv.channels(), xv.length(), dx).expect("dx"));
                }
                let ws = self.value(*w).shape();
                acc(*w, Tensor::new(ws.0, ws.1, dw).expect("dw"));
            }
            Op::ConvT { x, w, spec } => {
                let xv = self.value(*x);
                let (dx, dw) =
                    conv1d_transpose_backward(dy, xv, self.value(*w).data(), spec, self.ng(*x));
                if let Some(dx) = dx {
                    acc(*x, Tensor::new(xv.channels(), xv.length(), dx).expect("dx"));
                }
                let ws = self.value(*w).shape();
                acc(*w, Tensor::new(ws.0, ws.1, dw).expect("dw"));
            }
            Op::Add(a, b) => {
                acc(*a, dy.clone());
                acc(*b, dy.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, dy.clone());
                acc(*b, map(dy, |v| -v));
            }
            Op::Mul(a, b) => {
                acc(*a, zip(dy, self.value(*b), |g, v| g * v));
                acc(*b, zip(dy, self.value(*a), |g, v| g * v));
            }
            Op::AddBias(x, b) => {
                acc(*x, dy.clone());
                let data = (0..dy.channels()).map(|c| dy.row(c).iter().sum()).collect();
                acc(*b, Tensor::new(dy.channels(), 1, data).expect("bias"));
            }
            Op::Scale(x, s) => acc(*x, map(dy, |v| v * s)),
            Op::Sigmoid(x) => acc(*x, zip(dy, &node.value, |g, y| g * y * (1.0 - y))),
            Op::Tanh(x) => acc(*x, zip(dy, &node.value, |g, y| g * (1.0 - y * y))),
            Op::Relu(x) => acc(*x, zip(dy, self.value(*x), |g, v| if v > 0.0 { g } else { 0.0 })),
            Op::Abs(x) => acc(
                *x,
                zip(dy, self.value(*x), |g, v| {
                    if v > 0.0 {
                        g
                    } else if v < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Softplus(x) => acc(*x, zip(dy, self.value(*x), |g, v| g * sigmoid(v))),
            Op::Lstm {
                gates,
                c_prev,
                acts,
                tanh_c,
            } => {
                let (c2, t) = node.value.shape();
                let n = c2 / 2 * t;
                let d = dy.data();
                let prev = c_prev.map(|c| self.value(c).data());
                let mut dz = vec![0.0; 4 * n];
                let mut dc_prev = vec![0.0; n];
                for k in 0..n {
                    let (i, f, g, o) = (acts[k], acts[n + k], acts[2 * n + k], acts[3 * n + k]);
                    let tc = tanh_c[k];
                    let dh = d[n + k];
                    let dc = d[k] + dh * o * (1.0 - tc * tc);
                    let cp = prev.map_or(0.0, |p| p[k]);
                    dz[k] = dc * g * i * (1.0 - i);
                    dz[n + k] = dc * cp * f * (1.0 - f);
                    dz[2 * n + k] = dc * i * (1.0 - g * g);
                    dz[3 * n + k] = dh * tc * o * (1.0 - o);
                    dc_prev[k] = dc * f;
                }
                acc(*gates, Tensor::new(4 * c2 / 2, t, dz).expect("gates"));
                if let Some(c) = c_prev {
                    acc(*c, Tensor::new(c2 / 2, t, dc_prev).expect("cell"));
                }
            }
            Op::Rows { x, start } => {
                if self.ng(*x) {
                    let (c, t) = self.value(*x).shape();
                    let mut g = Tensor::zeros(c, t);
                    g.data_mut()[start * t..start * t + dy.data().len()].copy_from_slice(dy.data());
                    acc(*x, g);
                }
            }
            Op::Concat(parts) => {
                let t = dy.length();
                let mut off = 0;
                for &p in parts {
                    let c = self.value(p).channels();
                    if self.ng(p) {
                        let g = Tensor::new(c, t, dy.data()[off * t..(off + c) * t].to_vec()).expect("part");
                        acc(p, g);
                    }
                    off += c;
                }
            }
            Op::MeanTime(x) => {
                let (c, t) = self.value(*x).shape();
                let mut g = Tensor::zeros(c, t);
                for ch in 0..c {
                    let v = dy.get(ch, 0) / t as f64;
                    g.row_mut(ch).fill(v);
                }
                acc(*x, g);
            }
            Op::Mean(x) => {
                let (c, t) = self.value(*x).shape();
                acc(*x, Tensor::filled(c, t, dy.get(0, 0) / (c * t) as f64));
            }
            Op::Sum(x) => {
                let (c, t) = self.value(*x).shape();
                acc(*x, Tensor::filled(c, t, dy.get(0, 0)));
            }
        }
    }

    /// Parameter indices in the order they were added.
    pub fn param_nodes(&self) -> impl Iterator<Item = (usize, NodeId)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param(p) => Some((p, NodeId(i))),
            _ => None,
        })
    }
}

/// Result of [`Graph::backward`]: adjoints of every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Adds every parameter gradient into `out[param_index]`; parameters the
    /// loss does not reach are left untouched.
    pub fn accumulate_params(&self, graph: &Graph, out: &mut [Vec<f64>]) -> Result<()> {
        for (p, id) in graph.param_nodes() {
            let Some(g) = self.get(id) else { continue };
            let slot = out
                .get_mut(p)
                .ok_or_else(|| Error::shape(format!("parameter index {p} out of range")))?;
            if slot.len() != g.data().len() {
                return Err(Error::shape(format!(
                    "parameter {p} gradient has {} values, buffer {}",
                    g.data().len(),
                    slot.len()
                )));
            }
            for (s, v) in slot.iter_mut().zip(g.data()) {
                *s += v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.input_with_grad(Tensor::new(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &Tensor::filled(2, 3, 1.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.input_with_grad(Tensor::zeros(2, 2));
        let y = g.tanh(x);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn shared_nodes_accumulate() {
        let mut g = Graph::new();
        let x = g.param(0, Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().get(0, 0), 6.0);
        let mut buf = vec![vec![1.0]];
        grads.accumulate_params(&g, &mut buf).unwrap();
        assert_eq!(buf[0][0], 7.0);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.input(Tensor::scalar(2.0));
        let p = g.param(0, Tensor::scalar(1.0));
        let y = g.mul(c, p).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().get(0, 0), 2.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
