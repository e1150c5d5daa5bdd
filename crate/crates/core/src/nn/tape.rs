use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, ln_1p, sqrt, tanh};
use crate::nn::gemm::{gemm, View};
use crate::nn::{ParamId, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "slope")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Tanh => tanh(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + ln_1p(exp(-x.abs()))
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Act { x: NodeId, kind: Activation },
    /// `y = gamma * xhat + beta`; `xhat` is saved in the node's scratch.
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, inv_std: Vec<f64>, batch_stats: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Softplus(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    SliceCols { x: NodeId, start: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Saved activations needed by backward (batch-norm `xhat`).
    saved: Vec<f64>,
}

/// Batch statistics from a train-mode batch-norm call.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (n - 1) variance, used for the running estimate.
    pub var_unbiased: Vec<f64>,
}

/// Ordered record of primitive operations.
///
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted and backward is a single reverse sweep.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients from one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    /// Trainable parameters on the tape that received no gradient.
    pub disconnected: Vec<ParamId>,
}

impl Gradients {
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(|g| g.as_ref())
    }

    /// Fails with [`Error::DisconnectedNode`] naming the first parameter that
    /// did not reach the loss.
    pub fn ensure_connected(&self, params: &ParamSet) -> Result<()> {
        match self.disconnected.first() {
            Some(id) => Err(Error::DisconnectedNode(params.name(*id).into())),
            None => Ok(()),
        }
    }
}

fn shape_err(op: &'static str, detail: alloc::string::String) -> Error {
    Error::ShapeMismatch { op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad, saved: Vec::new() });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, n: NodeId) -> bool {
        self.nodes[n.0].requires_grad
    }

    /// A leaf whose gradient is tracked and retrievable from [`Gradients`].
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Records a parameter. Its gradient accumulates into `params` on backward.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        self.push(params.value(id).clone(), Op::Param(id), true)
    }

    /// `x W + b` for `x: [batch, in]`, `W: [in, out]`, `b: [out]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.shape().len() != 2 || wv.shape().len() != 2 || xv.shape()[1] != wv.shape()[0] || bv.len() != wv.shape()[1]
        {
            return Err(shape_err(
                "affine",
                format!("input {:?}, weights {:?}, bias {:?}", xv.shape(), wv.shape(), bv.shape()),
            ));
        }
        let (batch, fan_in, fan_out) = (xv.shape()[0], wv.shape()[0], wv.shape()[1]);
        let mut out = Vec::with_capacity(batch * fan_out);
        for _ in 0..batch {
            out.extend_from_slice(bv.data());
        }
        gemm(
            1.0,
            View::row_major(xv.data(), batch, fan_in),
            View::row_major(wv.data(), fan_in, fan_out),
            1.0,
            &mut out,
        );
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::matrix(batch, fan_out, out)?, Op::Affine { x, w, b }, rg))
    }

    pub fn activation(&mut self, kind: Activation, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| kind.apply(v));
        let rg = self.rg(x);
        self.push(value, Op::Act { x, kind }, rg)
    }

    /// Train-mode batch normalization over the rows of `x`.
    pub fn batch_norm_train(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<(NodeId, BatchStats)> {
        let xv = self.value(x);
        let (batch, feats) = (xv.rows(), xv.cols());
        if batch < 2 {
            return Err(Error::DegenerateBatch(batch));
        }
        self.check_bn_shapes(x, gamma, beta)?;
        let mut mean = vec![0.0; feats];
        for r in 0..batch {
            for (m, v) in mean.iter_mut().zip(xv.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= batch as f64);
        let mut var = vec![0.0; feats];
        for r in 0..batch {
            for ((s, v), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let var_unbiased = var.iter().map(|s| s / (batch - 1) as f64).collect();
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / sqrt(s / batch as f64 + eps)).collect();
        let id = self.normalize(x, gamma, beta, &mean, inv_std, true)?;
        Ok((id, BatchStats { mean, var_unbiased }))
    }

    /// Eval-mode batch normalization with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<NodeId> {
        self.check_bn_shapes(x, gamma, beta)?;
        if running_mean.len() != self.value(x).cols() || running_var.len() != running_mean.len() {
            return Err(shape_err("batch_norm", "running statistics do not match features".into()));
        }
        let inv_std = running_var.iter().map(|v| 1.0 / sqrt(v + eps)).collect();
        self.normalize(x, gamma, beta, running_mean, inv_std, false)
    }

    fn check_bn_shapes(&self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<()> {
        let feats = self.value(x).cols();
        if self.value(x).shape().len() != 2 || self.value(gamma).len() != feats || self.value(beta).len() != feats {
            return Err(shape_err(
                "batch_norm",
                format!(
                    "input {:?}, gamma {:?}, beta {:?}",
                    self.value(x).shape(),
                    self.value(gamma).shape(),
                    self.value(beta).shape()
                ),
            ));
        }
        Ok(())
    }

    fn normalize(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, mean: &[f64], inv_std: Vec<f64>, batch_stats: bool) -> Result<NodeId> {
        let xv = self.value(x);
        let (batch, feats) = (xv.rows(), xv.cols());
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = Vec::with_capacity(batch * feats);
        let mut out = Vec::with_capacity(batch * feats);
        for r in 0..batch {
            for (j, v) in xv.row(r).iter().enumerate() {
                let h = (v - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let id = self.push(
            Tensor::matrix(batch, feats, out)?,
            Op::BatchNorm { x, gamma, beta, inv_std, batch_stats },
            rg,
        );
        self.nodes[id.0].saved = xhat;
        Ok(id)
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape())));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: Op, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(Op::Add(a, b), a, b, |x, y| x + y))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(Op::Sub(a, b), a, b, |x, y| x - y))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(Op::Mul(a, b), a, b, |x, y| x * y))
    }

    fn unary(&mut self, op: Op, x: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let value = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.unary(Op::Scale(x, factor), x, |v| v * factor)
    }

    pub fn add_scalar(&mut self, x: NodeId, shift: f64) -> NodeId {
        self.unary(Op::AddScalar(x), x, |v| v + shift)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Exp(x), x, exp)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Square(x), x, |v| v * v)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Softplus(x), x, softplus)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let m = v.sum() / v.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x);
        if v.shape().len() != 2 || start + len > v.cols() {
            return Err(shape_err("slice_cols", format!("{start}..{} of {:?}", start + len, v.shape())));
        }
        let rows = v.rows();
        let data = (0..rows).flat_map(|r| v.row(r)[start..start + len].iter().copied()).collect();
        let value = Tensor::matrix(rows, len, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SliceCols { x, start }, rg))
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// Parameter gradients are added to the buffers in `params` (they are not
    /// reset, so two sweeps over the same tape double them). The tape itself is
    /// left untouched.
    pub fn backward(&self, loss: NodeId, params: &mut ParamSet) -> Result<Gradients> {
        self.backward_seeded(Some(loss), &[], params)
    }

    /// Reverse sweep with extra upstream gradients injected at arbitrary
    /// nodes, added to whatever flows into them from `loss`.
    pub fn backward_seeded(&self, loss: Option<NodeId>, seeds: &[(NodeId, Tensor)], params: &mut ParamSet) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut last = 0;
        if let Some(l) = loss {
            let v = self.value(l);
            if !v.is_scalar() {
                return Err(Error::NonScalarLoss(v.shape().to_vec()));
            }
            grads[l.0] = Some(Tensor::full(v.shape(), 1.0));
            last = l.0;
        }
        for (node, g) in seeds {
            if g.shape() != self.value(*node).shape() {
                return Err(shape_err("seed", format!("{:?} vs {:?}", g.shape(), self.value(*node).shape())));
            }
            accumulate(&mut grads[node.0], g.clone());
            last = last.max(node.0);
        }

        let mut reached = vec![false; params.len()];
        for idx in (0..=last.min(self.nodes.len().saturating_sub(1))).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads, params, &mut reached);
            }
            grads[idx] = Some(g);
        }

        let mut disconnected = Vec::new();
        for node in &self.nodes {
            if let Op::Param(id) = node.op {
                if params.is_trainable(id) && !reached[id.0] && !disconnected.contains(&id) {
                    disconnected.push(id);
                }
            }
        }
        Ok(Gradients { grads, disconnected })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>], params: &mut ParamSet, reached: &mut [bool]) {
        let needs = |n: NodeId| self.nodes[n.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                params.grad_mut(*id).add_assign(g);
                reached[id.0] = true;
            }
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (batch, fan_in, fan_out) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
                let gv = View::row_major(g.data(), batch, fan_out);
                if needs(*x) {
                    let mut dx = vec![0.0; batch * fan_in];
                    gemm(1.0, gv, View::row_major(wv.data(), fan_in, fan_out).t(), 0.0, &mut dx);
                    accumulate(&mut grads[x.0], Tensor::matrix(batch, fan_in, dx).expect("shape"));
                }
                if needs(*w) {
                    let mut dw = vec![0.0; fan_in * fan_out];
                    gemm(1.0, View::row_major(xv.data(), batch, fan_in).t(), gv, 0.0, &mut dw);
                    accumulate(&mut grads[w.0], Tensor::new(wv.shape().to_vec(), dw).expect("shape"));
                }
                if needs(*b) {
                    let mut db = vec![0.0; fan_out];
                    for r in 0..batch {
                        for (d, v) in db.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    let shape = self.value(*b).shape().to_vec();
                    accumulate(&mut grads[b.0], Tensor::new(shape, db).expect("shape"));
                }
            }
            Op::Act { x, kind } => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .zip(node.value.data())
                    .map(|((g, x), y)| g * kind.derivative(*x, *y))
                    .collect();
                accumulate(&mut grads[x.0], Tensor::new(g.shape().to_vec(), data).expect("shape"));
            }
            Op::BatchNorm { x, gamma, beta, inv_std, batch_stats } => {
                let (batch, feats) = (g.rows(), g.cols());
                let xhat = &node.saved;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; feats];
                let mut dbeta = vec![0.0; feats];
                for r in 0..batch {
                    for j in 0..feats {
                        let gv = g.data()[r * feats + j];
                        dgamma[j] += gv * xhat[r * feats + j];
                        dbeta[j] += gv;
                    }
                }
                if needs(*x) {
                    let mut dx = vec![0.0; batch * feats];
                    let n = batch as f64;
                    for j in 0..feats {
                        for r in 0..batch {
                            let k = r * feats + j;
                            dx[k] = if *batch_stats {
                                // d xhat = g * gamma; dx = inv_std / n * (n dxhat - sum dxhat - xhat sum(dxhat xhat))
                                gam[j] * inv_std[j] / n * (n * g.data()[k] - dbeta[j] - xhat[k] * dgamma[j])
                            } else {
                                g.data()[k] * gam[j] * inv_std[j]
                            };
                        }
                    }
                    accumulate(&mut grads[x.0], Tensor::matrix(batch, feats, dx).expect("shape"));
                }
                if needs(*gamma) {
                    let shape = self.value(*gamma).shape().to_vec();
                    accumulate(&mut grads[gamma.0], Tensor::new(shape, dgamma).expect("shape"));
                }
                if needs(*beta) {
                    let shape = self.value(*beta).shape().to_vec();
                    accumulate(&mut grads[beta.0], Tensor::new(shape, dbeta).expect("shape"));
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if needs(*b) {
                    accumulate(&mut grads[b.0], g.clone());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if needs(*b) {
                    accumulate(&mut grads[b.0], g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    let d = g.data().iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                    accumulate(&mut grads[a.0], Tensor::new(g.shape().to_vec(), d).expect("shape"));
                }
                if needs(*b) {
                    let d = g.data().iter().zip(av.data()).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads[b.0], Tensor::new(g.shape().to_vec(), d).expect("shape"));
                }
            }
            Op::Scale(x, f) => accumulate(&mut grads[x.0], g.map(|v| v * f)),
            Op::AddScalar(x) => accumulate(&mut grads[x.0], g.clone()),
            Op::Exp(x) => {
                let d = g.data().iter().zip(node.value.data()).map(|(g, y)| g * y).collect();
                accumulate(&mut grads[x.0], Tensor::new(g.shape().to_vec(), d).expect("shape"));
            }
            Op::Square(x) => {
                let d = g.data().iter().zip(self.value(*x).data()).map(|(g, v)| 2.0 * g * v).collect();
                accumulate(&mut grads[x.0], Tensor::new(g.shape().to_vec(), d).expect("shape"));
            }
            Op::Softplus(x) => {
                let d = g.data().iter().zip(self.value(*x).data()).map(|(g, v)| g * sigmoid(*v)).collect();
                accumulate(&mut grads[x.0], Tensor::new(g.shape().to_vec(), d).expect("shape"));
            }
            Op::Sum(x) => {
                let shape = self.value(*x).shape();
                accumulate(&mut grads[x.0], Tensor::full(shape, g.data()[0]));
            }
            Op::Mean(x) => {
                let v = self.value(*x);
                accumulate(&mut grads[x.0], Tensor::full(v.shape(), g.data()[0] / v.len() as f64));
            }
            Op::SliceCols { x, start } => {
                let v = self.value(*x);
                let (rows, cols, len) = (v.rows(), v.cols(), g.cols());
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                }
                accumulate(&mut grads[x.0], Tensor::matrix(rows, cols, d).expect("shape"));
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}
