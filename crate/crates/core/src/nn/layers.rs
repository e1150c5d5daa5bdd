use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::nn::tape::BatchStats;
use crate::nn::{Activation, NodeId, ParamId, ParamSet, Tape, Tensor};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Linear { fan_in: usize, fan_out: usize },
    BatchNorm { features: usize },
    Act(Activation),
}

/// Parses architecture strings like `FC(2,128)-ReLU-FC(128,1)`.
///
/// Tokens: `FC(in,out)`, `BN` (width taken from the preceding `FC`), `ReLU`,
/// `LRec` (leaky ReLU, slope 0.2), `Tanh`, `Sigmoid`.
pub fn parse_architecture(desc: &str) -> Result<Vec<LayerSpec>> {
    let bad = |t: &str| Error::InvalidArgument(format!("bad layer token `{t}` in `{desc}`"));
    let mut out = Vec::new();
    let mut width = None;
    for token in desc.split('-').map(str::trim) {
        let spec = match token {
            "BN" => LayerSpec::BatchNorm { features: width.ok_or_else(|| bad(token))? },
            "ReLU" => LayerSpec::Act(Activation::Relu),
            "LRec" => LayerSpec::Act(Activation::LeakyRelu(0.2)),
            "Tanh" => LayerSpec::Act(Activation::Tanh),
            "Sigmoid" => LayerSpec::Act(Activation::Sigmoid),
            t if t.starts_with("FC(") && t.ends_with(')') => {
                let dims: Vec<&str> = t[3..t.len() - 1].split(',').collect();
                if dims.len() != 2 {
                    return Err(bad(t));
                }
                let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(t));
                let (fan_in, fan_out) = (parse(dims[0])?, parse(dims[1])?);
                if let Some(w) = width {
                    if w != fan_in {
                        return Err(bad(t));
                    }
                }
                width = Some(fan_out);
                LayerSpec::Linear { fan_in, fan_out }
            }
            t => return Err(bad(t)),
        };
        out.push(spec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub features: usize,
}

impl BatchNorm {
    /// Applies batch normalization. In [`Mode::Train`] the batch statistics
    /// are used and folded into the running estimates stored in `params`.
    pub fn forward(&self, tape: &mut Tape, params: &mut ParamSet, x: NodeId, mode: Mode) -> Result<NodeId> {
        let (out, stats) = self.apply(tape, params, x, mode, true)?;
        if let Some(stats) = stats {
            self.update_running(params, &stats);
        }
        Ok(out)
    }

    fn apply(&self, tape: &mut Tape, params: &ParamSet, x: NodeId, mode: Mode, trainable: bool) -> Result<(NodeId, Option<BatchStats>)> {
        let (gamma, beta) = if trainable {
            (tape.param(params, self.gamma), tape.param(params, self.beta))
        } else {
            (
                tape.constant(params.value(self.gamma).clone()),
                tape.constant(params.value(self.beta).clone()),
            )
        };
        match mode {
            Mode::Train => {
                let (out, stats) = tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
                Ok((out, Some(stats)))
            }
            Mode::Eval => {
                let out = tape.batch_norm_eval(
                    x,
                    gamma,
                    beta,
                    params.value(self.running_mean).data(),
                    params.value(self.running_var).data(),
                    BN_EPS,
                )?;
                Ok((out, None))
            }
        }
    }

    fn update_running(&self, params: &mut ParamSet, stats: &BatchStats) {
        for (r, m) in params.value_mut(self.running_mean).data_mut().iter_mut().zip(&stats.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
        }
        for (r, v) in params.value_mut(self.running_var).data_mut().iter_mut().zip(&stats.var_unbiased) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(Linear),
    BatchNorm(BatchNorm),
    Act(Activation),
}

/// A feed-forward stack whose parameters live in a shared [`ParamSet`] under
/// a name prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    prefix: String,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Registers the parameters of `specs` in `params` and initializes them:
    /// weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero biases, unit
    /// batch-norm scale.
    pub fn new<R: rand::Rng + ?Sized>(prefix: &str, specs: &[LayerSpec], params: &mut ParamSet, rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let name = |what: &str| format!("{prefix}.{i}.{what}");
            let layer = match *spec {
                LayerSpec::Linear { fan_in, fan_out } => {
                    let s = sqrt(6.0 / (fan_in + fan_out) as f64);
                    let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-s..s)).collect();
                    Layer::Linear(Linear {
                        weight: params.add(&name("weight"), Tensor::matrix(fan_in, fan_out, w)?)?,
                        bias: params.add(&name("bias"), Tensor::zeros(&[fan_out]))?,
                        fan_in,
                        fan_out,
                    })
                }
                LayerSpec::BatchNorm { features } => Layer::BatchNorm(BatchNorm {
                    gamma: params.add(&name("gamma"), Tensor::full(&[features], 1.0))?,
                    beta: params.add(&name("beta"), Tensor::zeros(&[features]))?,
                    running_mean: params.add_buffer(&name("running_mean"), Tensor::zeros(&[features]))?,
                    running_var: params.add_buffer(&name("running_var"), Tensor::full(&[features], 1.0))?,
                    features,
                }),
                LayerSpec::Act(a) => Layer::Act(a),
            };
            layers.push(layer);
        }
        Ok(Self { prefix: prefix.to_string(), layers })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_features(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Linear(l) => Some(l.fan_in),
            _ => None,
        })
    }

    pub fn out_features(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Linear(l) => Some(l.fan_out),
            _ => None,
        })
    }

    /// Trainable parameters of this network.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Linear(l) => ids.extend([l.weight, l.bias]),
                Layer::BatchNorm(b) => ids.extend([b.gamma, b.beta]),
                Layer::Act(_) => {}
            }
        }
        ids
    }

    fn run(&self, tape: &mut Tape, params: &ParamSet, x: NodeId, mode: Mode, trainable: bool) -> Result<(NodeId, Vec<(usize, BatchStats)>)> {
        let mut h = x;
        let mut stats = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            h = match layer {
                Layer::Linear(l) => {
                    let (w, b) = if trainable {
                        (tape.param(params, l.weight), tape.param(params, l.bias))
                    } else {
                        (
                            tape.constant(params.value(l.weight).clone()),
                            tape.constant(params.value(l.bias).clone()),
                        )
                    };
                    tape.affine(h, w, b)?
                }
                Layer::BatchNorm(bn) => {
                    let (out, s) = bn.apply(tape, params, h, mode, trainable)?;
                    if let Some(s) = s {
                        stats.push((i, s));
                    }
                    out
                }
                Layer::Act(a) => tape.activation(*a, h),
            };
        }
        Ok((h, stats))
    }

    /// Records a forward pass with trainable parameters. Train mode updates the
    /// batch-norm running statistics.
    pub fn forward(&self, tape: &mut Tape, params: &mut ParamSet, x: NodeId, mode: Mode) -> Result<NodeId> {
        let (out, stats) = self.run(tape, params, x, mode, true)?;
        for (i, s) in stats {
            if let Layer::BatchNorm(bn) = &self.layers[i] {
                bn.update_running(params, &s);
            }
        }
        Ok(out)
    }

    /// Records a forward pass treating the parameters as constants: gradients
    /// flow to the input only and running statistics are left alone.
    pub fn forward_frozen(&self, tape: &mut Tape, params: &ParamSet, x: NodeId, mode: Mode) -> Result<NodeId> {
        Ok(self.run(tape, params, x, mode, false)?.0)
    }

    /// Eval-mode forward without recording anything the caller keeps.
    pub fn infer(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        self.infer_mode(params, x, Mode::Eval)
    }

    /// Forward without gradients in the given mode. Train mode normalizes with
    /// the statistics of `x` itself and leaves the running averages alone.
    pub fn infer_mode(&self, params: &ParamSet, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let out = self.forward_frozen(&mut tape, params, input, mode)?;
        Ok(tape.value(out).clone())
    }

    /// Eval-mode forward in row chunks, for large point sets.
    pub fn infer_batched(&self, params: &ParamSet, x: &Tensor, chunk: usize) -> Result<Tensor> {
        self.infer_chunked(params, x, chunk, Mode::Eval)
    }

    /// Chunked forward. Rows are split into near-equal chunks of at most
    /// `chunk` rows so that batch statistics never come from a tiny remainder.
    pub fn infer_chunked(&self, params: &ParamSet, x: &Tensor, chunk: usize, mode: Mode) -> Result<Tensor> {
        let (rows, cols) = (x.rows(), x.cols());
        let parts = rows.div_ceil(chunk.max(1)).max(1);
        let mut out = Vec::new();
        let mut out_cols = 0;
        for p in 0..parts {
            let start = p * rows / parts;
            let end = (p + 1) * rows / parts;
            if start == end {
                continue;
            }
            let part = Tensor::matrix(end - start, cols, x.data()[start * cols..end * cols].to_vec())?;
            let y = self.infer_mode(params, &part, mode)?;
            out_cols = y.cols();
            out.extend_from_slice(y.data());
        }
        Tensor::matrix(rows, out_cols, out)
    }
}
