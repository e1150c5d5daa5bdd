//! Central finite-difference checks of the tape's analytic gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, LayerSpec, Mlp, Mode, ParamSet, Tape, Tensor};
use crate::error::Result;

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-6;

/// Coordinates where both gradients are below this are judged on absolute
/// error, since a relative error of finite-difference noise around a true
/// zero (a bias feeding a train-mode batch norm, say) carries no information.
pub const ZERO_GRAD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Coordinates compared on relative error (parameters plus inputs).
    pub checked: usize,
    /// Coordinates skipped because the step straddled a ReLU kink.
    pub kinks: usize,
    /// Coordinates with both gradients below [`ZERO_GRAD`], and their largest
    /// absolute disagreement.
    pub zeros: usize,
    pub max_zero_error: f64,
    pub max_rel_error: f64,
    /// Name and index of the worst coordinate.
    pub worst: String,
}

/// A random small network: 1 to 3 hidden layers of width ≤ 16, each optionally
/// batch-normalized, with a random activation.
pub fn random_architecture<R: Rng + ?Sized>(rng: &mut R) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut width = rng.random_range(1..=6);
    for _ in 0..rng.random_range(1..=3) {
        let out = rng.random_range(1..=16);
        specs.push(LayerSpec::Linear { fan_in: width, fan_out: out });
        if rng.random::<bool>() {
            specs.push(LayerSpec::BatchNorm { features: out });
        }
        let act = match rng.random_range(0..4) {
            0 => Activation::Relu,
            1 => Activation::LeakyRelu(0.2),
            2 => Activation::Tanh,
            _ => Activation::Sigmoid,
        };
        specs.push(LayerSpec::Act(act));
        width = out;
    }
    specs.push(LayerSpec::Linear { fan_in: width, fan_out: rng.random_range(1..=3) });
    specs
}

fn loss_value(net: &Mlp, params: &ParamSet, x: &Tensor, weights: &Tensor, mode: Mode) -> Result<f64> {
    let mut tape = Tape::new();
    let xi = tape.constant(x.clone());
    let out = net.forward_frozen(&mut tape, params, xi, mode)?;
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    let s = tape.sum(prod);
    Ok(tape.value(s).data()[0])
}

/// Compares analytic gradients of `sum(w * net(x))` for random `x`, `w` and
/// parameters against central differences, for every parameter entry and
/// every input entry. Running statistics are randomized so eval-mode batch
/// norm is exercised away from the identity.
pub fn check_mlp(specs: &[LayerSpec], batch: usize, mode: Mode, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let net = Mlp::new("net", specs, &mut params, &mut rng)?;
    let ids: Vec<_> = params.ids().collect();
    for id in &ids {
        for v in params.value_mut(*id).data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    for l in net.layers() {
        if let super::Layer::BatchNorm(bn) = l {
            for v in params.value_mut(bn.running_var).data_mut() {
                *v = rng.random_range(0.5..2.0);
            }
        }
    }
    let in_dim = net.in_features().unwrap_or(1);
    let out_dim = net.out_features().unwrap_or(1);
    let x = Tensor::matrix(batch, in_dim, (0..batch * in_dim).map(|_| rng.random_range(-2.0..2.0)).collect())?;
    let w = Tensor::matrix(batch, out_dim, (0..batch * out_dim).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    // analytic
    let mut tape = Tape::new();
    let xi = tape.input(x.clone());
    let mut work = params.clone();
    work.zero_grads();
    let out = net.forward(&mut tape, &mut work, xi, mode)?;
    let wn = tape.constant(w.clone());
    let prod = tape.mul(out, wn)?;
    let loss = tape.sum(prod);
    let grads = tape.backward(loss, &mut work)?;
    let x_grad = grads.wrt(xi).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let mut report = GradCheck { checked: 0, kinks: 0, zeros: 0, max_zero_error: 0.0, max_rel_error: 0.0, worst: String::new() };
    let mut compare = |name: &str, i: usize, analytic: f64, eval: &mut dyn FnMut(f64) -> Result<f64>| -> Result<()> {
        let f0 = eval(0.0)?;
        let fp = eval(FD_STEP)?;
        let fm = eval(-FD_STEP)?;
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        if analytic.abs().max(numeric.abs()) < ZERO_GRAD {
            report.zeros += 1;
            report.max_zero_error = report.max_zero_error.max((analytic - numeric).abs());
            return Ok(());
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > 1e-4 {
            let fwd = (fp - f0) / FD_STEP;
            let bwd = (f0 - fm) / FD_STEP;
            if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(REL_FLOOR) {
                report.kinks += 1;
                return Ok(());
            }
        }
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = format!("{name}[{i}]");
        }
        Ok(())
    };

    for id in &ids {
        if !params.is_trainable(*id) {
            continue;
        }
        let name = String::from(params.name(*id));
        for i in 0..params.value(*id).len() {
            let analytic = work.grad(*id).data()[i];
            let mut eval = |delta: f64| {
                let mut p = params.clone();
                p.value_mut(*id).data_mut()[i] += delta;
                loss_value(&net, &p, &x, &w, mode)
            };
            compare(&name, i, analytic, &mut eval)?;
        }
    }
    for i in 0..x.len() {
        let mut eval = |delta: f64| {
            let mut xp = x.clone();
            xp.data_mut()[i] += delta;
            loss_value(&net, &params, &xp, &w, mode)
        };
        compare("input", i, x_grad.data()[i], &mut eval)?;
    }
    Ok(report)
}
