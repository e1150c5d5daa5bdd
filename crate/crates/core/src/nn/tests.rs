use alloc::vec;
use alloc::vec::Vec;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn naive_affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (n, k, m) = (x.rows(), w.shape()[0], w.shape()[1]);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut acc = b.data()[j];
            for t in 0..k {
                acc += x.data()[i * k + t] * w.data()[t * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    out
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn affine_identity_and_bias() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 2, vec![3.0, -4.0]).unwrap());
    let w = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let b = tape.constant(Tensor::zeros(&[2]));
    let y = tape.affine(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, -4.0]);

    let x = tape.constant(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let w = tape.constant(Tensor::zeros(&[2, 2]));
    let b = tape.constant(Tensor::new(vec![2], vec![0.5, -1.5]).unwrap());
    let y = tape.affine(x, w, b).unwrap();
    for r in 0..3 {
        assert_eq!(tape.value(y).row(r), &[0.5, -1.5]);
    }
}

#[test]
fn affine_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (n, k, m) in [(1, 1, 1), (3, 4, 5), (7, 16, 3), (8, 2, 128)] {
        let (x, w, b) = (random_tensor(&mut rng, &[n, k]), random_tensor(&mut rng, &[k, m]), random_tensor(&mut rng, &[m]));
        let mut tape = Tape::new();
        let (xn, wn, bn) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
        let y = tape.affine(xn, wn, bn).unwrap();
        for (a, e) in tape.value(y).data().iter().zip(naive_affine(&x, &w, &b)) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn affine_shape_mismatch() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[2, 3]));
    let w = tape.constant(Tensor::zeros(&[2, 2]));
    let b = tape.constant(Tensor::zeros(&[2]));
    assert!(matches!(tape.affine(x, w, b), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn activation_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap());
    let r = tape.activation(Activation::Relu, x);
    assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
    let l = tape.activation(Activation::LeakyRelu(0.2), x);
    assert_eq!(tape.value(l).data(), &[-0.2, 2.0]);
    let z = tape.constant(Tensor::scalar(0.0));
    let s = tape.activation(Activation::Sigmoid, z);
    assert_eq!(tape.value(s).data(), &[0.5]);
}

#[test]
fn batchnorm_train_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ParamSet::new();
    let bn = Mlp::new("bn", &[LayerSpec::BatchNorm { features: 3 }], &mut params, &mut rng).unwrap();
    let x = Tensor::new(vec![6, 3], (0..18).map(|i| ((i * 7) % 11) as f64 * 0.3 - 1.0).collect()).unwrap();
    let mut tape = Tape::new();
    let xn = tape.constant(x);
    let y = bn.forward(&mut tape, &mut params, xn, Mode::Train).unwrap();
    let y = tape.value(y);
    for j in 0..3 {
        let col: Vec<f64> = (0..6).map(|r| y.row(r)[j]).collect();
        let mean = col.iter().sum::<f64>() / 6.0;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-8);
        assert!((var - 1.0).abs() < 1e-3);
    }
}

#[test]
fn batchnorm_zero_gamma_gives_beta() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(3, 2, vec![1.0, 5.0, -2.0, 0.0, 4.0, 1.0]).unwrap());
    let g = tape.constant(Tensor::zeros(&[2]));
    let b = tape.constant(Tensor::new(vec![2], vec![0.3, -0.7]).unwrap());
    let (y, _) = tape.batch_norm_train(x, g, b, BN_EPS).unwrap();
    for r in 0..3 {
        assert_eq!(tape.value(y).row(r), &[0.3, -0.7]);
    }
}

#[test]
fn batchnorm_eval_uses_running_stats() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 2, vec![1.5, -2.0]).unwrap());
    let g = tape.constant(Tensor::full(&[2], 1.0));
    let b = tape.constant(Tensor::zeros(&[2]));
    let y = tape.batch_norm_eval(x, g, b, &[1.5, -2.0], &[1.0, 1.0], BN_EPS).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
}

#[test]
fn batchnorm_degenerate_batch() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    let g = tape.constant(Tensor::full(&[2], 1.0));
    let b = tape.constant(Tensor::zeros(&[2]));
    assert_eq!(tape.batch_norm_train(x, g, b, BN_EPS).unwrap_err(), Error::DegenerateBatch(1));
}

#[test]
fn running_stats_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ParamSet::new();
    let bn = Mlp::new("bn", &[LayerSpec::BatchNorm { features: 1 }], &mut params, &mut rng).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap());
    bn.forward(&mut tape, &mut params, x, Mode::Train).unwrap();
    // mean 2, unbiased var 2
    let rm = params.value(params.id("bn.0.running_mean").unwrap()).data()[0];
    let rv = params.value(params.id("bn.0.running_var").unwrap()).data()[0];
    assert!((rm - 0.2).abs() < 1e-12);
    assert!((rv - (0.9 + 0.2)).abs() < 1e-12);
}

#[test]
fn backward_of_sum_is_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut params = ParamSet::new();
    let net = Mlp::new("net", &parse_architecture("FC(3,4)-ReLU-FC(4,2)").unwrap(), &mut params, &mut rng).unwrap();
    let mut tape = Tape::new();
    let x = tape.input(random_tensor(&mut rng, &[5, 3]));
    let _ = net.forward(&mut tape, &mut params, x, Mode::Train).unwrap();
    let s = tape.sum(x);
    let g = tape.backward(s, &mut params).unwrap();
    assert!(g.wrt(x).unwrap().data().iter().all(|v| *v == 1.0));
}

#[test]
fn backward_single_unit_by_hand() {
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::matrix(1, 1, vec![1.5]).unwrap()).unwrap();
    let b = params.add("b", Tensor::zeros(&[1])).unwrap();
    let mut tape = Tape::new();
    let x = tape.input(Tensor::matrix(1, 1, vec![-2.0]).unwrap());
    let (wn, bn) = (tape.param(&params, w), tape.param(&params, b));
    let y = tape.affine(x, wn, bn).unwrap();
    let sq = tape.square(y);
    let loss = tape.sum(sq);
    let g = tape.backward(loss, &mut params).unwrap();
    // d/dw (w x)^2 = 2 w x^2, d/dx = 2 w^2 x
    assert_eq!(params.grad(w).data(), &[2.0 * 1.5 * 4.0]);
    assert_eq!(g.wrt(x).unwrap().data(), &[2.0 * 1.5 * 1.5 * -2.0]);
}

#[test]
fn backward_requires_scalar_loss() {
    let mut params = ParamSet::new();
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.backward(x, &mut params), Err(Error::NonScalarLoss(_))));
}

#[test]
fn disconnected_parameter_is_flagged() {
    let mut params = ParamSet::new();
    let a = params.add("a", Tensor::scalar(1.0)).unwrap();
    let unused = params.add("unused", Tensor::scalar(2.0)).unwrap();
    let mut tape = Tape::new();
    let an = tape.param(&params, a);
    let _ = tape.param(&params, unused);
    let loss = tape.square(an);
    let g = tape.backward(loss, &mut params).unwrap();
    assert_eq!(g.disconnected, vec![unused]);
    assert_eq!(g.ensure_connected(&params), Err(Error::DisconnectedNode("unused".into())));
    assert_eq!(params.grad(unused).data(), &[0.0]);
}

#[test]
fn two_backward_passes_double_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut params = ParamSet::new();
    let net = Mlp::new("g", &parse_architecture("FC(4,8)-BN-ReLU-FC(8,2)").unwrap(), &mut params, &mut rng).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(random_tensor(&mut rng, &[6, 4]));
    let y = net.forward(&mut tape, &mut params, x, Mode::Train).unwrap();
    let sq = tape.square(y);
    let loss = tape.mean(sq);
    tape.backward(loss, &mut params).unwrap();
    let once: Vec<Tensor> = params.ids().map(|id| params.grad(id).clone()).collect();
    tape.backward(loss, &mut params).unwrap();
    for (id, g1) in params.ids().zip(once) {
        for (a, b) in params.grad(id).data().iter().zip(g1.data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }
}

#[test]
fn seeded_backward_injects_gradient() {
    let mut params = ParamSet::new();
    let mut tape = Tape::new();
    let x = tape.input(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
    let y = tape.scale(x, 3.0);
    let loss = tape.sum(y);
    let seed = Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap();
    let g = tape.backward_seeded(Some(loss), &[(y, seed)], &mut params).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[6.0, 0.0]);
}

#[test]
fn adam_zero_gradient_is_noop() {
    let mut params = ParamSet::new();
    let id = params.add("p", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
    let mut adam = AdamState::new(AdamConfig::default(), &params, vec![id]);
    adam.step(&mut params);
    assert_eq!(params.value(id).data(), &[1.0, -2.0, 0.5]);
    assert_eq!(adam.step_count(), 1);
}

#[test]
fn adam_first_step_closed_form() {
    let mut params = ParamSet::new();
    let id = params.add("p", Tensor::new(vec![2], vec![0.0, 0.0]).unwrap()).unwrap();
    let cfg = AdamConfig::default();
    let mut adam = AdamState::new(cfg, &params, vec![id]);
    params.grad_mut(id).data_mut().copy_from_slice(&[0.3, -4.0]);
    adam.step(&mut params);
    for (p, g) in params.value(id).data().iter().zip([0.3f64, -4.0]) {
        let expected = -cfg.lr * g / (g.abs() + cfg.eps);
        assert!((p - expected).abs() < 1e-15);
    }
    assert_eq!(params.grad(id).data(), &[0.0, 0.0]);
}

#[test]
fn adam_descends_quadratic_bowl() {
    // f(p) = (p - 3)^2, minimizer 3.
    let mut params = ParamSet::new();
    let id = params.add("p", Tensor::scalar(0.0)).unwrap();
    let mut adam = AdamState::new(AdamConfig { lr: 0.1, beta1: 0.9, ..AdamConfig::default() }, &params, vec![id]);
    let start = 9.0;
    for _ in 0..100 {
        let p = params.value(id).data()[0];
        params.grad_mut(id).data_mut()[0] = 2.0 * (p - 3.0);
        adam.step(&mut params);
    }
    let p = params.value(id).data()[0];
    assert!((p - 3.0).powi(2) < 0.05 * start, "p = {p}");
}

#[test]
fn parse_architecture_strings() {
    let spec = parse_architecture("FC(4,128)-BN-ReLU-FC(128,128)-BN-ReLU-FC(128,2)").unwrap();
    assert_eq!(spec.len(), 7);
    assert_eq!(spec[1], LayerSpec::BatchNorm { features: 128 });
    assert!(parse_architecture("FC(4,128)-FC(64,2)").is_err());
    assert!(parse_architecture("BN-ReLU").is_err());
    assert!(parse_architecture("Conv").is_err());
}

#[test]
fn infer_matches_eval_forward_and_chunks() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = ParamSet::new();
    let net = Mlp::new("d", &parse_architecture("FC(2,16)-ReLU-FC(16,1)").unwrap(), &mut params, &mut rng).unwrap();
    let x = random_tensor(&mut rng, &[37, 2]);
    let full = net.infer(&params, &x).unwrap();
    let chunked = net.infer_batched(&params, &x, 8).unwrap();
    assert_eq!(full, chunked);
}

#[test]
fn gradcheck_every_layer_kind() {
    use super::gradcheck::check_mlp;
    let specs = parse_architecture("FC(3,5)-BN-ReLU-FC(5,4)-LRec-FC(4,4)-BN-Tanh-FC(4,3)-Sigmoid-FC(3,2)").unwrap();
    for mode in [Mode::Train, Mode::Eval] {
        let r = check_mlp(&specs, 6, mode, 11).unwrap();
        assert!(r.max_rel_error < 1e-4, "{mode:?}: {r:?}");
        assert!(r.checked > 100);
    }
}
