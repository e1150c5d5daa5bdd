//! Generator-entropy approximations.
//!
//! Two routes to the gradient of `-H(p_gen)`:
//!
//! - nearest neighbours: each generated sample is pushed away from the mean of
//!   its `k` nearest neighbours in the batch, `d_i = (mu_i - x_i) / |mu_i - x_i|`,
//!   and `alpha * d_i` is injected as the upstream gradient at sample `i`;
//! - a variational bound: `H(p_gen) = H(z) - H(z|x) + H(x|z)` with `H(z)` fixed
//!   and `H(x|z)` constant, so maximizing entropy means minimizing
//!   `U(q) = E[-log q(z|x)] >= H(z|x)` for an inference network `q`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::RngExt;

use crate::error::{Error, Result};
use crate::math::{ln, sqrt};
use crate::nn::{parse_architecture, Mlp, Mode, NodeId, ParamSet, Tape, Tensor};

/// Directions shorter than this are reported as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::KTooLarge { k, batch: n, needed: k + 1 });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest rows to row `i` (itself excluded), nearest
/// first, ties broken by lower index.
pub fn knn_indices(batch: &Tensor, i: usize, k: usize) -> Result<Vec<usize>> {
    let n = batch.rows();
    check_k(n, k)?;
    if i >= n {
        return Err(Error::InvalidArgument(format!("row {i} out of range for batch of {n}")));
    }
    let xi = batch.row(i);
    // Sorted insertion into a buffer of the k best (distance, index) pairs.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for j in (0..n).filter(|j| *j != i) {
        let d = sq_dist(xi, batch.row(j));
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|(bd, _)| *bd <= d);
        best.insert(pos, (d, j));
        best.truncate(k);
    }
    Ok(best.into_iter().map(|(_, j)| j).collect())
}

/// Mean of the `k` nearest neighbours of row `i`, summed nearest first.
pub fn knn_mean(batch: &Tensor, i: usize, k: usize) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; batch.cols()];
    for j in knn_indices(batch, i, k)? {
        for (m, v) in mean.iter_mut().zip(batch.row(j)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= k as f64;
    }
    Ok(mean)
}

/// Per-sample entropy-gradient directions for a generated batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyGradBatch {
    /// Unit directions `d_i`, one row per sample; zero rows where degenerate.
    pub directions: Tensor,
    pub degenerate: Vec<bool>,
    pub alpha: f64,
    pub k: usize,
}

impl EntropyGradBatch {
    /// `alpha * d_i`, the gradient of `-H` with respect to each sample.
    pub fn scaled(&self) -> Tensor {
        self.directions.map(|v| self.alpha * v)
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|d| **d).count()
    }
}

pub fn knn_entropy_gradients(batch: &Tensor, k: usize, alpha: f64) -> Result<EntropyGradBatch> {
    let (n, dim) = (batch.rows(), batch.cols());
    check_k(n, k)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let mut dirs = vec![0.0; n * dim];
    let mut degenerate = vec![false; n];
    for i in 0..n {
        let mu = knn_mean(batch, i, k)?;
        let diff: Vec<f64> = mu.iter().zip(batch.row(i)).map(|(m, x)| m - x).collect();
        let norm = sqrt(diff.iter().map(|v| v * v).sum());
        if norm < DEGENERATE_NORM {
            degenerate[i] = true;
            continue;
        }
        for (d, v) in dirs[i * dim..(i + 1) * dim].iter_mut().zip(&diff) {
            *d = v / norm;
        }
    }
    Ok(EntropyGradBatch { directions: Tensor::matrix(n, dim, dirs)?, degenerate, alpha, k })
}

/// Amortized diagonal-Gaussian posterior `q(z|x)`: the network outputs
/// `[mean, log_std]`, each `z_dim` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceNet {
    pub net: Mlp,
    pub z_dim: usize,
}

impl InferenceNet {
    /// Two hidden ReLU layers of width `hidden`.
    pub fn new<R: rand::Rng + ?Sized>(
        prefix: &str,
        x_dim: usize,
        z_dim: usize,
        hidden: usize,
        params: &mut ParamSet,
        rng: &mut R,
    ) -> Result<Self> {
        let arch = format!("FC({x_dim},{hidden})-ReLU-FC({hidden},{hidden})-ReLU-FC({hidden},{})", 2 * z_dim);
        Self::from_mlp(Mlp::new(prefix, &parse_architecture(&arch)?, params, rng)?, z_dim)
    }

    pub fn from_mlp(net: Mlp, z_dim: usize) -> Result<Self> {
        if net.out_features() != Some(2 * z_dim) {
            return Err(Error::InvalidArgument(format!(
                "inference net must output {} values, has {:?}",
                2 * z_dim,
                net.out_features()
            )));
        }
        Ok(Self { net, z_dim })
    }

    /// Records `q(.|x)` and returns the `(mean, log_std)` nodes.
    pub fn posterior(&self, tape: &mut Tape, params: &mut ParamSet, x: NodeId) -> Result<(NodeId, NodeId)> {
        let out = self.net.forward(tape, params, x, Mode::Train)?;
        Ok((tape.slice_cols(out, 0, self.z_dim)?, tape.slice_cols(out, self.z_dim, self.z_dim)?))
    }
}

/// Batch mean of `-log N(z; mean, exp(log_std)^2)` for a diagonal Gaussian.
pub fn gaussian_nll(tape: &mut Tape, mean: NodeId, log_std: NodeId, z: NodeId) -> Result<NodeId> {
    let shape = tape.value(z).shape().to_vec();
    if tape.value(mean).shape() != shape.as_slice() || tape.value(log_std).shape() != shape.as_slice() {
        return Err(Error::ShapeMismatch {
            op: "gaussian_nll",
            detail: format!("z {:?}, mean {:?}, log_std {:?}", shape, tape.value(mean).shape(), tape.value(log_std).shape()),
        });
    }
    let (batch, dim) = (tape.value(z).rows(), tape.value(z).cols());
    let diff = tape.sub(z, mean)?;
    let sq = tape.square(diff);
    let neg2 = tape.scale(log_std, -2.0);
    let inv_var = tape.exp(neg2);
    let quad = tape.mul(sq, inv_var)?;
    let quad = tape.scale(quad, 0.5);
    let per = tape.add(quad, log_std)?;
    let total = tape.sum(per);
    let mean_nll = tape.scale(total, 1.0 / batch as f64);
    Ok(tape.add_scalar(mean_nll, 0.5 * dim as f64 * ln(2.0 * PI)))
}

/// Monte-Carlo `U(q)` on jointly drawn `(x, z)` pairs. Differentiable through
/// both the inference net and whatever produced `x`.
pub fn vi_upper_bound(q: &InferenceNet, tape: &mut Tape, params: &mut ParamSet, x: NodeId, z: NodeId) -> Result<NodeId> {
    if tape.value(z).cols() != q.z_dim {
        return Err(Error::DimensionMismatch { expected: q.z_dim, got: tape.value(z).cols() });
    }
    let (mean, log_std) = q.posterior(tape, params, x)?;
    gaussian_nll(tape, mean, log_std, z)
}

/// `|H(x) - (H(z) - H(z|x) + H(x|z))|`.
pub fn entropy_identity_check(hx: f64, hz: f64, hz_given_x: f64, hx_given_z: f64) -> f64 {
    (hx - (hz - hz_given_x + hx_given_z)).abs()
}

/// Differential entropy of a 1D Gaussian with variance `var`.
pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * ln(2.0 * PI * core::f64::consts::E * var)
}

/// The 1D pair `z ~ N(0, 1)`, `x = z + e`, `e ~ N(0, noise_std^2)`, where every
/// entropy has a closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussian {
    pub noise_std: f64,
}

/// A 1D Gaussian `q(z|x) = N(slope * x + intercept, exp(log_std)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPosterior {
    pub slope: f64,
    pub intercept: f64,
    pub log_std: f64,
}

impl LinearGaussian {
    fn noise_var(&self) -> f64 {
        self.noise_std * self.noise_std
    }

    /// `n` joint draws as `(x, z)` column vectors.
    pub fn sample<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Tensor, Tensor) {
        let mut xs = Vec::with_capacity(n);
        let mut zs = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            zs.push(z);
            xs.push(z + self.noise_std * e);
        }
        (Tensor::from_column(xs), Tensor::from_column(zs))
    }

    pub fn posterior(&self) -> LinearPosterior {
        let v = self.noise_var();
        LinearPosterior { slope: 1.0 / (1.0 + v), intercept: 0.0, log_std: 0.5 * ln(v / (1.0 + v)) }
    }

    pub fn h_z(&self) -> f64 {
        gaussian_entropy(1.0)
    }

    pub fn h_x(&self) -> f64 {
        gaussian_entropy(1.0 + self.noise_var())
    }

    pub fn h_x_given_z(&self) -> f64 {
        gaussian_entropy(self.noise_var())
    }

    pub fn h_z_given_x(&self) -> f64 {
        let v = self.noise_var();
        gaussian_entropy(v / (1.0 + v))
    }
}

/// Monte-Carlo `U(q)` over joint draws and its standard error. The mean goes
/// through [`gaussian_nll`]; the error uses the per-sample terms.
pub fn linear_bound(q: &LinearPosterior, x: &Tensor, z: &Tensor) -> Result<(f64, f64)> {
    let n = x.rows();
    if z.rows() != n || n < 2 {
        return Err(Error::DimensionMismatch { expected: n.max(2), got: z.rows() });
    }
    let mean = x.map(|v| q.slope * v + q.intercept);
    let mut tape = Tape::new();
    let zn = tape.constant(z.clone());
    let mn = tape.constant(mean.clone());
    let ls = tape.constant(Tensor::full(&[n, 1], q.log_std));
    let u = gaussian_nll(&mut tape, mn, ls, zn)?;
    let u = tape.value(u).data()[0];
    let inv_var = crate::math::exp(-2.0 * q.log_std);
    let c = q.log_std + 0.5 * ln(2.0 * PI);
    let var = z
        .data()
        .iter()
        .zip(mean.data())
        .map(|(zi, mi)| {
            let t = 0.5 * (zi - mi) * (zi - mi) * inv_var + c - u;
            t * t
        })
        .sum::<f64>()
        / (n - 1) as f64;
    Ok((u, sqrt(var / n as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Tensor {
        Tensor::from_rows(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
    }

    #[test]
    fn knn_mean_examples() {
        assert_eq!(knn_mean(&line(), 0, 2).unwrap(), vec![2.0, 0.0]);
        assert_eq!(knn_mean(&line(), 0, 1).unwrap(), vec![1.0, 0.0]);
        let same = Tensor::from_rows(&[[0.5, -0.75]; 5]);
        assert_eq!(knn_mean(&same, 2, 4).unwrap(), vec![0.5, -0.75]);
        assert!(matches!(knn_mean(&line(), 0, 3), Err(Error::KTooLarge { k: 3, batch: 3, .. })));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let b = Tensor::from_rows(&[[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(knn_indices(&b, 0, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn directions() {
        let g = knn_entropy_gradients(&line(), 2, 1.0).unwrap();
        assert_eq!(g.directions.row(0), &[1.0, 0.0]);
        let centred = Tensor::from_rows(&[[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]]);
        let g = knn_entropy_gradients(&centred, 2, 1.0).unwrap();
        assert!(g.degenerate[0]);
        assert_eq!(g.directions.row(0), &[0.0, 0.0]);
        assert_eq!(g.degenerate_count(), 1);
        assert!(knn_entropy_gradients(&line(), 1, 0.0).is_err());
    }

    #[test]
    fn vi_bound_examples() {
        let z = Tensor::matrix(3, 4, (0..12).map(|i| i as f64 * 0.1 - 0.5).collect()).unwrap();
        let mut tape = Tape::new();
        let zn = tape.constant(z.clone());
        let mu = tape.constant(z.clone());
        let ls = tape.constant(Tensor::zeros(&[3, 4]));
        let u = gaussian_nll(&mut tape, mu, ls, zn).unwrap();
        let base = tape.value(u).data()[0];
        assert!((base - 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
        assert!((base - 3.675754).abs() < 1e-6);

        let mut shifted = z.clone();
        // One coordinate of every row moved by 1.
        for r in 0..3 {
            shifted.data_mut()[r * 4] += 1.0;
        }
        let zs = tape.constant(shifted);
        let u2 = gaussian_nll(&mut tape, mu, ls, zs).unwrap();
        assert!((tape.value(u2).data()[0] - base - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vi_bound_minimized_at_z() {
        let mut params = ParamSet::new();
        for offset in [-0.3, 0.3] {
            let mut tape = Tape::new();
            let z = tape.constant(Tensor::matrix(2, 1, vec![0.5, -1.0]).unwrap());
            let mu = tape.input(Tensor::matrix(2, 1, vec![0.5 + offset, -1.0 + offset]).unwrap());
            let ls = tape.constant(Tensor::full(&[2, 1], 0.2));
            let u = gaussian_nll(&mut tape, mu, ls, z).unwrap();
            let g = tape.backward(u, &mut params).unwrap();
            for v in g.wrt(mu).unwrap().data() {
                assert_eq!(v.signum(), offset.signum());
            }
        }
    }

    #[test]
    fn identity_check_examples() {
        let s2: f64 = 0.3;
        let hx = gaussian_entropy(1.0 + s2);
        let hz = gaussian_entropy(1.0);
        let hz_x = gaussian_entropy(s2 / (1.0 + s2));
        let hx_z = gaussian_entropy(s2);
        assert!(entropy_identity_check(hx, hz, hz_x, hx_z) < 1e-12);
        assert_eq!(entropy_identity_check(1.2, 0.7, 0.7, 1.2), 0.0);
        assert_eq!(entropy_identity_check(0.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn inference_net_width_checked() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut params = ParamSet::new();
        let q = InferenceNet::new("q", 2, 4, 8, &mut params, &mut rng).unwrap();
        assert_eq!(q.net.out_features(), Some(8));
        let bad = Mlp::new("b", &parse_architecture("FC(2,3)").unwrap(), &mut params, &mut rng).unwrap();
        assert!(InferenceNet::from_mlp(bad, 4).is_err());
    }
}
