//! The calibrated minimax game over an explicit finite data space.
//!
//! Everything here works on plain probability vectors: the generator is a
//! [`Simplex`], the discriminator a [`CostVector`]. The game value is
//!
//! ```text
//! L(p_gen, c) = E_{p_gen}[c] - E_{p_data}[c] + K(p_gen)
//! ```
//!
//! and at the saddle point `c*(x) = -dK/dp(x)|_{p_data} - lambda + mu(x)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, ln};
use crate::seed::{self, Stream};

/// Tolerance on the total mass of a [`Simplex`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over a finite space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Simplex {
    probs: Vec<f64>,
}

impl Simplex {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidSimplex("empty".into()));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidSimplex(format!(
                "entry {i} = {} is negative or non-finite",
                probs[i]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL * probs.len() as f64 {
            return Err(Error::InvalidSimplex(format!("entries sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidSimplex("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidSimplex("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSimplex("empty".into()));
        }
        Ok(Self { probs: vec![1.0 / n as f64; n] })
    }

    /// Softmax of free logits. Feasible by construction.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| exp(l - max)).collect();
        let total: f64 = exps.iter().sum();
        Self { probs: exps.into_iter().map(|e| e / total).collect() }
    }

    /// A random distribution whose entries are all at least `floor`.
    pub fn random_full_support<R: rand::Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> Result<Self> {
        if n == 0 || floor * n as f64 >= 1.0 {
            return Err(Error::InvalidArgument(format!("cannot place floor {floor} on {n} cells")));
        }
        // Exponential spacings give a uniform draw on the simplex.
        let raw: Vec<f64> = (0..n).map(|_| -ln(1.0 - rng.random::<f64>())).collect();
        let total: f64 = raw.iter().sum();
        let free = 1.0 - floor * n as f64;
        Self::from_weights(&raw.iter().map(|r| floor + free * r / total).collect::<Vec<_>>())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Indicator of `p(x) > 0`.
    pub fn support(&self) -> Vec<bool> {
        self.probs.iter().map(|p| *p > 0.0).collect()
    }
}

impl TryFrom<Vec<f64>> for Simplex {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Simplex> for Vec<f64> {
    fn from(s: Simplex) -> Self {
        s.probs
    }
}

/// Discriminator costs `c(x)` over a finite space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CostVector {
    costs: Vec<f64>,
}

impl CostVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if let Some(i) = costs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCost(i));
        }
        Ok(Self { costs })
    }

    pub fn zeros(n: usize) -> Self {
        Self { costs: vec![0.0; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// Largest deviation from the mean; zero iff the vector is constant.
    pub fn spread(&self) -> f64 {
        let mean = self.costs.iter().sum::<f64>() / self.costs.len() as f64;
        self.costs.iter().map(|c| (c - mean).abs()).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for CostVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CostVector> for Vec<f64> {
    fn from(c: CostVector) -> Self {
        c.costs
    }
}

/// The calibrating term `K(p_gen)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum RegularizerKind {
    /// `K = -H(p) = sum p log p`.
    NegEntropy,
    /// `K = 1/2 ||p||^2`.
    HalfL2,
    /// `K = const`; provides no training signal.
    Constant(f64),
}

/// `lambda` is the multiplier of the normalization constraint, `mu` those of
/// `p_gen >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVars {
    pub lambda: f64,
    pub mu: Vec<f64>,
}

impl DualVars {
    pub fn zero(n: usize) -> Self {
        Self { lambda: 0.0, mu: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity_residual: f64,
    pub complementary_slackness_residual: f64,
    pub primal_feasibility_residual: f64,
    pub dual_feasibility_ok: bool,
    /// Recovered normalization multiplier.
    pub lambda: f64,
    /// Recovered support multipliers.
    pub mu: Vec<f64>,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity_residual
            .max(self.complementary_slackness_residual)
            .max(self.primal_feasibility_residual)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.dual_feasibility_ok && self.max_residual() < tol
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub fn regularizer_value(kind: RegularizerKind, p: &Simplex) -> f64 {
    match kind {
        RegularizerKind::NegEntropy => p
            .as_slice()
            .iter()
            .filter(|q| **q > 0.0)
            .map(|q| q * ln(*q))
            .sum(),
        RegularizerKind::HalfL2 => 0.5 * p.as_slice().iter().map(|q| q * q).sum::<f64>(),
        RegularizerKind::Constant(v) => v,
    }
}

/// `dK/dp(x)`. Fails for the entropy at a zero-probability point, where the
/// derivative diverges; see [`regularizer_grad_flagged`].
pub fn regularizer_grad(kind: RegularizerKind, p: &Simplex) -> Result<Vec<f64>> {
    if kind == RegularizerKind::NegEntropy {
        if let Some(i) = p.as_slice().iter().position(|q| *q == 0.0) {
            return Err(Error::ZeroProbabilityEntropy(i));
        }
    }
    Ok(regularizer_grad_flagged(kind, p).0)
}

/// Like [`regularizer_grad`], but zero-probability entropy entries are set to
/// `-inf` (the limit of `log p + 1`) and flagged in the returned mask.
pub fn regularizer_grad_flagged(kind: RegularizerKind, p: &Simplex) -> (Vec<f64>, Vec<bool>) {
    let probs = p.as_slice();
    match kind {
        RegularizerKind::NegEntropy => {
            let flags: Vec<bool> = probs.iter().map(|q| *q == 0.0).collect();
            let grad = probs
                .iter()
                .map(|q| if *q == 0.0 { f64::NEG_INFINITY } else { ln(*q) + 1.0 })
                .collect();
            (grad, flags)
        }
        RegularizerKind::HalfL2 => (probs.to_vec(), vec![false; probs.len()]),
        RegularizerKind::Constant(_) => (vec![0.0; probs.len()], vec![false; probs.len()]),
    }
}

pub fn lagrangian(p_gen: &Simplex, c: &CostVector, p_data: &Simplex, kind: RegularizerKind) -> Result<f64> {
    check_len(p_gen.len(), c.len())?;
    check_len(p_gen.len(), p_data.len())?;
    let gap: f64 = p_gen
        .as_slice()
        .iter()
        .zip(p_data.as_slice())
        .zip(c.as_slice())
        .map(|((g, d), c)| (g - d) * c)
        .sum();
    Ok(gap + regularizer_value(kind, p_gen))
}

/// Closed-form saddle-point discriminator for the given duals.
pub fn optimal_discriminator(kind: RegularizerKind, p_data: &Simplex, dual: &DualVars) -> Result<CostVector> {
    check_len(p_data.len(), dual.mu.len())?;
    for (i, (&mu, &p)) in dual.mu.iter().zip(p_data.as_slice()).enumerate() {
        if mu < 0.0 || (p > 0.0 && mu != 0.0) || !mu.is_finite() {
            return Err(Error::InvalidDuals(i));
        }
    }
    let (grad, zero) = regularizer_grad_flagged(kind, p_data);
    if let Some(i) = zero.iter().position(|z| *z) {
        // -log 0 diverges: no finite optimum off the support.
        return Err(Error::ZeroProbabilityEntropy(i));
    }
    CostVector::new(
        grad.iter()
            .zip(&dual.mu)
            .map(|(g, mu)| -g - dual.lambda + mu)
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub steps: usize,
    pub primal_lr: f64,
    pub dual_lr: f64,
    pub seed: u64,
    /// Stop early once the saddle residual drops below this value.
    pub stop_tol: Option<f64>,
    /// Residual below which the outcome counts as converged.
    pub converged_tol: f64,
}

impl SolverOptions {
    /// Step sizes that are stable for every regularizer on distributions with
    /// entries in `[1e-3, 1]`.
    pub fn for_kind(kind: RegularizerKind, seed: u64) -> Self {
        let (primal_lr, dual_lr) = match kind {
            RegularizerKind::NegEntropy => (0.5, 1.0),
            RegularizerKind::HalfL2 => (2.0, 0.5),
            RegularizerKind::Constant(_) => (0.5, 0.5),
        };
        Self {
            steps: 20_000,
            primal_lr,
            dual_lr,
            seed,
            stop_tol: None,
            converged_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub p_gen: Simplex,
    pub c: CostVector,
    /// `max(|p_gen - p_data|_inf, half-spread of c + dK/dp over the support)`.
    pub residual: f64,
    pub converged: bool,
    pub steps_taken: usize,
}

struct SaddleState {
    logits: Vec<f64>,
    costs: Vec<f64>,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + ln(logits.iter().map(|l| exp(l - max)).sum::<f64>());
    logits.iter().map(|l| l - lse).collect()
}

/// Gradient of `K` in terms of `log p`, so the entropy term never sees `log 0`.
fn grad_from_log_probs(kind: RegularizerKind, log_p: &[f64]) -> Vec<f64> {
    match kind {
        RegularizerKind::NegEntropy => log_p.iter().map(|l| l + 1.0).collect(),
        RegularizerKind::HalfL2 => log_p.iter().map(|l| exp(*l)).collect(),
        RegularizerKind::Constant(_) => vec![0.0; log_p.len()],
    }
}

fn saddle_field(kind: RegularizerKind, state: &SaddleState, p_data: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let log_p = log_softmax(&state.logits);
    let grad_k = grad_from_log_probs(kind, &log_p);
    let primal = state.costs.iter().zip(&grad_k).map(|(c, g)| c + g).collect();
    let dual = log_p.iter().zip(p_data).map(|(l, d)| exp(*l) - d).collect();
    (primal, dual)
}

fn saddle_residual(kind: RegularizerKind, state: &SaddleState, p_data: &[f64]) -> f64 {
    let (primal, dual) = saddle_field(kind, state, p_data);
    let feas = dual.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let on_support = primal.iter().zip(p_data).filter(|(_, d)| **d > 0.0).map(|(s, _)| *s);
    let (lo, hi) = on_support.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    feas.max(0.5 * (hi - lo))
}

/// Solves `max_c min_{p_gen} L(p_gen, c)` by mirror-prox (extragradient) with
/// entropic mirror map on the generator and Euclidean ascent on the costs.
///
/// The generator is held as free logits, so every iterate is a valid
/// distribution. Non-convergence is reported through
/// [`SolveOutcome::converged`], not as an error.
pub fn solve_minimax(kind: RegularizerKind, p_data: &Simplex, opts: &SolverOptions) -> Result<SolveOutcome> {
    if opts.steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if !(opts.primal_lr > 0.0 && opts.dual_lr > 0.0) {
        return Err(Error::InvalidArgument("learning rates must be > 0".into()));
    }
    let n = p_data.len();
    let data = p_data.as_slice();
    let mut rng = seed::rng(opts.seed, Stream::TabularInit);
    let mut state = SaddleState {
        logits: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        costs: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };

    let mut steps_taken = opts.steps;
    for step in 0..opts.steps {
        let (gp, gc) = saddle_field(kind, &state, data);
        let half = SaddleState {
            logits: state.logits.iter().zip(&gp).map(|(l, g)| l - opts.primal_lr * g).collect(),
            costs: state.costs.iter().zip(&gc).map(|(c, g)| c + opts.dual_lr * g).collect(),
        };
        let (gp, gc) = saddle_field(kind, &half, data);
        for (l, g) in state.logits.iter_mut().zip(&gp) {
            *l -= opts.primal_lr * g;
        }
        for (c, g) in state.costs.iter_mut().zip(&gc) {
            *c += opts.dual_lr * g;
        }
        // Re-centre the logits; the softmax is shift invariant.
        let mean = state.logits.iter().sum::<f64>() / n as f64;
        state.logits.iter_mut().for_each(|l| *l -= mean);

        debug_assert!(Simplex::new(Simplex::from_logits(&state.logits).probs).is_ok());

        if let Some(tol) = opts.stop_tol {
            if saddle_residual(kind, &state, data) < tol {
                steps_taken = step + 1;
                break;
            }
        }
    }

    let residual = saddle_residual(kind, &state, data);
    Ok(SolveOutcome {
        p_gen: Simplex::from_logits(&state.logits),
        c: CostVector::new(state.costs)?,
        residual,
        converged: residual.is_finite() && residual < opts.converged_tol,
        steps_taken,
    })
}

/// Certifies a candidate saddle point against the KKT conditions of
/// `min K(p) s.t. p = p_data, p >= 0, sum p = 1`.
///
/// The duals are not supplied: `lambda` is the least-squares fit of the
/// stationarity equation over the data support, and off the support
/// `mu = max(0, c + dK/dp + lambda)`. A raw `mu` below `-tol` marks dual
/// infeasibility. Points where the entropy gradient diverges are skipped in
/// the stationarity residual.
pub fn verify_kkt(p_gen: &Simplex, c: &CostVector, kind: RegularizerKind, p_data: &Simplex, tol: f64) -> Result<KktReport> {
    let n = p_data.len();
    check_len(n, p_gen.len())?;
    check_len(n, c.len())?;
    let (grad, diverged) = regularizer_grad_flagged(kind, p_gen);
    let support = p_data.support();
    let stat: Vec<f64> = grad.iter().zip(c.as_slice()).map(|(g, c)| g + c).collect();

    let on_support: Vec<f64> = (0..n).filter(|&i| support[i] && !diverged[i]).map(|i| stat[i]).collect();
    let lambda = if on_support.is_empty() {
        0.0
    } else {
        -on_support.iter().sum::<f64>() / on_support.len() as f64
    };

    let mut mu = vec![0.0; n];
    let mut stationarity: f64 = 0.0;
    let mut dual_ok = true;
    for i in 0..n {
        if diverged[i] {
            continue;
        }
        let raw = stat[i] + lambda;
        if support[i] {
            stationarity = stationarity.max(raw.abs());
        } else {
            if raw < -tol {
                dual_ok = false;
            }
            mu[i] = raw.max(0.0);
            stationarity = stationarity.max((raw - mu[i]).abs());
        }
    }

    let slackness = mu.iter().zip(p_gen.as_slice()).map(|(m, p)| (m * p).abs()).fold(0.0, f64::max);
    let gen = p_gen.as_slice();
    let primal = gen
        .iter()
        .zip(p_data.as_slice())
        .map(|(g, d)| (g - d).abs())
        .fold(0.0, f64::max)
        .max((gen.iter().sum::<f64>() - 1.0).abs())
        .max(gen.iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max));

    Ok(KktReport {
        stationarity_residual: stationarity,
        complementary_slackness_residual: slackness,
        primal_feasibility_residual: primal,
        dual_feasibility_ok: dual_ok,
        lambda,
        mu,
    })
}

/// Optimal EBGAN (margin loss) discriminator value at one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EbganDisc {
    /// `p_gen < p_data`: cost 0.
    Zero,
    /// `p_gen > p_data`: cost `m`.
    Margin,
    /// `p_gen == p_data`: any value in `[0, m]` (or `[0, inf)` off support).
    Undetermined,
}

pub fn ebgan_optimal_disc(p_gen: &Simplex, p_data: &Simplex, margin: f64) -> Result<Vec<EbganDisc>> {
    check_len(p_data.len(), p_gen.len())?;
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument("margin must be > 0".into()));
    }
    Ok(p_gen
        .as_slice()
        .iter()
        .zip(p_data.as_slice())
        .map(|(g, d)| match g.partial_cmp(d) {
            Some(core::cmp::Ordering::Less) => EbganDisc::Zero,
            Some(core::cmp::Ordering::Greater) => EbganDisc::Margin,
            _ => EbganDisc::Undetermined,
        })
        .collect())
}

/// Generator objective after substituting the optimal EBGAN discriminator:
/// `m * sum over {p_gen > p_data} of (p_gen - p_data)`.
pub fn ebgan_generator_loss(p_gen: &Simplex, p_data: &Simplex, margin: f64) -> Result<f64> {
    check_len(p_data.len(), p_gen.len())?;
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument("margin must be > 0".into()));
    }
    let excess: f64 = p_gen
        .as_slice()
        .iter()
        .zip(p_data.as_slice())
        .filter(|(g, d)| g > d)
        .map(|(g, d)| g - d)
        .sum();
    Ok(margin * excess)
}

/// Optimal f-GAN discriminator `f'(p_data / p_gen)`.
///
/// Points outside both supports are treated as matched (ratio 1).
pub fn fgan_optimal_disc<F: Fn(f64) -> f64>(f_prime: F, p_data: &Simplex, p_gen: &Simplex) -> Result<CostVector> {
    check_len(p_data.len(), p_gen.len())?;
    let mut out = Vec::with_capacity(p_data.len());
    for (i, (&d, &g)) in p_data.as_slice().iter().zip(p_gen.as_slice()).enumerate() {
        let ratio = if g > 0.0 {
            d / g
        } else if d > 0.0 {
            return Err(Error::DivisionByZeroSupport(i));
        } else {
            1.0
        };
        out.push(f_prime(ratio));
    }
    CostVector::new(out)
}

/// `f'(u)` for the KL generator `f(u) = u log u`.
pub fn kl_f_prime(u: f64) -> f64 {
    ln(u) + 1.0
}

/// Standard deviation over the data support of `c - c*` with `c*` the closed
/// form at `lambda = mu = 0`. A pure shift of the closed form scores 0.
///
/// `None` for a constant regularizer, where the form is under-determined.
pub fn form_deviation(kind: RegularizerKind, c: &CostVector, p_data: &Simplex) -> Result<Option<f64>> {
    check_len(p_data.len(), c.len())?;
    if let RegularizerKind::Constant(_) = kind {
        return Ok(None);
    }
    let diffs: Vec<f64> = p_data
        .as_slice()
        .iter()
        .zip(c.as_slice())
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, c)| match kind {
            RegularizerKind::NegEntropy => c + ln(*p) + 1.0,
            _ => c + p,
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / diffs.len() as f64;
    Ok(Some(crate::math::sqrt(var)))
}

/// Thresholds for [`certify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyTolerances {
    /// Bound on `max |p_gen - p_data|`.
    pub p_gen: f64,
    /// Bound on [`form_deviation`].
    pub form: f64,
    /// Bound on every KKT residual.
    pub kkt: f64,
}

impl Default for CertifyTolerances {
    fn default() -> Self {
        Self { p_gen: 1e-3, form: 1e-2, kkt: 1e-2 }
    }
}

/// Solver run plus every check that applies to its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub kind: RegularizerKind,
    pub p_data: Simplex,
    pub p_gen: Simplex,
    pub c: CostVector,
    pub solver_residual: f64,
    pub steps_taken: usize,
    pub p_gen_error: f64,
    pub p_gen_pass: bool,
    /// `None` when the discriminator form is under-determined.
    pub form_deviation: Option<f64>,
    pub form_pass: Option<bool>,
    pub kkt: KktReport,
    pub kkt_pass: bool,
    /// EBGAN generator loss at the solution, margin 1.
    pub ebgan_loss: f64,
    /// Spread of the KL f-GAN optimal discriminator at the solution.
    pub fgan_spread: f64,
    pub passed: bool,
}

/// Runs [`solve_minimax`] and certifies the result.
pub fn certify(kind: RegularizerKind, p_data: &Simplex, opts: &SolverOptions, tol: CertifyTolerances) -> Result<Certification> {
    let out = solve_minimax(kind, p_data, opts)?;
    let p_gen_error = out
        .p_gen
        .as_slice()
        .iter()
        .zip(p_data.as_slice())
        .map(|(g, d)| (g - d).abs())
        .fold(0.0, f64::max);
    let form = form_deviation(kind, &out.c, p_data)?;
    let kkt = verify_kkt(&out.p_gen, &out.c, kind, p_data, tol.kkt)?;
    let kkt_pass = kkt.passes(tol.kkt);
    let p_gen_pass = p_gen_error < tol.p_gen;
    let form_pass = form.map(|f| f < tol.form);
    let ebgan_loss = ebgan_generator_loss(&out.p_gen, p_data, 1.0)?;
    let fgan_spread = fgan_optimal_disc(kl_f_prime, p_data, &out.p_gen)?.spread();
    Ok(Certification {
        kind,
        p_data: p_data.clone(),
        p_gen: out.p_gen,
        c: out.c,
        solver_residual: out.residual,
        steps_taken: out.steps_taken,
        p_gen_error,
        p_gen_pass,
        form_deviation: form,
        form_pass,
        kkt,
        kkt_pass,
        ebgan_loss,
        fgan_spread,
        passed: p_gen_pass && kkt_pass && form_pass.unwrap_or(true),
    })
}
