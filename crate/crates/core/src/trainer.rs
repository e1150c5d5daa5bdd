//! Adversarial training loops for the 2D experiments.
//!
//! Four variants share one loop: the original GAN (non-saturating generator
//! loss), and the energy GAN with a constant regularizer, with the
//! nearest-neighbour entropy gradient, and with the variational entropy bound.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::data::{make_dataset, DatasetKind, Grid2D, GridSpec, Point};
use crate::entropy::{knn_entropy_gradients, vi_upper_bound, InferenceNet};
use crate::error::{Error, Result};
use crate::eval::{self, KlTable};
use crate::nn::{parse_architecture, AdamConfig, AdamState, Mlp, Mode, NodeId, ParamSet, Tape, Tensor};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gan,
    EganConst,
    EganEntNn,
    EganEntVi,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Gan, ModelKind::EganConst, ModelKind::EganEntNn, ModelKind::EganEntVi];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gan => "gan",
            ModelKind::EganConst => "egan-const",
            ModelKind::EganEntNn => "egan-ent-nn",
            ModelKind::EganEntVi => "egan-ent-vi",
        }
    }

    pub fn head(self) -> CriticHead {
        match self {
            ModelKind::Gan => CriticHead::Logit,
            _ => CriticHead::Energy,
        }
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dataset: DatasetKind,
    pub seed: u64,
    pub z_dim: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub iterations: usize,
    /// Size of the fixed training set minibatches are drawn from.
    pub train_samples: usize,
    pub adam: AdamConfig,
    /// Neighbour count for the nearest-neighbour entropy gradient.
    pub k: usize,
    pub alpha: f64,
    /// Weight of the variational bound in the generator loss.
    pub entropy_weight: f64,
    /// Iterations between loss snapshots.
    pub eval_every: usize,
    pub grid: GridSpec,
    /// Generated samples used for the KL table.
    pub eval_samples: usize,
    /// Generated samples stored in the report.
    pub report_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::EganEntNn,
            dataset: DatasetKind::Mog4,
            seed: 0,
            z_dim: 4,
            hidden: 128,
            batch_size: 128,
            iterations: 20_000,
            train_samples: 100_000,
            adam: AdamConfig::default(),
            k: 5,
            alpha: 1.0,
            entropy_weight: 1.0,
            eval_every: 500,
            grid: GridSpec::default(),
            eval_samples: 100_000,
            report_samples: 2_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("z_dim", self.z_dim),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("train_samples", self.train_samples),
            ("k", self.k),
            ("eval_every", self.eval_every),
            ("eval_samples", self.eval_samples),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch_size must be at least 2 for batch norm".into()));
        }
        if self.model == ModelKind::EganEntNn && self.k >= self.batch_size {
            return Err(Error::KTooLarge { k: self.k, batch: self.batch_size, needed: self.k + 1 });
        }
        for (name, v) in [("alpha", self.alpha), ("entropy_weight", self.entropy_weight)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        let a = self.adam;
        if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::InvalidArgument("invalid Adam settings".into()));
        }
        self.grid.validate()
    }
}

/// How the discriminator's scalar output maps to an energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticHead {
    /// The output is the energy `c(x)` itself.
    Energy,
    /// The output is a real-vs-fake logit; energy is its negation.
    Logit,
}

/// A discriminator network together with its energy convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
    pub head: CriticHead,
}

impl Critic {
    fn sign(&self) -> f64 {
        match self.head {
            CriticHead::Energy => 1.0,
            CriticHead::Logit => -1.0,
        }
    }

    /// Energy per row of `x`, as an `[n]` vector.
    pub fn energy(&self, params: &ParamSet, x: &Tensor) -> Result<Vec<f64>> {
        let out = self.net.infer_batched(params, x, 4096)?;
        let s = self.sign();
        Ok(out.data().iter().map(|v| s * v).collect())
    }

    /// `d energy / d x` for every row of `x`.
    pub fn energy_input_grad(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xn = tape.input(x.clone());
        let out = self.net.forward_frozen(&mut tape, params, xn, Mode::Eval)?;
        let total = tape.sum(out);
        let loss = tape.scale(total, self.sign());
        let mut scratch = ParamSet::new();
        let g = tape.backward(loss, &mut scratch)?;
        Ok(g.wrt(xn).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
    }
}

/// Networks, parameters and optimizer states of one run.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub model: ModelKind,
    pub params: ParamSet,
    pub generator: Mlp,
    pub critic: Critic,
    pub inference: Option<InferenceNet>,
    pub opt_gen: AdamState,
    pub opt_disc: AdamState,
    pub opt_inf: Option<AdamState>,
    pub z_dim: usize,
}

pub fn generator_arch(z_dim: usize, hidden: usize) -> String {
    format!("FC({z_dim},{hidden})-BN-ReLU-FC({hidden},{hidden})-BN-ReLU-FC({hidden},2)")
}

pub fn discriminator_arch(hidden: usize) -> String {
    format!("FC(2,{hidden})-ReLU-FC({hidden},{hidden})-ReLU-FC({hidden},1)")
}

impl ModelBundle {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let generator = Mlp::new(
            "gen",
            &parse_architecture(&generator_arch(cfg.z_dim, cfg.hidden))?,
            &mut params,
            &mut seed::rng(cfg.seed, Stream::GeneratorInit),
        )?;
        let disc = Mlp::new(
            "disc",
            &parse_architecture(&discriminator_arch(cfg.hidden))?,
            &mut params,
            &mut seed::rng(cfg.seed, Stream::DiscriminatorInit),
        )?;
        let inference = match cfg.model {
            ModelKind::EganEntVi => Some(InferenceNet::new(
                "inf",
                2,
                cfg.z_dim,
                cfg.hidden,
                &mut params,
                &mut seed::rng(cfg.seed, Stream::InferenceInit),
            )?),
            _ => None,
        };
        let opt_gen = AdamState::new(cfg.adam, &params, generator.param_ids());
        let opt_disc = AdamState::new(cfg.adam, &params, disc.param_ids());
        let opt_inf = inference.as_ref().map(|q| AdamState::new(cfg.adam, &params, q.net.param_ids()));
        Ok(Self {
            model: cfg.model,
            params,
            generator,
            critic: Critic { net: disc, head: cfg.model.head() },
            inference,
            opt_gen,
            opt_disc,
            opt_inf,
            z_dim: cfg.z_dim,
        })
    }

    /// Generator output for noise `z`. Batch norm uses the statistics of each
    /// chunk of up to 4096 rows, as during training, so pass large batches.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        self.generator.infer_chunked(&self.params, z, 4096, Mode::Train)
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Point>> {
        let x = self.generate(&noise(n, self.z_dim, rng))?;
        Ok(tensor_points(&x))
    }
}

/// Noise from the uniform prior on `[-1, 1]^z_dim`.
pub fn noise<R: rand::Rng + ?Sized>(n: usize, z_dim: usize, rng: &mut R) -> Tensor {
    let data = (0..n * z_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::matrix(n, z_dim, data).expect("shape")
}

pub fn points_tensor(points: &[Point]) -> Tensor {
    Tensor::from_rows(points)
}

pub fn tensor_points(t: &Tensor) -> Vec<Point> {
    (0..t.rows()).map(|r| [t.row(r)[0], t.row(r)[1]]).collect()
}

/// `mean(c_real) - mean(c_fake)`, minimized by the discriminator.
pub fn egan_disc_loss(tape: &mut Tape, c_real: NodeId, c_fake: NodeId) -> NodeId {
    let r = tape.mean(c_real);
    let f = tape.mean(c_fake);
    let neg = tape.scale(f, -1.0);
    tape.add(r, neg).expect("scalars")
}

/// The generator's entropy term for the energy GAN variants.
#[derive(Debug, Clone, Copy)]
pub enum EntropyTerm<'a> {
    None,
    /// Weighted variational bound node.
    Bound { u: NodeId, weight: f64 },
    /// Per-sample gradients injected at the generated-sample node.
    Injected { samples: NodeId, grads: &'a Tensor },
}

/// Generator objective: `mean(c_fake)` plus the entropy term the model needs.
/// Returns the loss node and any gradient seeds to pass to backward.
pub fn egan_gen_loss(
    tape: &mut Tape,
    model: ModelKind,
    c_fake: NodeId,
    entropy: EntropyTerm<'_>,
) -> Result<(NodeId, Vec<(NodeId, Tensor)>)> {
    let base = tape.mean(c_fake);
    match (model, entropy) {
        (ModelKind::EganConst, _) => Ok((base, Vec::new())),
        (ModelKind::EganEntVi, EntropyTerm::Bound { u, weight }) => {
            let w = tape.scale(u, weight);
            Ok((tape.add(base, w)?, Vec::new()))
        }
        (ModelKind::EganEntNn, EntropyTerm::Injected { samples, grads }) => {
            let batch = tape.value(samples).rows() as f64;
            // Same per-sample scale as the gradient of the batch mean.
            Ok((base, vec![(samples, grads.map(|g| g / batch))]))
        }
        (ModelKind::EganEntVi, _) => Err(Error::MissingEntropyTerm("egan-ent-vi")),
        (ModelKind::EganEntNn, _) => Err(Error::MissingEntropyTerm("egan-ent-nn")),
        (ModelKind::Gan, _) => Err(Error::InvalidArgument("the GAN baseline uses gan_losses".into())),
    }
}

/// Binary cross-entropy discriminator loss (real = 1, fake = 0, averaged over
/// the two halves) and the non-saturating generator loss.
pub fn gan_losses(tape: &mut Tape, d_real_logit: NodeId, d_fake_logit: NodeId) -> (NodeId, NodeId) {
    let neg_real = tape.scale(d_real_logit, -1.0);
    let sp_real = tape.softplus(neg_real);
    let l_real = tape.mean(sp_real);
    let sp_fake = tape.softplus(d_fake_logit);
    let l_fake = tape.mean(sp_fake);
    let both = tape.add(l_real, l_fake).expect("scalars");
    let disc = tape.scale(both, 0.5);
    let neg_fake = tape.scale(d_fake_logit, -1.0);
    let sp_gen = tape.softplus(neg_fake);
    let gen = tape.mean(sp_gen);
    (disc, gen)
}

/// Scalar losses from one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub disc_loss: f64,
    pub gen_loss: f64,
    /// Variational bound `U(q)` for the VI variant.
    pub entropy_bound: Option<f64>,
    /// Degenerate neighbour directions for the NN variant.
    pub degenerate: Option<usize>,
}

fn scalar(tape: &Tape, n: NodeId) -> f64 {
    tape.value(n).data()[0]
}

/// One discriminator update on `(data_batch, fresh fakes)`, then one generator
/// update (and inference-net update for VI) on fresh noise.
pub fn train_step<R: rand::Rng + ?Sized>(
    bundle: &mut ModelBundle,
    cfg: &TrainConfig,
    data_batch: &Tensor,
    rng: &mut R,
) -> Result<StepMetrics> {
    if bundle.model != cfg.model {
        return Err(Error::InvalidArgument("bundle was built for a different model".into()));
    }
    let n = data_batch.rows();
    let disc_loss = {
        let z = noise(n, cfg.z_dim, rng);
        let mut tape = Tape::new();
        let zn = tape.constant(z);
        // Fakes are constants here; batch statistics match the generator step.
        let fake = bundle.generator.forward_frozen(&mut tape, &bundle.params, zn, Mode::Train)?;
        let fake = tape.constant(tape.value(fake).clone());
        let real = tape.constant(data_batch.clone());
        let net = &bundle.critic.net;
        let out_real = net.forward(&mut tape, &mut bundle.params, real, Mode::Train)?;
        let out_fake = net.forward(&mut tape, &mut bundle.params, fake, Mode::Train)?;
        let loss = match bundle.model {
            ModelKind::Gan => gan_losses(&mut tape, out_real, out_fake).0,
            _ => egan_disc_loss(&mut tape, out_real, out_fake),
        };
        tape.backward(loss, &mut bundle.params)?;
        bundle.opt_disc.step(&mut bundle.params);
        scalar(&tape, loss)
    };

    let z = noise(n, cfg.z_dim, rng);
    let mut tape = Tape::new();
    let zn = tape.constant(z);
    let fake = bundle.generator.forward(&mut tape, &mut bundle.params, zn, Mode::Train)?;
    let out = bundle.critic.net.forward_frozen(&mut tape, &bundle.params, fake, Mode::Train)?;
    let mut metrics = StepMetrics { disc_loss, gen_loss: 0.0, entropy_bound: None, degenerate: None };
    let (loss, seeds) = match bundle.model {
        ModelKind::Gan => {
            // The real half does not affect the generator; reuse the fake logits.
            (gan_losses(&mut tape, out, out).1, Vec::new())
        }
        ModelKind::EganConst => egan_gen_loss(&mut tape, cfg.model, out, EntropyTerm::None)?,
        ModelKind::EganEntNn => {
            let g = knn_entropy_gradients(tape.value(fake), cfg.k, 1.0)?;
            metrics.degenerate = Some(g.degenerate_count());
            let grads = g.directions.map(|d| cfg.alpha * d);
            egan_gen_loss(&mut tape, cfg.model, out, EntropyTerm::Injected { samples: fake, grads: &grads })?
        }
        ModelKind::EganEntVi => {
            let q = bundle.inference.as_ref().ok_or(Error::MissingEntropyTerm("egan-ent-vi"))?;
            let u = vi_upper_bound(q, &mut tape, &mut bundle.params, fake, zn)?;
            metrics.entropy_bound = Some(scalar(&tape, u));
            egan_gen_loss(&mut tape, cfg.model, out, EntropyTerm::Bound { u, weight: cfg.entropy_weight })?
        }
    };
    tape.backward_seeded(Some(loss), &seeds, &mut bundle.params)?;
    bundle.opt_gen.step(&mut bundle.params);
    if let Some(opt) = bundle.opt_inf.as_mut() {
        opt.step(&mut bundle.params);
    }
    metrics.gen_loss = scalar(&tape, loss);
    Ok(metrics)
}

/// Loss averages over one snapshot window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub iteration: usize,
    pub disc_loss: f64,
    pub gen_loss: f64,
    pub entropy_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub iterations_completed: usize,
    pub losses: Vec<LossPoint>,
    pub energy_grid: Grid2D,
    pub samples: Vec<Point>,
    pub kl: KlTable,
    /// Generated samples that fell outside the grid and were clamped.
    pub gen_out_of_bounds: usize,
    /// Energies at the mixture component means, in component order.
    pub mode_energies: Vec<f64>,
}

/// A finished run: the report and the trained networks.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: RunReport,
    pub bundle: ModelBundle,
}

/// The fixed training set for a config.
pub fn training_set(cfg: &TrainConfig) -> Tensor {
    let m = make_dataset(cfg.dataset);
    points_tensor(&m.sample_with(cfg.train_samples, &mut seed::rng(cfg.seed, Stream::TrainingSet)))
}

fn check_finite(iteration: usize, m: &StepMetrics, params: &ParamSet) -> Result<()> {
    let what = if !m.disc_loss.is_finite() {
        "discriminator loss"
    } else if !m.gen_loss.is_finite() {
        "generator loss"
    } else if m.entropy_bound.is_some_and(|u| !u.is_finite()) {
        "entropy bound"
    } else if !params.all_finite() {
        "parameters"
    } else {
        return Ok(());
    };
    Err(Error::NonFinite { iteration, what: what.into() })
}

pub fn train(cfg: &TrainConfig) -> Result<RunReport> {
    Ok(train_full(cfg, |_, _| {})?.report)
}

/// Full training loop. `progress` is called after every snapshot.
pub fn train_full(cfg: &TrainConfig, mut progress: impl FnMut(usize, &LossPoint)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut bundle = ModelBundle::new(cfg)?;
    let data = training_set(cfg);
    let mut batch_rng = seed::rng(cfg.seed, Stream::Minibatch);
    let mut noise_rng = seed::rng(cfg.seed, Stream::Noise);
    let mut losses = Vec::new();
    let (mut sum_d, mut sum_g, mut sum_u, mut count) = (0.0, 0.0, 0.0, 0usize);
    let mut batch = vec![0.0; cfg.batch_size * 2];
    for it in 0..cfg.iterations {
        for r in 0..cfg.batch_size {
            let idx = batch_rng.random_range(0..data.rows());
            batch[2 * r..2 * r + 2].copy_from_slice(data.row(idx));
        }
        let batch_t = Tensor::matrix(cfg.batch_size, 2, batch.clone())?;
        let m = train_step(&mut bundle, cfg, &batch_t, &mut noise_rng)?;
        check_finite(it + 1, &m, &bundle.params)?;
        sum_d += m.disc_loss;
        sum_g += m.gen_loss;
        sum_u += m.entropy_bound.unwrap_or(0.0);
        count += 1;
        if (it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations {
            let c = count as f64;
            let point = LossPoint {
                iteration: it + 1,
                disc_loss: sum_d / c,
                gen_loss: sum_g / c,
                entropy_bound: m.entropy_bound.map(|_| sum_u / c),
            };
            progress(it + 1, &point);
            losses.push(point);
            (sum_d, sum_g, sum_u, count) = (0.0, 0.0, 0.0, 0);
        }
    }
    let report = build_report(cfg, &bundle, &data, losses)?;
    Ok(TrainOutcome { report, bundle })
}

/// Evaluation snapshot of a bundle against its dataset.
pub fn build_report(cfg: &TrainConfig, bundle: &ModelBundle, data: &Tensor, losses: Vec<LossPoint>) -> Result<RunReport> {
    let m = make_dataset(cfg.dataset);
    let energy_grid = eval::energy_grid(&bundle.critic, &bundle.params, cfg.grid)?;
    let generated = bundle.sample(cfg.eval_samples, &mut seed::rng(cfg.seed, Stream::ReportNoise))?;
    let gen_hist = eval::histogram_estimate(&generated, cfg.grid)?;
    let emp_hist = eval::histogram_estimate(&tensor_points(data), cfg.grid)?;
    let kl = eval::kl_table(
        &eval::discretize_density(&m, cfg.grid)?,
        &emp_hist,
        &gen_hist,
        &eval::disc_distribution(&energy_grid)?,
    )?;
    let mode_energies = bundle.critic.energy(&bundle.params, &points_tensor(m.means()))?;
    Ok(RunReport {
        config: cfg.clone(),
        iterations_completed: bundle.opt_gen.step_count() as usize,
        losses,
        energy_grid,
        samples: generated.into_iter().take(cfg.report_samples).collect(),
        kl,
        gen_out_of_bounds: gen_hist.out_of_bounds,
        mode_energies,
    })
}

/// Result of the held-out evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub grid: GridSpec,
    pub samples: usize,
    pub kl: KlTable,
    pub gen_out_of_bounds: usize,
    pub data_out_of_bounds: usize,
}

/// KL table from `n` fresh generator samples and `n` fresh data samples, both
/// drawn from streams of `seed` that training never touches.
pub fn evaluate(bundle: &ModelBundle, dataset: DatasetKind, seed: u64, grid: GridSpec, n: usize) -> Result<Evaluation> {
    let m = make_dataset(dataset);
    let generated = bundle.sample(n, &mut seed::rng(seed, Stream::EvalNoise))?;
    let data = m.sample_with(n, &mut seed::rng(seed, Stream::EvalData));
    let gen_hist = eval::histogram_estimate(&generated, grid)?;
    let emp_hist = eval::histogram_estimate(&data, grid)?;
    let energy = eval::energy_grid(&bundle.critic, &bundle.params, grid)?;
    let kl = eval::kl_table(
        &eval::discretize_density(&m, grid)?,
        &emp_hist,
        &gen_hist,
        &eval::disc_distribution(&energy)?,
    )?;
    Ok(Evaluation {
        grid,
        samples: n,
        kl,
        gen_out_of_bounds: gen_hist.out_of_bounds,
        data_out_of_bounds: emp_hist.out_of_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(model: ModelKind) -> TrainConfig {
        TrainConfig {
            model,
            hidden: 16,
            batch_size: 16,
            iterations: 5,
            train_samples: 500,
            eval_every: 2,
            grid: GridSpec { nx: 20, ny: 20, ..GridSpec::default() },
            eval_samples: 1_000,
            report_samples: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("wgan".parse::<ModelKind>().is_err());
    }

    #[test]
    fn egan_disc_loss_examples() {
        let mut tape = Tape::new();
        let r = tape.input(Tensor::full(&[4, 1], 1.0));
        let f = tape.input(Tensor::full(&[4, 1], 3.0));
        let l = egan_disc_loss(&mut tape, r, f);
        assert_eq!(scalar(&tape, l), -2.0);
        let g = tape.backward(l, &mut ParamSet::new()).unwrap();
        assert!(g.wrt(f).unwrap().data().iter().all(|v| *v == -0.25));
        let same = egan_disc_loss(&mut tape, r, r);
        assert_eq!(scalar(&tape, same), 0.0);
    }

    #[test]
    fn gan_loss_examples() {
        let mut tape = Tape::new();
        let zero = tape.input(Tensor::zeros(&[3, 1]));
        let (d, g) = gan_losses(&mut tape, zero, zero);
        assert!((scalar(&tape, d) - 2f64.ln()).abs() < 1e-12);
        assert!((scalar(&tape, g) - 2f64.ln()).abs() < 1e-12);
        let hi = tape.input(Tensor::full(&[3, 1], 40.0));
        let lo = tape.input(Tensor::full(&[3, 1], -40.0));
        let (d, _) = gan_losses(&mut tape, hi, lo);
        assert!(scalar(&tape, d) < 1e-15);
        let (_, g_hi) = gan_losses(&mut tape, zero, hi);
        assert!(scalar(&tape, g_hi) < 2f64.ln());
    }

    #[test]
    fn gen_loss_variants() {
        let mut tape = Tape::new();
        let c = tape.input(Tensor::full(&[4, 1], 2.0));
        let (l, seeds) = egan_gen_loss(&mut tape, ModelKind::EganConst, c, EntropyTerm::None).unwrap();
        assert_eq!(scalar(&tape, l), 2.0);
        assert!(seeds.is_empty());
        let u = tape.input(Tensor::scalar(5.0));
        let (l, _) = egan_gen_loss(&mut tape, ModelKind::EganEntVi, c, EntropyTerm::Bound { u, weight: 0.0 }).unwrap();
        assert_eq!(scalar(&tape, l), 2.0);
        assert_eq!(
            egan_gen_loss(&mut tape, ModelKind::EganEntVi, c, EntropyTerm::None).unwrap_err(),
            Error::MissingEntropyTerm("egan-ent-vi")
        );
        assert!(egan_gen_loss(&mut tape, ModelKind::EganEntNn, c, EntropyTerm::None).is_err());
    }

    #[test]
    fn bundle_shape() {
        for model in ModelKind::ALL {
            let b = ModelBundle::new(&small(model)).unwrap();
            assert_eq!(b.inference.is_some(), model == ModelKind::EganEntVi);
            assert_eq!(b.opt_inf.is_some(), model == ModelKind::EganEntVi);
            assert_eq!(b.critic.head, model.head());
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(ModelKind::EganEntNn);
        cfg.k = 16;
        assert!(matches!(cfg.validate(), Err(Error::KTooLarge { .. })));
        let mut cfg = small(ModelKind::Gan);
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = small(ModelKind::Gan);
        cfg.entropy_weight = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn steps_are_deterministic() {
        for model in ModelKind::ALL {
            let cfg = small(model);
            let data = training_set(&cfg);
            let batch = points_tensor(&tensor_points(&data)[..16]);
            let run = || {
                let mut b = ModelBundle::new(&cfg).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(1);
                let m: Vec<StepMetrics> = (0..3).map(|_| train_step(&mut b, &cfg, &batch, &mut rng).unwrap()).collect();
                (m, b.params)
            };
            let (m1, p1) = run();
            let (m2, p2) = run();
            assert_eq!(m1, m2);
            assert!(p1.iter().zip(p2.iter()).all(|(a, b)| a == b));
            assert!(m1.iter().all(|m| m.disc_loss.is_finite() && m.gen_loss.is_finite()));
        }
    }

    #[test]
    fn zero_iterations_reports_initial_state() {
        let mut cfg = small(ModelKind::EganConst);
        cfg.iterations = 0;
        let r = train(&cfg).unwrap();
        assert_eq!(r.iterations_completed, 0);
        assert!(r.losses.is_empty());
        assert_eq!(r.energy_grid.values.len(), 400);
        assert_eq!(r.samples.len(), 10);
        assert_eq!(r.mode_energies.len(), 4);
    }

    #[test]
    fn short_run_snapshots() {
        let r = train(&small(ModelKind::EganEntVi)).unwrap();
        assert_eq!(r.iterations_completed, 5);
        let its: Vec<usize> = r.losses.iter().map(|l| l.iteration).collect();
        assert_eq!(its, vec![2, 4, 5]);
        assert!(r.losses.iter().all(|l| l.entropy_bound.is_some()));
    }
}
