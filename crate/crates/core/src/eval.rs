//! Histogram evaluation on a 2D canvas.
//!
//! Every distribution (analytic data, empirical data, generator samples and the
//! discriminator's renormalized energy) is turned into cell masses on one
//! [`GridSpec`], and the masses are compared with smoothed KL divergences.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{log_sum_exp, GaussianMixture, Grid2D, GridSpec, Point};
use crate::entropy::{knn_entropy_gradients, vi_upper_bound};
use crate::error::{Error, Result};
use crate::math::{exp, ln};
use crate::nn::{ParamSet, Tape, Tensor};
use crate::trainer::{points_tensor, Critic, ModelBundle, ModelKind};

/// Additive smoothing used by [`kl_table`].
pub const KL_EPS: f64 = 1e-10;

/// Cell masses over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub spec: GridSpec,
    pub masses: Vec<f64>,
    /// Samples that fell outside the canvas and were clamped to an edge cell.
    pub out_of_bounds: usize,
}

impl HistogramGrid {
    pub fn new(spec: GridSpec, masses: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if masses.len() != spec.len() {
            return Err(Error::DimensionMismatch { expected: spec.len(), got: masses.len() });
        }
        crate::tabular::Simplex::new(masses.clone())?;
        Ok(Self { spec, masses, out_of_bounds: 0 })
    }

    pub fn total_variation(&self, other: &HistogramGrid) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch);
        }
        Ok(0.5 * self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }
}

/// Nearest-cell-centre counts, normalized.
pub fn histogram_estimate(samples: &[Point], spec: GridSpec) -> Result<HistogramGrid> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut counts = vec![0usize; spec.len()];
    let mut out_of_bounds = 0;
    for p in samples {
        let (cell, clamped) = spec.nearest_cell(*p);
        counts[cell] += 1;
        out_of_bounds += usize::from(clamped);
    }
    let n = samples.len() as f64;
    Ok(HistogramGrid { spec, masses: counts.into_iter().map(|c| c as f64 / n).collect(), out_of_bounds })
}

/// Softmax over cells of the given log-weights.
fn normalize_log(spec: GridSpec, logw: &[f64]) -> HistogramGrid {
    let lse = log_sum_exp(logw);
    HistogramGrid { spec, masses: logw.iter().map(|l| exp(l - lse)).collect(), out_of_bounds: 0 }
}

/// Cell masses proportional to the mixture density at the cell centres.
pub fn discretize_density(m: &GaussianMixture, spec: GridSpec) -> Result<HistogramGrid> {
    spec.validate()?;
    let logd: Vec<f64> = spec.centers().into_iter().map(|p| m.log_density(p)).collect();
    Ok(normalize_log(spec, &logd))
}

/// `p_disc(cell) = exp(-c(cell)) / sum exp(-c)`.
pub fn disc_distribution(energy: &Grid2D) -> Result<HistogramGrid> {
    if let Some(i) = energy.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCost(i));
    }
    let neg: Vec<f64> = energy.values.iter().map(|v| -v).collect();
    Ok(normalize_log(energy.spec, &neg))
}

/// `KL(p~ || q~)` in nats with `p~ = (p + eps) / (1 + n eps)`.
pub fn kl_divergence(p: &HistogramGrid, q: &HistogramGrid, eps: f64) -> Result<f64> {
    if p.spec != q.spec || p.masses.len() != q.masses.len() {
        return Err(Error::GridMismatch);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("smoothing epsilon must be positive".into()));
    }
    let z = 1.0 + p.masses.len() as f64 * eps;
    let mut kl = 0.0;
    for (a, b) in p.masses.iter().zip(&q.masses) {
        let (a, b) = ((a + eps) / z, (b + eps) / z);
        kl += a * (ln(a) - ln(b));
    }
    // Rounding can leave a tiny negative value for identical inputs.
    Ok(kl.max(0.0))
}

/// The pairwise divergences among data, empirical, generator and
/// discriminator distributions. `a_b` is `KL(p_a || p_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlTable {
    pub gen_emp: f64,
    pub emp_gen: f64,
    pub gen_data: f64,
    pub data_gen: f64,
    pub disc_emp: f64,
    pub emp_disc: f64,
    pub disc_data: f64,
    pub data_disc: f64,
    pub gen_disc: f64,
    pub disc_gen: f64,
    pub data_emp: f64,
    pub emp_data: f64,
}

impl KlTable {
    /// Column labels and values, model comparisons first and references last.
    pub fn entries(&self) -> [(&'static str, f64); 12] {
        [
            ("p_gen||p_emp", self.gen_emp),
            ("p_emp||p_gen", self.emp_gen),
            ("p_gen||p_data", self.gen_data),
            ("p_data||p_gen", self.data_gen),
            ("p_disc||p_emp", self.disc_emp),
            ("p_emp||p_disc", self.emp_disc),
            ("p_disc||p_data", self.disc_data),
            ("p_data||p_disc", self.data_disc),
            ("p_gen||p_disc", self.gen_disc),
            ("p_disc||p_gen", self.disc_gen),
            ("p_data||p_emp", self.data_emp),
            ("p_emp||p_data", self.emp_data),
        ]
    }
}

pub fn kl_table(data: &HistogramGrid, emp: &HistogramGrid, gen: &HistogramGrid, disc: &HistogramGrid) -> Result<KlTable> {
    let kl = |p: &HistogramGrid, q: &HistogramGrid| kl_divergence(p, q, KL_EPS);
    Ok(KlTable {
        gen_emp: kl(gen, emp)?,
        emp_gen: kl(emp, gen)?,
        gen_data: kl(gen, data)?,
        data_gen: kl(data, gen)?,
        disc_emp: kl(disc, emp)?,
        emp_disc: kl(emp, disc)?,
        disc_data: kl(disc, data)?,
        data_disc: kl(data, disc)?,
        gen_disc: kl(gen, disc)?,
        disc_gen: kl(disc, gen)?,
        data_emp: kl(data, emp)?,
        emp_data: kl(emp, data)?,
    })
}

/// Energy at every cell centre.
pub fn energy_grid(critic: &Critic, params: &ParamSet, spec: GridSpec) -> Result<Grid2D> {
    spec.validate()?;
    let values = critic.energy(params, &points_tensor(&spec.centers()))?;
    Grid2D::new(spec, values)
}

/// Per-sample gradient diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradFieldRecord {
    pub x: f64,
    pub y: f64,
    /// Gradient of the energy with respect to the sample.
    pub disc_dx: f64,
    pub disc_dy: f64,
    /// Gradient of the entropy term with respect to the sample.
    pub ent_dx: f64,
    pub ent_dy: f64,
    pub sum_dx: f64,
    pub sum_dy: f64,
}

/// Settings the entropy column depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropySettings {
    pub k: usize,
    pub alpha: f64,
    pub weight: f64,
}

/// Discriminator and entropy gradients at generated samples `x = g(z)`.
///
/// The entropy column is `alpha * d_i` for the nearest-neighbour model, and
/// `batch * d(weight * U) / dx_i` for the variational model (so both are per
/// sample, on the scale of the energy gradient). Other models get zeros.
pub fn gradient_field_report(bundle: &ModelBundle, z: &Tensor, settings: EntropySettings) -> Result<Vec<GradFieldRecord>> {
    let x = bundle.generate(z)?;
    let n = x.rows();
    let disc = bundle.critic.energy_input_grad(&bundle.params, &x)?;
    let ent = match bundle.model {
        ModelKind::EganEntNn => knn_entropy_gradients(&x, settings.k, 1.0)?.directions.map(|d| settings.alpha * d),
        ModelKind::EganEntVi => {
            let q = bundle.inference.as_ref().ok_or(Error::MissingEntropyTerm("egan-ent-vi"))?;
            // Work on a copy so the report leaves parameters and statistics alone.
            let mut params = bundle.params.clone();
            let mut tape = Tape::new();
            let xn = tape.input(x.clone());
            let zn = tape.constant(z.clone());
            let u = vi_upper_bound(q, &mut tape, &mut params, xn, zn)?;
            let scaled = tape.scale(u, settings.weight * n as f64);
            let g = tape.backward(scaled, &mut params)?;
            g.wrt(xn).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()))
        }
        ModelKind::Gan | ModelKind::EganConst => Tensor::zeros(x.shape()),
    };
    Ok((0..n)
        .map(|i| {
            let (p, d, e) = (x.row(i), disc.row(i), ent.row(i));
            GradFieldRecord {
                x: p[0],
                y: p[1],
                disc_dx: d[0],
                disc_dy: d[1],
                ent_dx: e[0],
                ent_dy: e[1],
                sum_dx: d[0] + e[0],
                sum_dy: d[1] + e[1],
            }
        })
        .collect())
}

/// Mean cosine similarity between the discriminator and entropy columns,
/// skipping rows where either vector is zero.
pub fn mean_cosine(records: &[GradFieldRecord]) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in records {
        let (a, b) = ([r.disc_dx, r.disc_dy], [r.ent_dx, r.ent_dy]);
        let na = crate::math::sqrt(a[0] * a[0] + a[1] * a[1]);
        let nb = crate::math::sqrt(b[0] * b[0] + b[1] * b[1]);
        if na > 0.0 && nb > 0.0 {
            total += (a[0] * b[0] + a[1] * b[1]) / (na * nb);
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_dataset, DatasetKind};

    fn tiny() -> GridSpec {
        GridSpec::new(0.0, 2.0, 0.0, 2.0, 2, 2).unwrap()
    }

    #[test]
    fn histogram_examples() {
        let g = tiny();
        let h = histogram_estimate(&[[0.5, 0.5]], g).unwrap();
        assert_eq!(h.masses, vec![1.0, 0.0, 0.0, 0.0]);
        let h = histogram_estimate(&g.centers(), g).unwrap();
        assert_eq!(h.masses, vec![0.25; 4]);
        assert_eq!(histogram_estimate(&[], g).unwrap_err(), Error::EmptySampleSet);
        let h = histogram_estimate(&[[9.0, 9.0], [1.5, 0.5]], g).unwrap();
        assert_eq!(h.out_of_bounds, 1);
        assert_eq!(h.masses, vec![0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn discretize_examples() {
        let spec = GridSpec::default();
        let tight = GaussianMixture::new(vec![1.0], vec![spec.center(30, 70)], vec![0.01]).unwrap();
        let h = discretize_density(&tight, spec).unwrap();
        assert!(h.masses[spec.index(30, 70)] > 1.0 - 1e-12);
        let wide = GaussianMixture::new(vec![1.0], vec![[0.0, 0.0]], vec![1e4]).unwrap();
        let h = discretize_density(&wide, spec).unwrap();
        assert!(h.masses.iter().all(|m| (m - 1e-4).abs() < 1e-9));
    }

    #[test]
    fn disc_distribution_examples() {
        let spec = tiny();
        let flat = Grid2D::new(spec, vec![3.0; 4]).unwrap();
        assert_eq!(disc_distribution(&flat).unwrap().masses, vec![0.25; 4]);
        let p = [0.1, 0.2, 0.3, 0.4];
        let e = Grid2D::new(spec, p.iter().map(|v: &f64| -v.ln()).collect()).unwrap();
        for (a, b) in disc_distribution(&e).unwrap().masses.iter().zip(p) {
            assert!((a - b).abs() < 1e-15);
        }
        let bad = Grid2D::new(spec, vec![0.0, f64::NAN, 0.0, 0.0]).unwrap();
        assert!(disc_distribution(&bad).is_err());
    }

    #[test]
    fn kl_examples() {
        let spec = GridSpec::new(0.0, 2.0, 0.0, 1.0, 2, 1).unwrap();
        let p = HistogramGrid::new(spec, vec![1.0, 0.0]).unwrap();
        let q = HistogramGrid::new(spec, vec![0.5, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &p, KL_EPS).unwrap(), 0.0);
        assert!((kl_divergence(&p, &q, 1e-15).unwrap() - 2f64.ln()).abs() < 1e-12);
        let other = HistogramGrid::new(tiny(), vec![0.25; 4]).unwrap();
        assert_eq!(kl_divergence(&p, &other, KL_EPS).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn kl_table_examples() {
        let m = make_dataset(DatasetKind::Mog4);
        let spec = GridSpec { nx: 40, ny: 40, ..GridSpec::default() };
        let d = discretize_density(&m, spec).unwrap();
        let t = kl_table(&d, &d, &d, &d).unwrap();
        assert!(t.entries().iter().all(|(_, v)| *v == 0.0));

        let flat = disc_distribution(&Grid2D::new(spec, vec![0.0; spec.len()]).unwrap()).unwrap();
        let t = kl_table(&d, &d, &d, &flat).unwrap();
        let h: f64 = -d.masses.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        // Smoothing of the ~1e-10 tail cells moves the value by a few 1e-6.
        assert!((t.data_disc - ((spec.len() as f64).ln() - h)).abs() < 1e-5);
    }
}
