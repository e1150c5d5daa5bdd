//! Analytic 2D data distributions and evaluation grids.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cos, exp, ln, sin};

pub type Point = [f64; 2];

/// The three synthetic datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mog4,
    TwoSpirals,
    BiasedMog2,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [DatasetKind::Mog4, DatasetKind::TwoSpirals, DatasetKind::BiasedMog2];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mog4 => "mog4",
            DatasetKind::TwoSpirals => "two-spirals",
            DatasetKind::BiasedMog2 => "biased-mog2",
        }
    }
}

impl core::str::FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset '{s}'")))
    }
}

/// Isotropic 2D Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Point>,
    stds: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Point>, stds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != stds.len() {
            return Err(Error::InvalidArgument(format!(
                "mixture lists differ in length: {} weights, {} means, {} stds",
                weights.len(),
                means.len(),
                stds.len()
            )));
        }
        crate::tabular::Simplex::new(weights.clone())?;
        if stds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("component stds must be positive".into()));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("component means must be finite".into()));
        }
        Ok(Self { weights, means, stds })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Point] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Ancestral sampling, returning the component of each draw as well.
    pub fn sample_labelled<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<Point>, Vec<usize>) {
        let index = WeightedIndex::new(&self.weights).expect("weights validated at construction");
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.sample(&index);
            let (ex, ey): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let [mx, my] = self.means[c];
            points.push([mx + self.stds[c] * ex, my + self.stds[c] * ey]);
            labels.push(c);
        }
        (points, labels)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        self.sample_labelled(n, rng).0
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Point> {
        self.sample_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// `log sum_i w_i N(x; mu_i, s_i^2 I)`.
    pub fn log_density(&self, x: Point) -> f64 {
        let mut terms: Vec<f64> = Vec::with_capacity(self.len());
        for ((w, m), s) in self.weights.iter().zip(&self.means).zip(&self.stds) {
            if *w == 0.0 {
                continue;
            }
            let d2 = (x[0] - m[0]) * (x[0] - m[0]) + (x[1] - m[1]) * (x[1] - m[1]);
            terms.push(ln(*w) - ln(2.0 * PI * s * s) - d2 / (2.0 * s * s));
        }
        log_sum_exp(&terms)
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + ln(terms.iter().map(|t| exp(t - max)).sum::<f64>())
}

pub const MOG4_STD: f64 = 0.5;
pub const BIASED_MOG2_STD: f64 = 0.5;
pub const SPIRAL_STD: f64 = 0.1;
pub const SPIRAL_CENTERS: usize = 100;

pub fn make_dataset(kind: DatasetKind) -> GaussianMixture {
    let (weights, means, stds) = match kind {
        DatasetKind::Mog4 => {
            let means = alloc::vec![[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]];
            (alloc::vec![0.25; 4], means, alloc::vec![MOG4_STD; 4])
        }
        DatasetKind::BiasedMog2 => (
            alloc::vec![0.9, 0.1],
            alloc::vec![[-2.0, 0.0], [2.0, 0.0]],
            alloc::vec![BIASED_MOG2_STD; 2],
        ),
        DatasetKind::TwoSpirals => {
            let mut means = Vec::with_capacity(2 * SPIRAL_CENTERS);
            for arm in 0..2 {
                let sign = if arm == 0 { 1.0 } else { -1.0 };
                for j in 0..SPIRAL_CENTERS {
                    let t = j as f64 / (SPIRAL_CENTERS - 1) as f64;
                    let (r, theta) = (0.5 + 2.0 * t, 3.0 * PI * t);
                    means.push([sign * r * cos(theta), sign * r * sin(theta)]);
                }
            }
            let n = means.len();
            (alloc::vec![1.0 / n as f64; n], means, alloc::vec![SPIRAL_STD; n])
        }
    };
    GaussianMixture::new(weights, means, stds).expect("built-in datasets are valid")
}

/// Axis-aligned canvas split into `nx * ny` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_min: -5.0, x_max: 5.0, y_min: -5.0, y_max: 5.0, nx: 100, ny: 100 }
    }
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let spec = Self { x_min, x_max, y_min, y_max, nx, ny };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument("grid needs at least one cell per axis".into()));
        }
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite());
        if !finite || !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(Error::InvalidArgument("grid bounds must be finite and ordered".into()));
        }
        Ok(())
    }

    /// Square grid of `n * n` cells centred on `center` with the given cell width.
    pub fn centered(center: Point, cell: f64, n: usize) -> Result<Self> {
        let half = cell * n as f64 / 2.0;
        Self::new(center[0] - half, center[0] + half, center[1] - half, center[1] + half, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    /// Flat index of cell `(ix, iy)`. Rows run along x, row 0 is `y_min`.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn center(&self, ix: usize, iy: usize) -> Point {
        [self.x_min + (ix as f64 + 0.5) * self.dx(), self.y_min + (iy as f64 + 0.5) * self.dy()]
    }

    pub fn centers(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.len());
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push(self.center(ix, iy));
            }
        }
        out
    }

    /// Nearest cell centre to `p`; the flag is set when `p` lies outside the
    /// canvas and was clamped to an edge cell.
    pub fn nearest_cell(&self, p: Point) -> (usize, bool) {
        let clamp = |v: f64, lo: f64, d: f64, n: usize| -> (usize, bool) {
            let f = (v - lo) / d;
            if !(f >= 0.0) {
                (0, true)
            } else if f >= n as f64 {
                (n - 1, f > n as f64)
            } else {
                (f as usize, false)
            }
        };
        let (ix, ox) = clamp(p[0], self.x_min, self.dx(), self.nx);
        let (iy, oy) = clamp(p[1], self.y_min, self.dy(), self.ny);
        (self.index(ix, iy), ox || oy)
    }
}

/// Scalar field sampled at cell centres, stored row-major by [`GridSpec::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl Grid2D {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::DimensionMismatch { expected: spec.len(), got: values.len() });
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(Point) -> f64) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, values: spec.centers().into_iter().map(f).collect() })
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.spec.index(ix, iy)]
    }

    /// Value of the cell containing `p`.
    pub fn lookup(&self, p: Point) -> f64 {
        self.values[self.spec.nearest_cell(p).0]
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }
}

/// Negative log-density at every cell centre.
pub fn true_energy_grid(m: &GaussianMixture, spec: GridSpec) -> Result<Grid2D> {
    Grid2D::from_fn(spec, |p| -m.log_density(p))
}
