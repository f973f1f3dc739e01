//! Discrete probability measures and the seeded samplers used by the
//! simulation settings.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finitely supported probability measure on R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from support points (one per row) and nonnegative
    /// weights, renormalizing the weights to total mass one.
    pub fn new(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        if weights.len() != n {
            return Err(Error::LengthMismatch { left: n, right: weights.len() });
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
            return Err(Error::NegativeWeight { index, value });
        }
        for ((row, col), v) in points.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonfiniteCoordinate { row, col });
            }
        }
        let total: f64 = weights.sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroMass(total));
        }
        let weights = weights.mapv(|w| w / total);
        Ok(Self { points, weights })
    }

    /// Empirical measure: every row gets mass 1/n.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::new(points, Array1::from_elem(n, 1.0))
    }

    /// Point mass at `x`.
    pub fn dirac(x: &[f64]) -> Self {
        let points = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        Self { points, weights: Array1::ones(1) }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// Weighted mean of the support.
    pub fn mean(&self) -> Array1<f64> {
        let mut mean = Array1::zeros(self.dim());
        for (row, &w) in self.points.rows().into_iter().zip(self.weights.iter()) {
            mean.scaled_add(w, &row);
        }
        mean
    }

    /// Drops atoms of zero mass. Returns `self` unchanged when all weights are positive.
    pub fn without_null_atoms(&self) -> Self {
        if self.weights.iter().all(|&w| w > 0.0) {
            return self.clone();
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        Self {
            points: self.points.select(Axis(0), &keep),
            weights: self.weights.select(Axis(0), &keep),
        }
    }

    /// Same weights, points replaced by `f` applied row-wise.
    pub fn map_points<F>(&self, out_dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(ArrayView1<'_, f64>) -> Array1<f64>,
    {
        let mut points = Array2::zeros((self.len(), out_dim));
        for (i, row) in self.points.rows().into_iter().enumerate() {
            let image = f(row);
            if image.len() != out_dim {
                return Err(Error::DimensionMismatch { expected: out_dim, got: image.len() });
            }
            points.row_mut(i).assign(&image);
        }
        Self::new(points, self.weights.clone())
    }
}

/// Shifts the support so that the weighted mean is the origin.
///
/// A mean already at roundoff level (relative to the coordinate magnitude)
/// is treated as zero, which makes centering exactly idempotent.
pub fn center(m: &DiscreteMeasure) -> DiscreteMeasure {
    let mean = m.mean();
    let magnitude = m.points.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let roundoff = (m.len() as f64).max(64.0) * f64::EPSILON * magnitude;
    if mean.iter().all(|v| v.abs() <= roundoff) {
        return m.clone();
    }
    let points = &m.points - &mean.insert_axis(Axis(0));
    DiscreteMeasure { points, weights: m.weights.clone() }
}

// SplitMix64 finalizer constants (Steele, Lea & Flood 2014).
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const MIX_MUL_1: u64 = 0xbf58_476d_1ce4_e5b9;
const MIX_MUL_2: u64 = 0x94d0_49bb_1331_11eb;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
    z ^ (z >> 31)
}

/// Master seed for a family of reproducible random streams.
///
/// Streams are SplitMix64 generators. A derived stream for the labels
/// `(k1, k2, ...)` starts from `mix(... mix(mix(master) ^ mix(k1 + γ)) ^ mix(k2 + γ) ...)`
/// where `mix` is the SplitMix64 finalizer and `γ` the golden-ratio increment,
/// so identical labels always reproduce the same draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn derive(self, labels: &[u64]) -> Seed {
        let state = labels
            .iter()
            .fold(mix64(self.0), |acc, &k| mix64(acc ^ mix64(k.wrapping_add(GOLDEN_GAMMA))));
        Seed(state)
    }

    pub fn rng(self) -> SplitMix64 {
        SplitMix64::seed_from_u64(self.0)
    }
}

/// Normal distribution with the given mean and standard deviation,
/// conditioned on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormal {
    /// N(1, 0.4²) restricted to [0, 1].
    pub const SURFACE: TruncatedNormal = TruncatedNormal { mean: 1.0, sd: 0.4, lower: 0.0, upper: 1.0 };

    /// Rejection sampling against the untruncated normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = self.mean + self.sd * z;
            if x >= self.lower && x <= self.upper {
                return x;
            }
        }
    }
}

pub fn sample_truncnorm(dist: TruncatedNormal, n: usize, seed: Seed) -> Array1<f64> {
    let mut rng = seed.rng();
    Array1::from_shape_fn(n, |_| dist.sample(&mut rng))
}

/// `n` draws from U([0,1]^d1 × {0}^(pad_to − d1)), uniform weights.
pub fn sample_cube(d1: usize, pad_to: usize, n: usize, seed: Seed) -> Result<DiscreteMeasure> {
    if d1 == 0 || d1 > pad_to {
        return Err(Error::BadDimensions(format!("need 1 <= d1 <= pad_to, got d1={d1}, pad_to={pad_to}")));
    }
    let mut rng = seed.rng();
    let mut points = Array2::zeros((n, pad_to));
    for mut row in points.rows_mut() {
        for c in 0..d1 {
            row[c] = rng.random::<f64>();
        }
    }
    DiscreteMeasure::uniform(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceKind {
    /// x ↦ (x, x₁², …, x₁²) applied to uniform draws.
    T,
    /// x ↦ (x, √(1−x₁²), …, √(1−x_k²)) applied to truncated-normal draws.
    S,
}

/// Image of `x ∈ R^d` under the surface map of the given kind with `k` extra coordinates.
pub fn surface_map(kind: SurfaceKind, x: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + k);
    out.extend_from_slice(x);
    match kind {
        SurfaceKind::T => out.extend(std::iter::repeat_n(x[0] * x[0], k)),
        SurfaceKind::S => out.extend(x[..k].iter().map(|&v| (1.0 - v * v).max(0.0).sqrt())),
    }
    out
}

/// `n` draws from the pushforward of the base law through the surface map.
pub fn sample_surface(kind: SurfaceKind, d: usize, k: usize, n: usize, seed: Seed) -> Result<DiscreteMeasure> {
    if d == 0 || k > d {
        return Err(Error::BadDimensions(format!("need d >= 1 and k <= d, got d={d}, k={k}")));
    }
    let mut rng = seed.rng();
    let mut points = Array2::zeros((n, d + k));
    let mut base = vec![0.0; d];
    for mut row in points.rows_mut() {
        for v in base.iter_mut() {
            *v = match kind {
                SurfaceKind::T => rng.random::<f64>(),
                SurfaceKind::S => TruncatedNormal::SURFACE.sample(&mut rng),
            };
        }
        for (dst, src) in row.iter_mut().zip(surface_map(kind, &base, k)) {
            *dst = src;
        }
    }
    DiscreteMeasure::uniform(points)
}

/// `atoms` points drawn once from U[0,1]^d, each with mass 1/atoms.
pub fn fixed_discrete_support(atoms: usize, d: usize, seed: Seed) -> Result<DiscreteMeasure> {
    if atoms == 0 {
        return Err(Error::EmptySupport);
    }
    sample_cube(d, d, atoms, seed)
}
