//! Closed-form entropic OT between Gaussians for the cost ‖x − y‖².
//!
//! ```text
//! OT_ε(N(m₁,Σ₁), N(m₂,Σ₂)) = ‖m₁ − m₂‖² + B²_ε(Σ₁, Σ₂)
//! B²_ε = tr(Σ₁ + Σ₂ − D_ε) + (ε/2) log det(D_ε + (ε/2)I) + d(ε/2)(1 − log ε)
//! D_ε  = (4 Σ₁^{1/2} Σ₂ Σ₁^{1/2} + (ε²/4) I)^{1/2}
//! ```
//!
//! The formula is evaluated through the spectrum of `4 Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, so
//! singular covariances (point masses, degenerate directions) are handled.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, Seed};

/// Eigenvalues below this (in absolute terms) are clamped to zero.
pub const PSD_CLAMP: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `S = U diag(λ) Uᵀ`, eigenvalues in descending order and
/// eigenvectors in the columns of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl SymEig {
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.vectors * &self.values.view().insert_axis(Axis(0));
        scaled.dot(&self.vectors.t())
    }
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn check_symmetric(s: &Array2<f64>) -> Result<()> {
    let (r, c) = s.dim();
    if r != c {
        return Err(Error::DimensionMismatch { expected: r, got: c });
    }
    let asym = (s - &s.t()).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if asym > SYMMETRY_TOL * max_abs(s).max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
///
/// Sweeps plane rotations over all (p, q) pairs until the off-diagonal
/// Frobenius norm is below 1e-13 · ‖S‖_F.
pub fn sym_eig(s: &Array2<f64>) -> Result<SymEig> {
    check_symmetric(s)?;
    let n = s.nrows();
    // Work on the exactly symmetric part.
    let mut a = (s + &s.t()) * 0.5;
    let mut v = Array2::<f64>::eye(n);
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = 1e-13 * norm;

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - sn * akq;
                    a[[k, q]] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - sn * aqk;
                    a[[q, k]] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok(SymEig { values, vectors })
}

fn clamp_psd(values: &Array1<f64>) -> Result<Array1<f64>> {
    let scale = values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if let Some(&bad) = values.iter().find(|&&x| x < -PSD_CLAMP * scale) {
        return Err(Error::NotPsd(bad));
    }
    Ok(values.mapv(|x| x.max(0.0)))
}

/// Principal square root of a positive semi-definite matrix.
pub fn sym_sqrt(s: &Array2<f64>) -> Result<Array2<f64>> {
    let eig = sym_eig(s)?;
    let roots = clamp_psd(&eig.values)?.mapv(f64::sqrt);
    Ok(SymEig { values: roots, vectors: eig.vectors }.reconstruct())
}

/// Mean and covariance of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParam {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

impl GaussianParam {
    pub fn new(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: cov.nrows() });
        }
        clamp_psd(&sym_eig(&cov)?.values)?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `n` i.i.d. draws `m + Σ^{1/2} z` as an empirical measure.
    pub fn sample(&self, n: usize, seed: Seed) -> Result<DiscreteMeasure> {
        let root = sym_sqrt(&self.cov)?;
        let d = self.dim();
        let mut rng = seed.rng();
        let z = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        let points = z.dot(&root.t()) + self.mean.view().insert_axis(Axis(0));
        DiscreteMeasure::uniform(points)
    }
}

/// Covariance term B²_ε(Σ₁, Σ₂) of the Gaussian EOT cost.
pub fn bures_eps(s1: &Array2<f64>, s2: &Array2<f64>, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NonpositiveEps(eps));
    }
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch { expected: s1.nrows(), got: s2.nrows() });
    }
    let d = s1.nrows();
    let root = sym_sqrt(s1)?;
    clamp_psd(&sym_eig(s2)?.values)?;
    let inner = root.dot(s2).dot(&root) * 4.0;
    let inner = (&inner + &inner.t()) * 0.5;
    let spectrum = clamp_psd(&sym_eig(&inner)?.values)?;
    let half = eps / 2.0;
    // Eigenvalues of D_ε.
    let dvals = spectrum.mapv(|l| (l + eps * eps / 4.0).sqrt());
    let trace = s1.diag().sum() + s2.diag().sum() - dvals.sum();
    let log_det: f64 = dvals.iter().map(|x| (x + half).ln()).sum();
    Ok(trace + half * log_det + d as f64 * half * (1.0 - eps.ln()))
}

/// Entropic OT cost between two Gaussians for c(x, y) = ‖x − y‖².
pub fn gaussian_eot(p: &GaussianParam, q: &GaussianParam, eps: f64) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    let diff = &p.mean - &q.mean;
    Ok(diff.dot(&diff) + bures_eps(&p.cov, &q.cov, eps)?)
}

/// Range factorization Σ = U Λ Uᵀ keeping eigenvalues above [`PSD_CLAMP`]
/// (relative to the largest one). `U` is d×s with orthonormal columns.
pub fn rank_decomposition(s: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let eig = sym_eig(s)?;
    let values = clamp_psd(&eig.values)?;
    let scale = values.iter().fold(1.0f64, |m, x| m.max(*x));
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > PSD_CLAMP * scale).collect();
    Ok((eig.vectors.select(Axis(1), &keep), values.select(Axis(0), &keep)))
}

/// Both sides of `B²_ε(Σ₁, Σ₂) = B²_ε(Λ₁, U₁ᵀΣ₂U₁) + tr((I − U₁U₁ᵀ)Σ₂)`
/// for Σ₁ = U₁Λ₁U₁ᵀ with U₁ ∈ R^{d×s}, UᵀU = I.
pub fn gaussian_lca_check(u1: &Array2<f64>, lambda1: &Array1<f64>, s2: &Array2<f64>, eps: f64) -> Result<(f64, f64)> {
    let (d, s) = u1.dim();
    if lambda1.len() != s {
        return Err(Error::DimensionMismatch { expected: s, got: lambda1.len() });
    }
    if s2.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, got: s2.nrows() });
    }
    let gram = u1.t().dot(u1);
    let deviation = (&gram - &Array2::<f64>::eye(s)).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if deviation > 1e-10 {
        return Err(Error::NotOrthogonal(deviation));
    }
    let s1 = (u1 * &lambda1.view().insert_axis(Axis(0))).dot(&u1.t());
    let lhs = bures_eps(&s1, s2, eps)?;
    let projected = u1.t().dot(s2).dot(u1);
    let reduced = if s == 0 { 0.0 } else { bures_eps(&Array2::from_diag(lambda1), &projected, eps)? };
    let residual = s2.diag().sum() - projected.diag().sum();
    Ok((lhs, reduced + residual))
}
