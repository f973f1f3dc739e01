//! Cost functions: declarative specs, pointwise evaluation, dense cost
//! matrices and the affine rescaling of a problem.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest number of entries a dense cost matrix may hold. Larger problems
/// are solved matrix-free with costs recomputed row by row.
pub const DENSE_BUDGET: usize = 16_000_000;

/// Cost depending only on the trailing coordinates `y₂` of a decomposable cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailCost {
    Zero,
    /// `scale · ‖y₂‖²`
    SqNorm { scale: f64 },
    /// `scale · ‖y₂‖₁`
    L1Norm { scale: f64 },
}

impl TailCost {
    pub fn eval(&self, y2: &[f64]) -> f64 {
        match *self {
            TailCost::Zero => 0.0,
            TailCost::SqNorm { scale } => scale * y2.iter().map(|v| v * v).sum::<f64>(),
            TailCost::L1Norm { scale } => scale * y2.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseCost {
    /// ‖x − y‖²
    SqEuclidean,
    /// ‖x − y‖₁
    L1,
    /// ‖x − y‖∞
    LInf,
    /// c_A(x, y) = −4‖x‖²‖y‖² − 32 xᵀAy with A of shape s×d.
    GwBilinear { a: Array2<f64> },
    /// c(x, (y₁, y₂)) = head(x, y₁) + tail(y₂), where y₁ = y[..split].
    Decomposable { head: Box<CostSpec>, tail: TailCost, split: usize },
}

/// A cost `scale · base(x, y) + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub base: BaseCost,
    pub scale: f64,
    pub shift: f64,
}

impl CostSpec {
    fn scaled(base: BaseCost, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::NonpositiveScale(scale));
        }
        Ok(Self { base, scale, shift: 0.0 })
    }

    pub fn sq_euclidean(scale: f64) -> Result<Self> {
        Self::scaled(BaseCost::SqEuclidean, scale)
    }

    pub fn l1(scale: f64) -> Result<Self> {
        Self::scaled(BaseCost::L1, scale)
    }

    pub fn linf() -> Self {
        Self { base: BaseCost::LInf, scale: 1.0, shift: 0.0 }
    }

    pub fn gw_bilinear(a: Array2<f64>) -> Self {
        Self { base: BaseCost::GwBilinear { a }, scale: 1.0, shift: 0.0 }
    }

    pub fn decomposable(head: CostSpec, tail: TailCost, split: usize) -> Self {
        Self { base: BaseCost::Decomposable { head: Box::new(head), tail, split }, scale: 1.0, shift: 0.0 }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self.base, BaseCost::SqEuclidean | BaseCost::L1 | BaseCost::LInf)
    }

    /// Checks that points of dimension `dx` and `dy` can be fed to this cost.
    pub fn check_dims(&self, dx: usize, dy: usize) -> Result<()> {
        match &self.base {
            BaseCost::SqEuclidean | BaseCost::L1 | BaseCost::LInf => {
                if dx != dy {
                    return Err(Error::DimensionMismatch { expected: dx, got: dy });
                }
            }
            BaseCost::GwBilinear { a } => {
                if dx != a.nrows() {
                    return Err(Error::DimensionMismatch { expected: a.nrows(), got: dx });
                }
                if dy != a.ncols() {
                    return Err(Error::DimensionMismatch { expected: a.ncols(), got: dy });
                }
            }
            BaseCost::Decomposable { head, split, .. } => {
                if *split > dy {
                    return Err(Error::BadDimensions(format!("split index {split} exceeds point dimension {dy}")));
                }
                head.check_dims(dx, *split)?;
            }
        }
        Ok(())
    }

    /// Evaluates the cost; dimensions must already be compatible.
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let base = match &self.base {
            BaseCost::SqEuclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            BaseCost::L1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>(),
            BaseCost::LInf => x.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
            BaseCost::GwBilinear { a } => {
                let nx: f64 = x.iter().map(|v| v * v).sum();
                let ny: f64 = y.iter().map(|v| v * v).sum();
                let mut bilinear = 0.0;
                for (xi, row) in x.iter().zip(a.rows()) {
                    let ay: f64 = row.iter().zip(y).map(|(aij, yj)| aij * yj).sum();
                    bilinear += xi * ay;
                }
                -4.0 * nx * ny - 32.0 * bilinear
            }
            BaseCost::Decomposable { head, tail, split } => {
                head.eval_unchecked(x, &y[..*split]) + tail.eval(&y[*split..])
            }
        };
        self.scale * base + self.shift
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dims(x.len(), y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    pub fn eval_view(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        match (x.as_slice(), y.as_slice()) {
            (Some(xs), Some(ys)) => self.eval(xs, ys),
            _ => self.eval(&x.to_vec(), &y.to_vec()),
        }
    }
}

/// Dense matrix of pairwise costs `c(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub values: Array2<f64>,
    pub source: CostSpec,
}

/// Fills the dense matrix row by row with the same evaluation as [`CostSpec::eval`].
pub fn cost_matrix(spec: &CostSpec, xs: &Array2<f64>, ys: &Array2<f64>) -> Result<CostMatrix> {
    let entries = xs.nrows().saturating_mul(ys.nrows());
    if entries > DENSE_BUDGET {
        return Err(Error::CacheBudgetExceeded { entries, budget: DENSE_BUDGET });
    }
    let values = dense_costs(spec, xs, ys)?;
    Ok(CostMatrix { values, source: spec.clone() })
}

pub(crate) fn dense_costs(spec: &CostSpec, xs: &Array2<f64>, ys: &Array2<f64>) -> Result<Array2<f64>> {
    spec.check_dims(xs.ncols(), ys.ncols())?;
    let xs = xs.as_standard_layout();
    let ys = ys.as_standard_layout();
    let (n, m) = (xs.nrows(), ys.nrows());
    let mut values = Array2::zeros((n, m));
    let fill = |(i, row): (usize, &mut [f64])| {
        let x = xs.row(i);
        let x = x.as_slice().expect("standard layout");
        for (j, out) in row.iter_mut().enumerate() {
            *out = spec.eval_unchecked(x, ys.row(j).as_slice().expect("standard layout"));
        }
    };
    if m > 0 {
        let flat = values.as_slice_mut().expect("standard layout");
        if n * m >= 1 << 16 {
            flat.par_chunks_mut(m).enumerate().for_each(fill);
        } else {
            flat.chunks_mut(m).enumerate().for_each(fill);
        }
    }
    Ok(values)
}

/// A problem rewritten through `c = a·c' + b`, `ε = a·ε'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    /// `c' = (c − b) / a`
    pub spec: CostSpec,
    /// `ε' = ε / a`
    pub eps: f64,
    pub a: f64,
    pub b: f64,
}

impl Rescaled {
    /// Maps an EOT value of the rescaled problem back to the original one.
    pub fn recover(&self, value: f64) -> f64 {
        self.a * value + self.b
    }
}

/// Rescales a problem using `OT_{a c' + b, ε} = a · OT_{c', ε/a} + b`.
pub fn rescale_problem(spec: &CostSpec, eps: f64, a: f64, b: f64) -> Result<Rescaled> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::NonpositiveScale(a));
    }
    if !(eps > 0.0) {
        return Err(Error::NonpositiveEps(eps));
    }
    let mut rescaled = spec.clone();
    rescaled.scale = spec.scale / a;
    rescaled.shift = (spec.shift - b) / a;
    Ok(Rescaled { spec: rescaled, eps: eps / a, a, b })
}
