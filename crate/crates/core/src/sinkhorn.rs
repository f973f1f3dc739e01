//! Log-domain Sinkhorn iterations built on the entropic (c, ε)-transform.
//!
//! Potentials are stored in cost units. Starting from ψ ≡ 0, one iteration
//! applies φ ← T_ν(ψ) followed by ψ ← T_μ(φ), where
//!
//! ```text
//! T_ν(ψ)(x) = −ε log Σ_j v_j exp((ψ_j − c(x, y_j)) / ε)
//! ```
//!
//! After each iteration the ν-marginal of the implied plan
//! `π_ij = w_i v_j exp((φ_i + ψ_j − c_ij) / ε)` is exact and the μ-marginal lags.
//! Its ℓ₁ error equals `Σ_i w_i |exp((φ_i − T_ν(ψ)_i) / ε) − 1|`, so it falls
//! out of the next φ-update at no extra cost.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::cost::{dense_costs, BaseCost, CostSpec, TailCost, DENSE_BUDGET};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub eps: f64,
    /// Stop once the lagging marginal is this close in ℓ₁.
    pub marginal_tol: f64,
    pub max_iters: usize,
    /// Iterations between convergence checks.
    pub check_every: usize,
}

impl SinkhornConfig {
    pub fn new(eps: f64) -> Self {
        Self { eps, marginal_tol: 1e-8, max_iters: 1_000_000, check_every: 1 }
    }

    pub fn with_tol(mut self, marginal_tol: f64) -> Self {
        self.marginal_tol = marginal_tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::NonpositiveEps(self.eps));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("marginal_tol must be positive, got {}", self.marginal_tol)));
        }
        if self.max_iters == 0 || self.check_every == 0 {
            return Err(Error::InvalidConfig("max_iters and check_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dual pair: φ on the support of μ, ψ on the support of ν.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub phi: Array1<f64>,
    pub psi: Array1<f64>,
}

impl Potentials {
    /// Shifts (φ + a, ψ − a) so that Σ w φ = Σ v ψ. The dual value is unchanged.
    pub fn balanced(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Potentials {
        let a = (mu.weights().dot(&self.phi) - nu.weights().dot(&self.psi)) / 2.0;
        Potentials { phi: &self.phi - a, psi: &self.psi + a }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EotSolution {
    /// Σ w φ + Σ v ψ
    pub dual_value: f64,
    /// ⟨C, π⟩ + ε KL(π | μ⊗ν) for the implied plan.
    pub primal_value: f64,
    pub potentials: Potentials,
    /// Completed (φ, ψ) update pairs.
    pub iterations: usize,
    pub marginal_err_mu: f64,
    pub marginal_err_nu: f64,
    pub converged: bool,
}

impl EotSolution {
    /// Sample variance of φ under μ plus that of ψ under ν, the asymptotic
    /// variance of the plug-in estimator.
    pub fn potential_variance(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        weighted_variance(&self.potentials.phi, mu.weights()) + weighted_variance(&self.potentials.psi, nu.weights())
    }
}

fn weighted_variance(f: &Array1<f64>, w: &Array1<f64>) -> f64 {
    let mean = w.dot(f);
    f.iter().zip(w).map(|(x, wi)| wi * (x - mean) * (x - mean)).sum()
}

/// Which measure the transformed potential lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Mu,
    Nu,
}

/// −ε log Σ_k w_k exp((f_k − c_k)/ε), shifted by s = min_k (c_k − f_k) so
/// that every exponent is nonpositive and a single atom returns c − f exactly.
#[inline]
fn soft_min(f: &[f64], log_w: &[f64], costs: &[f64], eps: f64) -> f64 {
    let mut s = f64::INFINITY;
    for (fk, ck) in f.iter().zip(costs) {
        s = s.min(ck - fk);
    }
    let mut sum = 0.0;
    for ((fk, lw), ck) in f.iter().zip(log_w).zip(costs) {
        sum += ((s - (ck - fk)) / eps + lw).exp();
    }
    if sum > 0.0 {
        return s - eps * sum.ln();
    }
    // Only reachable with subnormal weights.
    let mut max = f64::NEG_INFINITY;
    for ((fk, lw), ck) in f.iter().zip(log_w).zip(costs) {
        max = max.max((s - (ck - fk)) / eps + lw);
    }
    let mut sum = 0.0;
    for ((fk, lw), ck) in f.iter().zip(log_w).zip(costs) {
        sum += ((s - (ck - fk)) / eps + lw - max).exp();
    }
    s - eps * (max + sum.ln())
}

/// Entropic (c, ε)-transform of `f`, a function on the support of `source`,
/// evaluated at each row of `targets`. With `source_side = Side::Mu` the
/// source points play the role of x in c(x, y); with `Side::Nu` they play y.
/// Zero-weight source atoms are skipped.
pub fn entropic_transform(
    f: &Array1<f64>,
    source: &DiscreteMeasure,
    source_side: Side,
    targets: &Array2<f64>,
    spec: &CostSpec,
    eps: f64,
) -> Result<Array1<f64>> {
    if !(eps > 0.0) {
        return Err(Error::NonpositiveEps(eps));
    }
    if f.len() != source.len() {
        return Err(Error::LengthMismatch { left: f.len(), right: source.len() });
    }
    match source_side {
        Side::Mu => spec.check_dims(source.dim(), targets.ncols())?,
        Side::Nu => spec.check_dims(targets.ncols(), source.dim())?,
    }
    let keep: Vec<usize> = (0..source.len()).filter(|&k| source.weights()[k] > 0.0).collect();
    let fk: Vec<f64> = keep.iter().map(|&k| f[k]).collect();
    let log_w: Vec<f64> = keep.iter().map(|&k| source.weights()[k].ln()).collect();
    let src = source.points().select(Axis(0), &keep);
    let targets = targets.as_standard_layout();
    let mut costs = vec![0.0; keep.len()];
    let out = targets
        .rows()
        .into_iter()
        .map(|t| {
            let t = t.as_slice().expect("standard layout");
            for (c, s) in costs.iter_mut().zip(src.rows()) {
                let s = s.as_slice().expect("standard layout");
                *c = match source_side {
                    Side::Mu => spec.eval_unchecked(s, t),
                    Side::Nu => spec.eval_unchecked(t, s),
                };
            }
            soft_min(&fk, &log_w, &costs, eps)
        })
        .collect();
    Ok(out)
}

/// ℓ₁ distance between a plan marginal and the target weights.
pub fn marginal_tv_error(marginal: &[f64], target: &[f64]) -> Result<f64> {
    if marginal.len() != target.len() {
        return Err(Error::LengthMismatch { left: marginal.len(), right: target.len() });
    }
    Ok(marginal.iter().zip(target).map(|(a, b)| (a - b).abs()).sum())
}

/// A priori iteration count after which the Sinkhorn estimator is within twice
/// the statistical error `k` of the population value, for a cost bounded by
/// `cost_sup` and `n` support points. Reported as a diagnostic only.
pub fn iteration_budget(n: usize, cost_sup: f64, eps: f64, k: f64) -> f64 {
    (2.0 + 20.0 / k * cost_sup * (3.0 * (n as f64).ln() + cost_sup / eps)).floor()
}

enum Kernel {
    /// c (n×m) and its transpose.
    Dense(Array2<f64>, Array2<f64>),
    Streaming,
}

/// Reduced problem: positive-weight atoms only.
struct Problem {
    xs: Array2<f64>,
    ys: Array2<f64>,
    w: Array1<f64>,
    v: Array1<f64>,
    log_w: Vec<f64>,
    log_v: Vec<f64>,
    spec: CostSpec,
    eps: f64,
    kernel: Kernel,
}

fn positive_atoms(m: &DiscreteMeasure) -> Vec<usize> {
    (0..m.len()).filter(|&i| m.weights()[i] > 0.0).collect()
}

impl Problem {
    fn new(mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: &CostSpec, eps: f64) -> Result<(Self, Vec<usize>, Vec<usize>)> {
        spec.check_dims(mu.dim(), nu.dim())?;
        let keep_mu = positive_atoms(mu);
        let keep_nu = positive_atoms(nu);
        let xs = mu.points().select(Axis(0), &keep_mu).as_standard_layout().to_owned();
        let ys = nu.points().select(Axis(0), &keep_nu).as_standard_layout().to_owned();
        let w = mu.weights().select(Axis(0), &keep_mu);
        let v = nu.weights().select(Axis(0), &keep_nu);
        let kernel = if xs.nrows().saturating_mul(ys.nrows()) <= DENSE_BUDGET {
            let c = dense_costs(spec, &xs, &ys)?;
            let ct = c.t().as_standard_layout().to_owned();
            Kernel::Dense(c, ct)
        } else {
            Kernel::Streaming
        };
        let problem = Problem {
            log_w: w.iter().map(|x| x.ln()).collect(),
            log_v: v.iter().map(|x| x.ln()).collect(),
            xs,
            ys,
            w,
            v,
            spec: spec.clone(),
            eps,
            kernel,
        };
        Ok((problem, keep_mu, keep_nu))
    }

    fn n(&self) -> usize {
        self.xs.nrows()
    }

    fn m(&self) -> usize {
        self.ys.nrows()
    }

    /// Fills `row` with c(x_i, y_j) over j.
    fn cost_row(&self, i: usize, row: &mut [f64]) {
        let x = self.xs.row(i);
        let x = x.as_slice().expect("standard layout");
        for (j, out) in row.iter_mut().enumerate() {
            *out = self.spec.eval_unchecked(x, self.ys.row(j).as_slice().expect("standard layout"));
        }
    }

    /// Fills `col` with c(x_i, y_j) over i.
    fn cost_col(&self, j: usize, col: &mut [f64]) {
        let y = self.ys.row(j);
        let y = y.as_slice().expect("standard layout");
        for (i, out) in col.iter_mut().enumerate() {
            *out = self.spec.eval_unchecked(self.xs.row(i).as_slice().expect("standard layout"), y);
        }
    }

    /// φ_i = T_ν(ψ)(x_i)
    fn update_phi(&self, psi: &Array1<f64>, phi: &mut Array1<f64>) {
        let psi = psi.as_slice().expect("contiguous");
        let eps = self.eps;
        let out = phi.as_slice_mut().expect("contiguous");
        match &self.kernel {
            Kernel::Dense(c, _) => {
                let work = |(i, o): (usize, &mut f64)| {
                    *o = soft_min(psi, &self.log_v, c.row(i).as_slice().expect("standard layout"), eps)
                };
                if self.n() * self.m() >= 1 << 16 {
                    out.par_iter_mut().enumerate().for_each(work);
                } else {
                    out.iter_mut().enumerate().for_each(work);
                }
            }
            Kernel::Streaming => {
                out.par_iter_mut().enumerate().for_each_init(
                    || vec![0.0; self.m()],
                    |buf, (i, o)| {
                        self.cost_row(i, buf);
                        *o = soft_min(psi, &self.log_v, buf, eps);
                    },
                );
            }
        }
    }

    /// ψ_j = T_μ(φ)(y_j)
    fn update_psi(&self, phi: &Array1<f64>, psi: &mut Array1<f64>) {
        let phi = phi.as_slice().expect("contiguous");
        let eps = self.eps;
        let out = psi.as_slice_mut().expect("contiguous");
        match &self.kernel {
            Kernel::Dense(_, ct) => {
                let work = |(j, o): (usize, &mut f64)| {
                    *o = soft_min(phi, &self.log_w, ct.row(j).as_slice().expect("standard layout"), eps)
                };
                if self.n() * self.m() >= 1 << 16 {
                    out.par_iter_mut().enumerate().for_each(work);
                } else {
                    out.iter_mut().enumerate().for_each(work);
                }
            }
            Kernel::Streaming => {
                out.par_iter_mut().enumerate().for_each_init(
                    || vec![0.0; self.n()],
                    |buf, (j, o)| {
                        self.cost_col(j, buf);
                        *o = soft_min(phi, &self.log_w, buf, eps);
                    },
                );
            }
        }
    }

    /// ℓ₁ error of the μ-marginal of the plan (φ, ψ), given φ' = T_ν(ψ).
    fn lagging_error(&self, phi: &Array1<f64>, phi_next: &Array1<f64>) -> f64 {
        phi.iter()
            .zip(phi_next)
            .zip(&self.w)
            .map(|((a, b), w)| w * (((a - b) / self.eps).exp() - 1.0).abs())
            .sum()
    }

    fn dual_value(&self, phi: &Array1<f64>, psi: &Array1<f64>) -> f64 {
        self.w.dot(phi) + self.v.dot(psi)
    }

    /// One sweep over the plan: marginal errors, transport cost and KL term.
    fn plan_statistics(&self, phi: &Array1<f64>, psi: &Array1<f64>) -> (f64, f64, f64) {
        let (n, m) = (self.n(), self.m());
        let mut col = vec![0.0; m];
        let mut row_err = 0.0;
        let mut transport = 0.0;
        let mut kl = 0.0;
        let mut buf = vec![0.0; m];
        for i in 0..n {
            let costs: &[f64] = match &self.kernel {
                Kernel::Dense(c, _) => c.row(i).to_slice().expect("standard layout"),
                Kernel::Streaming => {
                    self.cost_row(i, &mut buf);
                    &buf
                }
            };
            let mut row = 0.0;
            for j in 0..m {
                let log_ratio = (phi[i] + psi[j] - costs[j]) / self.eps;
                let p = (self.log_w[i] + self.log_v[j] + log_ratio).exp();
                row += p;
                col[j] += p;
                transport += p * costs[j];
                if p > 0.0 {
                    kl += p * log_ratio;
                }
            }
            row_err += (row - self.w[i]).abs();
        }
        let col_err = col.iter().zip(&self.v).map(|(a, b)| (a - b).abs()).sum();
        (row_err, col_err, transport + self.eps * kl)
    }
}

/// Sinkhorn iteration state for one problem.
pub struct Sinkhorn {
    problem: Problem,
    cfg: SinkhornConfig,
    keep_mu: Vec<usize>,
    keep_nu: Vec<usize>,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    phi: Array1<f64>,
    psi: Array1<f64>,
    iterations: usize,
}

impl Sinkhorn {
    pub fn new(mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: &CostSpec, cfg: SinkhornConfig) -> Result<Self> {
        cfg.validate()?;
        let (problem, keep_mu, keep_nu) = Problem::new(mu, nu, spec, cfg.eps)?;
        let (n, m) = (problem.n(), problem.m());
        Ok(Self {
            problem,
            cfg,
            keep_mu,
            keep_nu,
            mu: mu.clone(),
            nu: nu.clone(),
            phi: Array1::zeros(n),
            psi: Array1::zeros(m),
            iterations: 0,
        })
    }

    /// One φ-update followed by one ψ-update.
    pub fn step(&mut self) {
        self.problem.update_phi(&self.psi, &mut self.phi);
        self.problem.update_psi(&self.phi, &mut self.psi);
        self.iterations += 1;
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Σ w φ + Σ v ψ for the current pair.
    pub fn dual_value(&self) -> f64 {
        self.problem.dual_value(&self.phi, &self.psi)
    }

    /// ℓ₁ error of the μ-marginal of the current plan.
    pub fn lagging_error(&self) -> f64 {
        let mut next = Array1::zeros(self.problem.n());
        self.problem.update_phi(&self.psi, &mut next);
        self.problem.lagging_error(&self.phi, &next)
    }

    /// Iterates until the lagging marginal meets the tolerance or the
    /// iteration cap is reached.
    pub fn run(mut self) -> EotSolution {
        let mut next = Array1::zeros(self.problem.n());
        let mut converged = false;
        loop {
            self.problem.update_phi(&self.psi, &mut next);
            let at_cap = self.iterations >= self.cfg.max_iters;
            if self.iterations > 0 && (self.iterations.is_multiple_of(self.cfg.check_every) || at_cap) {
                if self.problem.lagging_error(&self.phi, &next) <= self.cfg.marginal_tol {
                    converged = true;
                    break;
                }
            }
            if at_cap {
                break;
            }
            std::mem::swap(&mut self.phi, &mut next);
            self.problem.update_psi(&self.phi, &mut self.psi);
            self.iterations += 1;
        }
        self.finish(converged)
    }

    fn finish(self, converged: bool) -> EotSolution {
        let (err_mu, err_nu, primal) = self.problem.plan_statistics(&self.phi, &self.psi);
        let dual = self.problem.dual_value(&self.phi, &self.psi);
        let potentials = self.full_potentials();
        EotSolution {
            dual_value: dual,
            primal_value: primal,
            potentials,
            iterations: self.iterations,
            marginal_err_mu: err_mu,
            marginal_err_nu: err_nu,
            converged,
        }
    }

    /// Extends the reduced potentials to zero-weight atoms by one transform.
    fn full_potentials(&self) -> Potentials {
        let p = &self.problem;
        let mut phi = Array1::zeros(self.mu.len());
        let mut psi = Array1::zeros(self.nu.len());
        if self.keep_mu.len() == self.mu.len() && self.keep_nu.len() == self.nu.len() {
            phi.assign(&self.phi);
            psi.assign(&self.psi);
            return Potentials { phi, psi };
        }
        let nu_red = DiscreteMeasure::new(p.ys.clone(), p.v.clone()).expect("reduced measure");
        let mu_red = DiscreteMeasure::new(p.xs.clone(), p.w.clone()).expect("reduced measure");
        let phi_all = entropic_transform(&self.psi, &nu_red, Side::Nu, self.mu.points(), &p.spec, p.eps)
            .expect("dimensions checked");
        let psi_all = entropic_transform(&self.phi, &mu_red, Side::Mu, self.nu.points(), &p.spec, p.eps)
            .expect("dimensions checked");
        phi.assign(&phi_all);
        psi.assign(&psi_all);
        for (r, &i) in self.keep_mu.iter().enumerate() {
            phi[i] = self.phi[r];
        }
        for (r, &j) in self.keep_nu.iter().enumerate() {
            psi[j] = self.psi[r];
        }
        Potentials { phi, psi }
    }
}

/// Solves the entropic OT problem between `mu` and `nu`.
///
/// Non-convergence within `max_iters` is reported through
/// [`EotSolution::converged`], not as an error.
pub fn sinkhorn_solve(mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: &CostSpec, cfg: SinkhornConfig) -> Result<EotSolution> {
    Ok(Sinkhorn::new(mu, nu, spec, cfg)?.run())
}

fn plan_entry(sol: &EotSolution, mu: &DiscreteMeasure, nu: &DiscreteMeasure, i: usize, j: usize, cost: f64, eps: f64) -> f64 {
    let (w, v) = (mu.weights()[i], nu.weights()[j]);
    if w == 0.0 || v == 0.0 {
        return 0.0;
    }
    let (phi, psi) = (&sol.potentials.phi, &sol.potentials.psi);
    (w.ln() + v.ln() + (phi[i] + psi[j] - cost) / eps).exp()
}

/// Row `i` of the coupling implied by the potentials.
pub fn plan_row(sol: &EotSolution, mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: &CostSpec, eps: f64, i: usize) -> Result<Array1<f64>> {
    spec.check_dims(mu.dim(), nu.dim())?;
    let x = mu.point(i).to_vec();
    Ok(Array1::from_shape_fn(nu.len(), |j| {
        let c = spec.eval_unchecked(&x, &nu.point(j).to_vec());
        plan_entry(sol, mu, nu, i, j, c, eps)
    }))
}

/// Dense coupling π_ij = w_i v_j exp((φ_i + ψ_j − c_ij)/ε).
pub fn plan(sol: &EotSolution, mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: &CostSpec, eps: f64) -> Result<Array2<f64>> {
    let entries = mu.len().saturating_mul(nu.len());
    if entries > DENSE_BUDGET {
        return Err(Error::CacheBudgetExceeded { entries, budget: DENSE_BUDGET });
    }
    let c = dense_costs(spec, mu.points(), nu.points())?;
    Ok(Array2::from_shape_fn(c.dim(), |(i, j)| plan_entry(sol, mu, nu, i, j, c[[i, j]], eps)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// OT(μ,ν) − ½OT(μ,μ) − ½OT(ν,ν)
    pub value: f64,
    pub cross: f64,
    pub self_mu: f64,
    pub self_nu: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Debiased Sinkhorn divergence for a cost on a common space.
pub fn sinkhorn_divergence(mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: &CostSpec, cfg: SinkhornConfig) -> Result<Divergence> {
    if !spec.is_symmetric() {
        return Err(Error::WrongCostVariant("symmetric (SqEuclidean, L1 or LInf)"));
    }
    let cross = sinkhorn_solve(mu, nu, spec, cfg)?;
    let self_mu = sinkhorn_solve(mu, mu, spec, cfg)?;
    let self_nu = sinkhorn_solve(nu, nu, spec, cfg)?;
    Ok(Divergence {
        value: cross.dual_value - 0.5 * self_mu.dual_value - 0.5 * self_nu.dual_value,
        cross: cross.dual_value,
        self_mu: self_mu.dual_value,
        self_nu: self_nu.dual_value,
        converged: cross.converged && self_mu.converged && self_nu.converged,
        iterations: cross.iterations + self_mu.iterations + self_nu.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveValue {
    pub value: f64,
    /// Solution of the reduced problem between μ and ν₁.
    pub head: EotSolution,
    /// ∫ c₂ dν₂
    pub tail_integral: f64,
}

/// EOT for a cost `c(x, (y₁, y₂)) = head(x, y₁) + tail(y₂)` computed as
/// `OT_head(μ, ν₁) + ∫ tail dν₂`.
pub fn eot_projective(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    head: &CostSpec,
    tail: &TailCost,
    split: usize,
    cfg: SinkhornConfig,
) -> Result<ProjectiveValue> {
    if split > nu.dim() {
        return Err(Error::BadDimensions(format!("split index {split} exceeds point dimension {}", nu.dim())));
    }
    let y1 = nu.points().slice(ndarray::s![.., ..split]).to_owned();
    let nu1 = DiscreteMeasure::new(y1, nu.weights().clone())?;
    let head_sol = sinkhorn_solve(mu, &nu1, head, cfg)?;
    let tail_integral: f64 = nu
        .points()
        .rows()
        .into_iter()
        .zip(nu.weights())
        .map(|(y, v)| v * tail.eval(&y.to_vec()[split..]))
        .sum();
    Ok(ProjectiveValue { value: head_sol.dual_value + tail_integral, head: head_sol, tail_integral })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalValue {
    pub value: f64,
    /// Solution between X and Uᵀ(Y − v).
    pub projected: EotSolution,
    /// scale · E‖(I − UUᵀ)(Y − v)‖²
    pub residual: f64,
}

/// EOT between the pushforward of `x_measure` under x ↦ Ux + v and
/// `y_measure`, for a squared-Euclidean cost, solved in the lower dimension.
pub fn eot_orthogonal(
    x_measure: &DiscreteMeasure,
    y_measure: &DiscreteMeasure,
    u: &Array2<f64>,
    v: &Array1<f64>,
    spec: &CostSpec,
    cfg: SinkhornConfig,
) -> Result<OrthogonalValue> {
    if spec.base != BaseCost::SqEuclidean {
        return Err(Error::WrongCostVariant("SqEuclidean"));
    }
    let (d, s) = u.dim();
    if x_measure.dim() != s {
        return Err(Error::DimensionMismatch { expected: s, got: x_measure.dim() });
    }
    if y_measure.dim() != d || v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: y_measure.dim() });
    }
    let gram = u.t().dot(u);
    let deviation = gram
        .indexed_iter()
        .map(|((i, j), g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0f64, f64::max);
    if deviation > 1e-10 {
        return Err(Error::NotOrthogonal(deviation));
    }
    let centered = y_measure.points() - &v.view().insert_axis(Axis(0));
    let projected_points = centered.dot(u);
    let back = projected_points.dot(&u.t());
    let residual_sq: f64 = (&centered - &back)
        .rows()
        .into_iter()
        .zip(y_measure.weights())
        .map(|(r, w)| w * r.dot(&r))
        .sum();
    let pushed = DiscreteMeasure::new(projected_points, y_measure.weights().clone())?;
    let projected = sinkhorn_solve(x_measure, &pushed, spec, cfg)?;
    let residual = spec.scale * residual_sq;
    Ok(OrthogonalValue { value: projected.dual_value + residual, projected, residual })
}
