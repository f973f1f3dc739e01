//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 4 9`.

use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;

use entropic_ot::cost::TailCost;
use entropic_ot::experiments::{csv_string, rate_fit, run_experiment, summarize, ExperimentConfig, Setting};
use entropic_ot::gaussian::{gaussian_eot, gaussian_lca_check, GaussianParam};
use entropic_ot::gromov::{diameter, entropic_gw, gw2_solve, gw_objective, GwConfig};
use entropic_ot::sinkhorn::{eot_orthogonal, eot_projective, entropic_transform, Side};
use entropic_ot::{center, sinkhorn_divergence, sinkhorn_solve, CostSpec, DiscreteMeasure, Seed, SinkhornConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rng_for(criterion: u64, instance: u64) -> SplitMix64 {
    Seed(20_241_015).derive(&[criterion, instance]).rng()
}

fn log_uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn random_points(rng: &mut SplitMix64, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random::<f64>())
}

fn random_measure(rng: &mut SplitMix64, n: usize, d: usize) -> DiscreteMeasure {
    let pts = random_points(rng, n, d);
    let w = Array1::from_shape_simple_fn(n, || 0.1 + rng.random::<f64>());
    DiscreteMeasure::new(pts, w).unwrap()
}

/// Squared Euclidean, ℓ₁ or ℓ∞, scaled by 1/d.
fn random_cost(rng: &mut SplitMix64, d: usize) -> CostSpec {
    let scale = 1.0 / d as f64;
    match rng.random_range(0..3) {
        0 => CostSpec::sq_euclidean(scale).unwrap(),
        1 => CostSpec::l1(scale).unwrap(),
        _ => CostSpec { scale, ..CostSpec::linf() },
    }
}

/// Columns of a d×s matrix with orthonormal columns (Gram-Schmidt on Gaussians).
fn random_orthonormal(rng: &mut SplitMix64, d: usize, s: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((d, s));
    for j in 0..s {
        let mut v = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
        for _ in 0..2 {
            for k in 0..j {
                let proj = q.column(k).dot(&v);
                v = &v - &(&q.column(k) * proj);
            }
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

fn max_abs(a: &Array1<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn criterion_1() -> Verdict {
    let mut violations = 0;
    let mut worst = 0.0f64;
    for t in 0..1000 {
        let mut rng = rng_for(1, t);
        let (n, m, d) = (rng.random_range(2..=50), rng.random_range(1..=50), rng.random_range(1..=4));
        let source = random_measure(&mut rng, n, d);
        let targets = random_points(&mut rng, m, d);
        let spec = random_cost(&mut rng, d);
        let eps = log_uniform(&mut rng, 0.01, 5.0);
        let spread = log_uniform(&mut rng, 0.01, 10.0);
        let f1 = Array1::from_shape_simple_fn(n, || spread * (2.0 * rng.random::<f64>() - 1.0));
        let f2 = Array1::from_shape_simple_fn(n, || spread * (2.0 * rng.random::<f64>() - 1.0));
        let side = if rng.random::<bool>() { Side::Mu } else { Side::Nu };
        let t1 = entropic_transform(&f1, &source, side, &targets, &spec, eps).unwrap();
        let t2 = entropic_transform(&f2, &source, side, &targets, &spec, eps).unwrap();
        let lhs = max_abs(&(&t1 - &t2));
        let rhs = max_abs(&(&f1 - &f2));
        worst = worst.max(lhs / rhs);
        if !(lhs <= rhs) {
            violations += 1;
        }
    }
    verdict(violations == 0, format!("1000 instances, {violations} violations, max ratio {worst:.6}"))
}

fn criterion_2() -> Verdict {
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for t in 0..200 {
        let mut rng = rng_for(2, t);
        let d = rng.random_range(1..=5);
        let mu = { let n = rng.random_range(2..=100); random_measure(&mut rng, n, d) };
        let nu = { let n = rng.random_range(2..=100); random_measure(&mut rng, n, d) };
        let spec = random_cost(&mut rng, d);
        let eps = log_uniform(&mut rng, 0.05, 5.0);
        let sol = sinkhorn_solve(&mu, &nu, &spec, SinkhornConfig::new(eps).with_tol(1e-8)).unwrap();
        if !sol.converged {
            unconverged += 1;
        }
        worst = worst.max((sol.dual_value - sol.primal_value).abs() / (1.0 + sol.dual_value.abs()));
    }
    verdict(
        worst <= 1e-6 && unconverged == 0,
        format!("200 instances, max |dual - primal| / (1 + |dual|) = {worst:.3e}, {unconverged} unconverged"),
    )
}

/// Minimizes ⟨C, π⟩ + ε KL(π | w⊗v) over 3×3 couplings by damped Newton in
/// the 4-dimensional affine chart π = w vᵀ + Σ θ_ij E_ij, with
/// E_ij = e_i e_jᵀ − e_i e_3ᵀ − e_3 e_jᵀ + e_3 e_3ᵀ.
fn coupling_oracle_3x3(c: &Array2<f64>, w: &Array1<f64>, v: &Array1<f64>, eps: f64) -> f64 {
    let basis: Vec<Array2<f64>> = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .iter()
        .map(|&(i, j)| {
            let mut e = Array2::zeros((3, 3));
            e[[i, j]] += 1.0;
            e[[i, 2]] -= 1.0;
            e[[2, j]] -= 1.0;
            e[[2, 2]] += 1.0;
            e
        })
        .collect();
    let base = Array2::from_shape_fn((3, 3), |(i, j)| w[i] * v[j]);
    let plan = |theta: &[f64; 4]| {
        let mut p = base.clone();
        for (t, e) in theta.iter().zip(&basis) {
            p = p + e * *t;
        }
        p
    };
    let objective = |p: &Array2<f64>| -> f64 {
        if p.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        (c * p).sum() + eps * p.indexed_iter().map(|((i, j), &x)| x * (x / base[[i, j]]).ln()).sum::<f64>()
    };
    let mut theta = [0.0; 4];
    let mut value = objective(&plan(&theta));
    for _ in 0..200 {
        let p = plan(&theta);
        let g_full = Array2::from_shape_fn((3, 3), |(i, j)| c[[i, j]] + eps * (p[[i, j]] / base[[i, j]]).ln());
        let grad: Vec<f64> = basis.iter().map(|e| (e * &g_full).sum()).collect();
        let mut hess = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                hess[a][b] = (&basis[a] * &basis[b] / &p).sum() * eps;
            }
        }
        let step = solve4(hess, grad.clone());
        let mut t = 1.0;
        loop {
            let cand = [theta[0] - t * step[0], theta[1] - t * step[1], theta[2] - t * step[2], theta[3] - t * step[3]];
            let val = objective(&plan(&cand));
            if val <= value || t < 1e-12 {
                if val <= value {
                    theta = cand;
                    value = val;
                }
                break;
            }
            t *= 0.5;
        }
        if grad.iter().map(|g| g.abs()).fold(0.0, f64::max) < 1e-14 {
            break;
        }
    }
    value
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: Vec<f64>) -> Vec<f64> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..4 {
            let f = a[r][col] / a[col][col];
            for k in col..4 {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = ((r + 1)..4).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn criterion_3() -> Verdict {
    // uniform{0,1} on both sides, |x − y|, ε = 1: diagonal mass a per atom,
    // objective (1 − 2a) + 2a log 4a + (1 − 2a) log(2 − 4a).
    let df = |a: f64| -2.0 + 2.0 * (4.0 * a).ln() - 2.0 * (2.0 - 4.0 * a).ln();
    let d2f = |a: f64| 2.0 / a + 8.0 / (2.0 - 4.0 * a);
    let mut a = 0.25;
    for _ in 0..60 {
        a -= df(a) / d2f(a);
    }
    let oracle = (1.0 - 2.0 * a) + 2.0 * a * (4.0 * a).ln() + (1.0 - 2.0 * a) * (2.0 - 4.0 * a).ln();
    let two = DiscreteMeasure::uniform(ndarray::array![[0.0], [1.0]]).unwrap();
    let sol = sinkhorn_solve(&two, &two, &CostSpec::l1(1.0).unwrap(), SinkhornConfig::new(1.0)).unwrap();
    let err2 = (sol.dual_value - oracle).abs();

    let mut worst = 0.0f64;
    for t in 0..50 {
        let mut rng = rng_for(3, t);
        let d = rng.random_range(1..=3);
        let mu = random_measure(&mut rng, 3, d);
        let nu = random_measure(&mut rng, 3, d);
        let spec = random_cost(&mut rng, d);
        let eps = log_uniform(&mut rng, 0.1, 2.0);
        let c = entropic_ot::cost_matrix(&spec, mu.points(), nu.points()).unwrap().values;
        let direct = coupling_oracle_3x3(&c, mu.weights(), nu.weights(), eps);
        let sol = sinkhorn_solve(&mu, &nu, &spec, SinkhornConfig::new(eps)).unwrap();
        worst = worst.max((sol.dual_value - direct).abs());
    }
    verdict(
        err2 <= 1e-7 && worst <= 1e-5,
        format!("2x2 error {err2:.3e} (oracle {oracle:.8}), 3x3 max error {worst:.3e} over 50"),
    )
}

fn random_cov(rng: &mut SplitMix64, d: usize) -> Array2<f64> {
    let q = random_orthonormal(rng, d, d);
    let lam = Array1::from_shape_simple_fn(d, || 0.2 + 0.8 * rng.random::<f64>());
    (&q * &lam.view().insert_axis(ndarray::Axis(0))).dot(&q.t())
}

fn criterion_4() -> Verdict {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let spec = CostSpec::sq_euclidean(1.0).unwrap();
    for d in 1..=3usize {
        for (k, &eps) in [0.5, 1.0, 2.0].iter().enumerate() {
            let mut rng = rng_for(4, (10 * d + k) as u64);
            let mean2 = Array1::from_shape_simple_fn(d, || rng.random::<f64>() - 0.5);
            let p = GaussianParam::new(Array1::zeros(d), random_cov(&mut rng, d)).unwrap();
            let q = GaussianParam::new(mean2, random_cov(&mut rng, d)).unwrap();
            let exact = gaussian_eot(&p, &q, eps).unwrap();
            let est: Vec<f64> = (0..5u64)
                .map(|r| {
                    let seed = Seed(4).derive(&[d as u64, k as u64, r]);
                    let x = p.sample(2000, seed.derive(&[0])).unwrap();
                    let y = q.sample(2000, seed.derive(&[1])).unwrap();
                    sinkhorn_solve(&x, &y, &spec, SinkhornConfig::new(eps)).unwrap().dual_value
                })
                .collect();
            let mean = est.iter().sum::<f64>() / 5.0;
            let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
            let stderr = sd / 5f64.sqrt();
            let tol = 0.03 * exact.abs() + 3.0 * stderr;
            worst = worst.max((mean - exact).abs() / tol);
            if (mean - exact).abs() > tol {
                failures.push(format!("d={d} eps={eps}: {mean:.5} vs {exact:.5}"));
            }
        }
    }
    verdict(failures.is_empty(), format!("9 cells, max |err| / tolerance = {worst:.3} {}", failures.join("; ")))
}

fn criterion_5() -> Verdict {
    let mut worst = 0.0f64;
    for t in 0..100 {
        let mut rng = rng_for(5, t);
        let d = rng.random_range(1..=6);
        let s = rng.random_range(0..=d);
        let u = random_orthonormal(&mut rng, d, s);
        let lambda = Array1::from_shape_simple_fn(s, || log_uniform(&mut rng, 0.05, 5.0));
        let r2 = rng.random_range(1..=d);
        let g = Array2::from_shape_simple_fn((d, r2), || rng.sample::<f64, _>(StandardNormal));
        let s2 = g.dot(&g.t()) / d as f64;
        let eps = log_uniform(&mut rng, 0.05, 5.0);
        let (lhs, rhs) = gaussian_lca_check(&u, &lambda, &s2, eps).unwrap();
        worst = worst.max((lhs - rhs).abs() / lhs.abs());
    }
    verdict(worst <= 1e-8, format!("100 triples, max relative gap {worst:.3e}"))
}

fn criterion_6() -> Verdict {
    let mut worst_proj = 0.0f64;
    for t in 0..50 {
        let mut rng = rng_for(6, t);
        let d1 = rng.random_range(1..=3);
        let k = rng.random_range(1..=3);
        let mu = { let n = rng.random_range(2..=40); random_measure(&mut rng, n, d1) };
        let nu = { let n = rng.random_range(2..=40); random_measure(&mut rng, n, d1 + k) };
        let head = if rng.random::<bool>() { CostSpec::sq_euclidean(1.0).unwrap() } else { CostSpec::l1(0.5).unwrap() };
        let tail_scale = log_uniform(&mut rng, 0.1, 3.0);
        let tail = match rng.random_range(0..3) {
            0 => TailCost::Zero,
            1 => TailCost::SqNorm { scale: tail_scale },
            _ => TailCost::L1Norm { scale: tail_scale },
        };
        let eps = log_uniform(&mut rng, 0.05, 2.0);
        let cfg = SinkhornConfig::new(eps);
        let full = sinkhorn_solve(&mu, &nu, &CostSpec::decomposable(head.clone(), tail, d1), cfg).unwrap();
        let proj = eot_projective(&mu, &nu, &head, &tail, d1, cfg).unwrap();
        worst_proj = worst_proj.max((full.dual_value - proj.value).abs());
    }
    let mut worst_orth = 0.0f64;
    for t in 0..50 {
        let mut rng = rng_for(6, 1000 + t);
        let s = rng.random_range(1..=3);
        let d = s + rng.random_range(0..=3);
        let u = random_orthonormal(&mut rng, d, s);
        let v = Array1::from_shape_simple_fn(d, || rng.random::<f64>() - 0.5);
        let x = { let n = rng.random_range(2..=40); random_measure(&mut rng, n, s) };
        let y = { let n = rng.random_range(2..=40); random_measure(&mut rng, n, d) };
        let spec = CostSpec::sq_euclidean(log_uniform(&mut rng, 0.2, 2.0)).unwrap();
        let eps = log_uniform(&mut rng, 0.05, 2.0);
        let cfg = SinkhornConfig::new(eps);
        let mapped = x.points().dot(&u.t()) + v.view().insert_axis(ndarray::Axis(0));
        let embedded = DiscreteMeasure::new(mapped, x.weights().clone()).unwrap();
        let direct = sinkhorn_solve(&embedded, &y, &spec, cfg).unwrap();
        let reduced = eot_orthogonal(&x, &y, &u, &v, &spec, cfg).unwrap();
        worst_orth = worst_orth.max((direct.dual_value - reduced.value).abs());
    }
    verdict(
        worst_proj <= 1e-6 && worst_orth <= 1e-6,
        format!("projective max gap {worst_proj:.3e}, orthogonal max gap {worst_orth:.3e}"),
    )
}

fn criterion_7() -> Verdict {
    let mut worst = 0.0f64;
    for t in 0..100 {
        let mut rng = rng_for(7, t);
        let d = rng.random_range(1..=4);
        let mu = { let n = rng.random_range(2..=40); random_measure(&mut rng, n, d) };
        let nu = { let n = rng.random_range(2..=40); random_measure(&mut rng, n, d) };
        let c = random_cost(&mut rng, d);
        let eps = log_uniform(&mut rng, 0.05, 2.0);
        let a = log_uniform(&mut rng, 0.2, 5.0);
        let b = 4.0 * rng.random::<f64>() - 2.0;
        let affine = CostSpec { scale: a * c.scale, shift: b, ..c.clone() };
        let lhs = a * sinkhorn_solve(&mu, &nu, &c, SinkhornConfig::new(eps / a).with_tol(1e-10)).unwrap().dual_value + b;
        let rhs = sinkhorn_solve(&mu, &nu, &affine, SinkhornConfig::new(eps).with_tol(1e-10)).unwrap().dual_value;
        worst = worst.max((lhs - rhs).abs());
    }
    verdict(worst <= 1e-8, format!("100 instances, max |a OT(c, eps/a) + b - OT(ac + b, eps)| = {worst:.3e}"))
}

fn cell_means(records: &[entropic_ot::experiments::ExperimentRecord]) -> (Vec<(f64, f64)>, usize) {
    let cells = summarize(records);
    let invalid = cells.iter().filter(|c| !c.valid).count();
    (cells.iter().map(|c| (c.n as f64, c.mean_abs_dev)).collect(), invalid)
}

fn criterion_8() -> Verdict {
    let cfg = ExperimentConfig {
        atoms: 10,
        reps: 200,
        pop_n: 8000,
        ..ExperimentConfig::new(Setting::Semidiscrete, 10, 10, vec![0.25], vec![100, 200, 400, 800, 1600], Seed(8))
    };
    let run = run_experiment(&cfg).unwrap();
    let (cells, invalid) = cell_means(&run.records);
    let fit = rate_fit(&cells).unwrap();
    let curve: Vec<String> = cells.iter().map(|(n, d)| format!("{n}:{d:.3e}")).collect();
    verdict(
        (-0.62..=-0.38).contains(&fit.slope) && invalid == 0,
        format!("slope {:.4} (r2 {:.3}), {invalid} invalid cells, [{}]", fit.slope, fit.r_squared, curve.join(" ")),
    )
}

fn criterion_9() -> Verdict {
    let n_grid: Vec<usize> = (1..=10).map(|k| 100 * k).collect();
    let mut curves = Vec::new();
    let mut invalid = 0;
    for d1 in [6usize, 8, 10] {
        let cfg = ExperimentConfig { reps: 200, ..ExperimentConfig::new(Setting::Cube, d1, 5, vec![1.0], n_grid.clone(), Seed(9)) };
        let run = run_experiment(&cfg).unwrap();
        let (cells, bad) = cell_means(&run.records);
        invalid += bad;
        curves.push((d1, cells));
    }
    // Relative to the smaller of the two deviations.
    let mut worst = 0.0f64;
    let mut at = (0, 0, 0.0);
    for i in 0..curves.len() {
        for j in (i + 1)..curves.len() {
            for (a, b) in curves[i].1.iter().zip(&curves[j].1) {
                let rel = (a.1 - b.1).abs() / a.1.min(b.1);
                if rel > worst {
                    worst = rel;
                    at = (curves[i].0, curves[j].0, a.0);
                }
            }
        }
    }
    let summary: Vec<String> = curves
        .iter()
        .map(|(d1, c)| format!("d1={d1}: {}", c.iter().map(|p| format!("{:.3e}", p.1)).collect::<Vec<_>>().join(" ")))
        .collect();
    verdict(
        worst <= 0.30 && invalid == 0,
        format!("max pairwise relative gap {worst:.3} (d1 {} vs {} at n={}), {invalid} invalid cells; {}", at.0, at.1, at.2, summary.join("; ")),
    )
}

fn criterion_10() -> Verdict {
    let mut worst_self = 0.0f64;
    let mut worst_sym = 0.0f64;
    for t in 0..100 {
        let mut rng = rng_for(10, t);
        let d = rng.random_range(1..=4);
        let mu = { let n = rng.random_range(2..=60); random_measure(&mut rng, n, d) };
        let nu = { let n = rng.random_range(2..=60); random_measure(&mut rng, n, d) };
        let spec = random_cost(&mut rng, d);
        let cfg = SinkhornConfig::new(log_uniform(&mut rng, 0.05, 5.0));
        worst_self = worst_self.max(sinkhorn_divergence(&mu, &mu, &spec, cfg).unwrap().value.abs());
        let ab = sinkhorn_divergence(&mu, &nu, &spec, cfg).unwrap().value;
        let ba = sinkhorn_divergence(&nu, &mu, &spec, cfg).unwrap().value;
        worst_sym = worst_sym.max((ab - ba).abs());
    }
    verdict(
        worst_self <= 1e-6 && worst_sym <= 1e-6,
        format!("max |S(mu,mu)| {worst_self:.3e}, max asymmetry {worst_sym:.3e}"),
    )
}

fn criterion_11() -> Verdict {
    let mut worst_rise = f64::NEG_INFINITY;
    for t in 0..100 {
        let mut rng = rng_for(11, t);
        let (n, d) = (rng.random_range(2..=8), rng.random_range(1..=3));
        let mu = center(&random_measure(&mut rng, n, d));
        let (n, d) = (rng.random_range(2..=8), rng.random_range(1..=3));
        let nu = center(&random_measure(&mut rng, n, d));
        let cfg = GwConfig::new(log_uniform(&mut rng, 0.05, 1.0));
        let sol = gw2_solve(&mu, &nu, &cfg).unwrap();
        for w in sol.objective_trace.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }

    let mut worst_inv = 0.0f64;
    for t in 0..20 {
        let mut rng = rng_for(11, 1000 + t);
        let d = rng.random_range(2..=3);
        let mu = { let n = rng.random_range(3..=8); random_measure(&mut rng, n, d) };
        let (m, dn) = (rng.random_range(3..=8), rng.random_range(1..=3));
        let nu = random_measure(&mut rng, m, dn);
        let q = random_orthonormal(&mut rng, d, d);
        let shift = Array1::from_shape_simple_fn(d, || 4.0 * rng.random::<f64>() - 2.0);
        let moved = DiscreteMeasure::new(mu.points().dot(&q.t()) + shift.view().insert_axis(ndarray::Axis(0)), mu.weights().clone()).unwrap();
        let cfg = GwConfig::new(log_uniform(&mut rng, 0.1, 1.0));
        let base = entropic_gw(&mu, &nu, &cfg).unwrap().value;
        let rotated = entropic_gw(&moved, &nu, &cfg).unwrap().value;
        let self_gw = entropic_gw(&mu, &mu, &cfg).unwrap().value;
        let self_moved = entropic_gw(&mu, &moved, &cfg).unwrap().value;
        worst_inv = worst_inv.max((base - rotated).abs()).max((self_gw - self_moved).abs());
    }

    let mut worst_grid = 0.0f64;
    let mut grid_ok = true;
    for t in 0..20 {
        let mut rng = rng_for(11, 2000 + t);
        let tiny = |rng: &mut SplitMix64| {
            let n = rng.random_range(1..=3);
            let pts = random_points(rng, n, 1) * 2.0 - 1.0;
            center(&DiscreteMeasure::new(pts, Array1::from_shape_simple_fn(n, || 0.1 + rng.random::<f64>())).unwrap())
        };
        let mu = tiny(&mut rng);
        let nu = tiny(&mut rng);
        let eps = log_uniform(&mut rng, 0.1, 1.0);
        let cfg = GwConfig { restarts: 4, seed: Seed(t), ..GwConfig::new(eps) };
        let solver = gw2_solve(&mu, &nu, &cfg).unwrap().value;
        let r = diameter(&mu).max(diameter(&nu));
        let bound = r * r / 2.0;
        let k = 2000;
        let h = 2.0 * bound / k as f64;
        let grid_min = (0..=k)
            .map(|i| {
                let a = Array2::from_elem((1, 1), -bound + i as f64 * h);
                gw_objective(&mu, &nu, &a, cfg.inner).unwrap().0
            })
            .fold(f64::INFINITY, f64::min);
        // f'' ≤ 64 since A ↦ OT_{c_A,ε} is concave, so the grid overshoots the minimum by at most 8h².
        let resolution = 8.0 * h * h;
        let gap = solver - grid_min;
        worst_grid = worst_grid.max(gap.abs() / resolution);
        if gap.abs() > resolution {
            grid_ok = false;
        }
    }
    verdict(
        worst_rise <= 1e-10 && worst_inv <= 1e-6 && grid_ok,
        format!(
            "max trace increase {worst_rise:.3e}, max invariance gap {worst_inv:.3e}, grid: max |gap| / resolution {worst_grid:.3}{}",
            if grid_ok { "" } else { " (outside)" }
        ),
    )
}

fn criterion_12() -> Verdict {
    let mut mismatches = Vec::new();
    for setting in [Setting::Cube, Setting::Surface, Setting::Semidiscrete, Setting::SinkhornDivergence] {
        let d2 = if setting == Setting::Semidiscrete { 4 } else { 3 };
        let cfg = ExperimentConfig {
            reps: 6,
            pop_n: 200,
            pop_reps: 3,
            atoms: 5,
            ..ExperimentConfig::new(setting, 4, d2, vec![0.5, 1.0], vec![50, 100], Seed(12))
        };
        let a = csv_string(&run_experiment(&cfg).unwrap().records);
        let b = csv_string(&run_experiment(&cfg).unwrap().records);
        if a != b {
            mismatches.push(setting.as_str());
        }
    }
    verdict(mismatches.is_empty(), format!("4 settings rerun, mismatched: {mismatches:?}"))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 12] = [
        (1, "transform contraction", criterion_1),
        (2, "duality gap", criterion_2),
        (3, "brute-force oracle", criterion_3),
        (4, "gaussian oracle agreement", criterion_4),
        (5, "gaussian LCA identity", criterion_5),
        (6, "projective decomposition", criterion_6),
        (7, "rescaling identity", criterion_7),
        (8, "semi-discrete parametric rate", criterion_8),
        (9, "cube LCA coincidence", criterion_9),
        (10, "sinkhorn divergence identity", criterion_10),
        (11, "gromov-wasserstein sanity", criterion_11),
        (12, "determinism", criterion_12),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{status} {id:>2} {name}: {} [{:.1} s]", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
