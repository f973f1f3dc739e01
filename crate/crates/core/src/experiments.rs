//! Monte Carlo harness for the mean absolute deviation
//! Δ_n = E|ÔT_n − OT| of plug-in EOT estimators.
//!
//! Every repetition draws its samples from a stream derived from
//! (master seed, setting, ε-index, n, rep), so a sweep is a pure function of
//! its config and can run repetitions in parallel.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::measure::{fixed_discrete_support, sample_cube, sample_surface, DiscreteMeasure, Seed, SurfaceKind};
use crate::sinkhorn::{sinkhorn_divergence, sinkhorn_solve, SinkhornConfig};

pub const CSV_HEADER: &str = "setting,d1,d2,eps,n,rep,estimate,abs_dev,iterations,wall_ms,converged";

/// Cells with a larger share of non-converged runs are reported invalid.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Cube,
    Surface,
    Semidiscrete,
    SinkhornDivergence,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Cube => "cube",
            Setting::Surface => "surface",
            Setting::Semidiscrete => "semidiscrete",
            Setting::SinkhornDivergence => "sinkhorn_divergence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Setting::Cube, Setting::Surface, Setting::Semidiscrete, Setting::SinkhornDivergence]
            .into_iter()
            .find(|k| k.as_str() == s)
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    SqEuclidean,
    L1,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// OT(μ, ν̂_n) with μ kept exact; semidiscrete only.
    OneSample,
    /// OT(μ̂_n, ν̂_n).
    TwoSample,
}

fn default_reps() -> usize {
    200
}
fn default_pop_n() -> usize {
    3000
}
fn default_pop_reps() -> usize {
    20
}
fn default_atoms() -> usize {
    10
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub d1: usize,
    pub d2: usize,
    /// Defaults to squared Euclidean, or L∞ for the semidiscrete setting.
    #[serde(default)]
    pub cost: Option<CostVariant>,
    /// Divide the cost by d1 ∨ d2. Defaults to true except for the semidiscrete setting.
    #[serde(default)]
    pub normalize: Option<bool>,
    pub eps_list: Vec<f64>,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_pop_n")]
    pub pop_n: usize,
    #[serde(default = "default_pop_reps")]
    pub pop_reps: usize,
    /// Number of fixed atoms of μ in the semidiscrete setting.
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    /// Defaults to one-sample for the semidiscrete setting, two-sample otherwise.
    #[serde(default)]
    pub estimator: Option<Estimator>,
    pub seed: Seed,
    #[serde(default = "default_tol")]
    pub marginal_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Record wall-clock times; off by default since timings break byte-identical reruns.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(setting: Setting, d1: usize, d2: usize, eps_list: Vec<f64>, n_grid: Vec<usize>, seed: Seed) -> Self {
        Self {
            setting,
            d1,
            d2,
            cost: None,
            normalize: None,
            eps_list,
            n_grid,
            reps: default_reps(),
            pop_n: default_pop_n(),
            pop_reps: default_pop_reps(),
            atoms: default_atoms(),
            estimator: None,
            seed,
            marginal_tol: default_tol(),
            max_iters: default_max_iters(),
            record_timing: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.d1 == 0 || self.d2 == 0 {
            return bad("d1 and d2 must be at least 1");
        }
        if self.setting == Setting::Semidiscrete && self.d1 != self.d2 {
            return bad("semidiscrete setting needs d1 == d2");
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("eps_list must be non-empty with positive finite entries");
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n_grid must be non-empty with positive entries");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly ascending");
        }
        if self.reps == 0 || self.pop_n == 0 || self.pop_reps == 0 || self.atoms == 0 {
            return bad("reps, pop_n, pop_reps and atoms must be at least 1");
        }
        if !(self.marginal_tol > 0.0) || self.max_iters == 0 {
            return bad("marginal_tol and max_iters must be positive");
        }
        if self.estimator() == Estimator::OneSample && self.setting != Setting::Semidiscrete {
            return bad("the one-sample estimator needs the semidiscrete setting");
        }
        Ok(())
    }

    pub fn cost_variant(&self) -> CostVariant {
        self.cost.unwrap_or(match self.setting {
            Setting::Semidiscrete => CostVariant::Linf,
            _ => CostVariant::SqEuclidean,
        })
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator.unwrap_or(match self.setting {
            Setting::Semidiscrete => Estimator::OneSample,
            _ => Estimator::TwoSample,
        })
    }

    /// Ambient dimension d1 ∨ d2 shared by both measures.
    pub fn ambient_dim(&self) -> usize {
        self.d1.max(self.d2)
    }

    pub fn cost_spec(&self) -> Result<CostSpec> {
        let scale = if self.normalize.unwrap_or(self.setting != Setting::Semidiscrete) {
            1.0 / self.ambient_dim() as f64
        } else {
            1.0
        };
        match self.cost_variant() {
            CostVariant::SqEuclidean => CostSpec::sq_euclidean(scale),
            CostVariant::L1 => CostSpec::l1(scale),
            CostVariant::Linf => Ok(CostSpec { scale, ..CostSpec::linf() }),
        }
    }

    fn solver(&self, eps: f64) -> SinkhornConfig {
        SinkhornConfig::new(eps).with_tol(self.marginal_tol).with_max_iters(self.max_iters)
    }

    /// Atoms of μ in the semidiscrete setting, fixed by the master seed alone.
    pub fn fixed_atoms(&self) -> Result<DiscreteMeasure> {
        fixed_discrete_support(self.atoms, self.d1, self.seed.derive(&[self.setting.tag(), FIXED_STREAM]))
    }
}

const REP_STREAM: u64 = 1;
const POP_STREAM: u64 = 2;
const FIXED_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub setting: Setting,
    pub d1: usize,
    pub d2: usize,
    pub eps: f64,
    pub n: usize,
    pub rep: usize,
    pub estimate: f64,
    pub abs_dev: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub converged: bool,
    /// Var_μ̂(φ) + Var_ν̂(ψ); not part of the CSV.
    #[serde(skip)]
    pub potential_var: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// One plug-in estimate together with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub potential_var: Option<f64>,
}

fn draw_uniform_resample(m: &DiscreteMeasure, n: usize, seed: Seed) -> Result<DiscreteMeasure> {
    let mut rng = seed.rng();
    let cdf: Vec<f64> = m
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut points = Array2::zeros((n, m.dim()));
    for mut row in points.rows_mut() {
        let u = rng.random::<f64>() * cdf[cdf.len() - 1];
        let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        row.assign(&m.point(k));
    }
    DiscreteMeasure::uniform(points)
}

/// Plug-in estimate at sample size `n` with samples drawn from `seed`.
pub fn plug_in_estimate(cfg: &ExperimentConfig, eps: f64, n: usize, seed: Seed) -> Result<Estimate> {
    let spec = cfg.cost_spec()?;
    let solver = cfg.solver(eps);
    let big = cfg.ambient_dim();
    let (mu, nu) = match cfg.setting {
        Setting::Cube | Setting::SinkhornDivergence => (
            sample_cube(cfg.d1, big, n, seed.derive(&[0]))?,
            sample_cube(cfg.d2, big, n, seed.derive(&[1]))?,
        ),
        Setting::Surface => (
            sample_surface(SurfaceKind::T, cfg.d1, big - cfg.d1, n, seed.derive(&[0]))?,
            sample_surface(SurfaceKind::S, cfg.d2, big - cfg.d2, n, seed.derive(&[1]))?,
        ),
        Setting::Semidiscrete => {
            let atoms = cfg.fixed_atoms()?;
            let mu = match cfg.estimator() {
                Estimator::OneSample => atoms,
                Estimator::TwoSample => draw_uniform_resample(&atoms, n, seed.derive(&[0]))?,
            };
            (mu, sample_cube(cfg.d2, big, n, seed.derive(&[1]))?)
        }
    };
    if cfg.setting == Setting::SinkhornDivergence {
        let div = sinkhorn_divergence(&mu, &nu, &spec, solver)?;
        return Ok(Estimate { value: div.value, iterations: div.iterations, converged: div.converged, potential_var: None });
    }
    let sol = sinkhorn_solve(&mu, &nu, &spec, solver)?;
    Ok(Estimate {
        value: sol.dual_value,
        iterations: sol.iterations,
        converged: sol.converged,
        potential_var: Some(sol.potential_variance(&mu, &nu)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationValue {
    pub eps: f64,
    pub value: f64,
    pub stderr: f64,
    pub runs: usize,
    pub failures: usize,
}

/// Mean of `pop_reps` plug-in estimates at sample size `pop_n`; non-converged runs are excluded.
pub fn approximate_population(cfg: &ExperimentConfig, eps_index: usize) -> Result<PopulationValue> {
    cfg.validate()?;
    let eps = *cfg
        .eps_list
        .get(eps_index)
        .ok_or_else(|| Error::InvalidConfig(format!("eps index {eps_index} out of range")))?;
    let runs: Vec<Estimate> = (0..cfg.pop_reps)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.derive(&[cfg.setting.tag(), POP_STREAM, eps_index as u64, cfg.pop_n as u64, r as u64]);
            plug_in_estimate(cfg, eps, cfg.pop_n, seed)
        })
        .collect::<Result<_>>()?;
    let good: Vec<f64> = runs.iter().filter(|e| e.converged).map(|e| e.value).collect();
    let (value, stderr) = mean_abs_dev(&good)?;
    Ok(PopulationValue { eps, value, stderr, runs: runs.len(), failures: runs.len() - good.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub population: Vec<PopulationValue>,
    /// Ordered by (ε-index, n, rep).
    pub records: Vec<ExperimentRecord>,
}

/// Full sweep over eps_list × n_grid × reps.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let population = (0..cfg.eps_list.len()).map(|k| approximate_population(cfg, k)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.eps_list.len())
        .flat_map(|k| cfg.n_grid.iter().flat_map(move |&n| (0..cfg.reps).map(move |r| (k, n, r))))
        .collect();
    let records = jobs
        .into_par_iter()
        .map(|(k, n, rep)| {
            let eps = cfg.eps_list[k];
            let seed = cfg.seed.derive(&[cfg.setting.tag(), REP_STREAM, k as u64, n as u64, rep as u64]);
            let start = Instant::now();
            let est = plug_in_estimate(cfg, eps, n, seed)?;
            let wall_ms = if cfg.record_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            Ok(ExperimentRecord {
                setting: cfg.setting,
                d1: cfg.d1,
                d2: cfg.d2,
                eps,
                n,
                rep,
                estimate: est.value,
                abs_dev: (est.value - population[k].value).abs(),
                iterations: est.iterations,
                wall_ms,
                converged: est.converged,
                potential_var: est.potential_var,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRun { population, records })
}

/// Sample mean and standard error (sample sd / √k).
pub fn mean_abs_dev(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyCell);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

/// Ordinary least squares of log Δ on log n over the cells with Δ > 0.
pub fn rate_fit(cells: &[(f64, f64)]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = cells.iter().filter(|(n, d)| *n > 0.0 && *d > 0.0).map(|(n, d)| (n.ln(), d.ln())).collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return Err(Error::DegenerateFit);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit);
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit { slope, intercept: my - slope * mx, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub eps: f64,
    pub n: usize,
    pub mean_abs_dev: f64,
    pub stderr: f64,
    pub runs: usize,
    pub failures: usize,
    pub valid: bool,
    /// Mean of Var(φ) + Var(ψ) over converged runs, when available.
    pub mean_potential_var: Option<f64>,
}

/// Aggregates records per (ε, n), excluding non-converged runs. Cells come out
/// sorted by (ε, n) whatever the record order.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(u64, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.eps.to_bits(), r.n)).or_default().push(r);
    }
    let mut out: Vec<CellSummary> = cells
        .into_values()
        .map(|mut group| {
            // Fixed summation order keeps the aggregates independent of record order.
            group.sort_by(|a, b| a.rep.cmp(&b.rep).then(a.estimate.total_cmp(&b.estimate)));
            let good: Vec<&ExperimentRecord> = group.iter().copied().filter(|r| r.converged).collect();
            let devs: Vec<f64> = good.iter().map(|r| r.abs_dev).collect();
            let (mean, stderr) = mean_abs_dev(&devs).unwrap_or((f64::NAN, f64::NAN));
            let failures = group.len() - good.len();
            let vars: Vec<f64> = good.iter().filter_map(|r| r.potential_var).collect();
            CellSummary {
                eps: group[0].eps,
                n: group[0].n,
                mean_abs_dev: mean,
                stderr,
                runs: group.len(),
                failures,
                valid: !good.is_empty() && failures as f64 <= MAX_FAILURE_RATE * group.len() as f64,
                mean_potential_var: (!vars.is_empty()).then(|| vars.iter().sum::<f64>() / vars.len() as f64),
            }
        })
        .collect();
    out.sort_by(|a, b| a.eps.total_cmp(&b.eps).then(a.n.cmp(&b.n)));
    out
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.setting.as_str().to_string(),
            r.d1.to_string(),
            r.d2.to_string(),
            fmt_exact(r.eps),
            r.n.to_string(),
            r.rep.to_string(),
            fmt_exact(r.estimate),
            fmt_exact(r.abs_dev),
            r.iterations.to_string(),
            fmt_exact(r.wall_ms),
            r.converged.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(records: &[ExperimentRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses a CSV written by [`write_csv`]. Line numbers in errors are 1-based.
pub fn read_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Parse { line: 1, message: format!("expected header `{CSV_HEADER}`") });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let f = row.map_err(csv_error)?;
        let line_no = f.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| Error::Parse { line: line_no, message };
        if f.len() != 11 {
            return Err(err(format!("expected 11 fields, found {}", f.len())));
        }
        let int = |k: usize| f[k].parse::<usize>().map_err(|e| err(format!("field {}: {e}", k + 1)));
        let real = |k: usize| f[k].parse::<f64>().map_err(|e| err(format!("field {}: {e}", k + 1)));
        out.push(ExperimentRecord {
            setting: Setting::parse(&f[0]).ok_or_else(|| err(format!("unknown setting `{}`", &f[0])))?,
            d1: int(1)?,
            d2: int(2)?,
            eps: real(3)?,
            n: int(4)?,
            rep: int(5)?,
            estimate: real(6)?,
            abs_dev: real(7)?,
            iterations: int(8)?,
            wall_ms: real(9)?,
            converged: f[10].parse::<bool>().map_err(|e| err(format!("field 11: {e}")))?,
            potential_var: None,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub master_seed: Seed,
    /// Δ̂_n is measured against these Monte Carlo approximations, not exact values.
    pub population: Vec<PopulationValue>,
    pub cells: Vec<CellSummary>,
    pub total_failures: usize,
    pub invalid_cells: usize,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, run: &ExperimentRun) -> Self {
        let cells = summarize(&run.records);
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            master_seed: cfg.seed,
            population: run.population.clone(),
            total_failures: run.records.iter().filter(|r| !r.converged).count(),
            invalid_cells: cells.iter().filter(|c| !c.valid).count(),
            cells,
        }
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Parses the plain-text measure format: one atom per line as `w x1 … xd`,
/// `#` starts a comment. Weights are renormalized.
pub fn parse_measure(text: &str) -> Result<DiscreteMeasure> {
    let mut weights = Vec::new();
    let mut coords = Vec::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let vals = body
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line: line_no, message: format!("not a number: `{t}`") }))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() < 2 {
            return Err(Error::Parse { line: line_no, message: "expected a weight followed by at least one coordinate".into() });
        }
        match dim {
            None => dim = Some(vals.len() - 1),
            Some(d) if d != vals.len() - 1 => {
                return Err(Error::Parse { line: line_no, message: format!("expected {d} coordinates, found {}", vals.len() - 1) });
            }
            _ => {}
        }
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse { line: line_no, message: format!("non-finite value {v}") });
        }
        if vals[0] < 0.0 {
            return Err(Error::Parse { line: line_no, message: format!("negative weight {}", vals[0]) });
        }
        weights.push(vals[0]);
        coords.extend_from_slice(&vals[1..]);
    }
    let d = dim.ok_or(Error::EmptySupport)?;
    let points = Array2::from_shape_vec((weights.len(), d), coords).map_err(|e| Error::BadDimensions(e.to_string()))?;
    DiscreteMeasure::new(points, weights.into())
}

/// Inverse of [`parse_measure`] with exact round-trip formatting.
pub fn format_measure(m: &DiscreteMeasure) -> String {
    let mut s = String::new();
    for (i, w) in m.weights().iter().enumerate() {
        s.push_str(&fmt_exact(*w));
        for x in m.point(i) {
            s.push(' ');
            s.push_str(&fmt_exact(*x));
        }
        s.push('\n');
    }
    s
}

/// One curve of a log-log figure.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub setting: Setting,
    pub d1: usize,
    pub eps: f64,
    /// (n, Δ̂_n) sorted by n.
    pub points: Vec<(f64, f64)>,
    pub fit: Option<RateFit>,
}

impl Series {
    pub fn label(&self) -> String {
        format!("{} d1={} eps={}", self.setting.as_str(), self.d1, self.eps)
    }
}

/// Groups converged records by (setting, d1, ε) and averages each n-cell.
pub fn series_from_records(records: &[ExperimentRecord]) -> Vec<Series> {
    let mut groups: BTreeMap<(Setting, usize, u64), Vec<ExperimentRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.setting, r.d1, r.eps.to_bits())).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|((setting, d1, eps), recs)| {
            let points: Vec<(f64, f64)> = summarize(&recs)
                .into_iter()
                .filter(|c| c.mean_abs_dev.is_finite())
                .map(|c| (c.n as f64, c.mean_abs_dev))
                .collect();
            let fit = rate_fit(&points).ok();
            Series { setting, d1, eps: f64::from_bits(eps), points, fit }
        })
        .collect()
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn decade_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(f64::log10)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// Self-contained log-log SVG with one polyline per series, a dashed
/// slope −1/2 guide through each series' first point and the fitted slope in the legend.
pub fn render_svg(series: &[Series]) -> String {
    let (w, h) = (760.0, 480.0);
    let (left, right, top, bottom) = (70.0, 250.0, 20.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = decade_range(all().map(|p| p.0));
    let (y0, y1) = decade_range(all().map(|p| p.1));
    let sx = |n: f64| left + (n.log10() - x0) / (x1 - x0) * pw;
    let sy = |d: f64| top + (y1 - d.log10()) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<defs><clipPath id="plot"><rect x="{left}" y="{top}" width="{pw}" height="{ph}"/></clipPath></defs>"#);
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in (x0 as i64)..=(x1 as i64) {
        let x = sx(10f64.powi(k as i32));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, top + ph, top + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"#, top + ph + 18.0);
    }
    for k in (y0 as i64)..=(y1 as i64) {
        let y = sy(10f64.powi(k as i32));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#, left - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">n</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">mean absolute deviation</text>"#, top + ph / 2.0, top + ph / 2.0);

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
        if let Some(&(n0, d0)) = ser.points.first() {
            // Δ = d0 (n / n0)^(−1/2) across the full x range.
            let (na, nb) = (10f64.powf(x0), 10f64.powf(x1));
            let guide = |n: f64| d0 * (n / n0).powf(-0.5);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="4 4" stroke-opacity="0.6"/>"#,
                sx(na),
                sy(guide(na)),
                sx(nb),
                sy(guide(nb))
            );
        }
        let pts: Vec<String> = ser.points.iter().map(|&(n, d)| format!("{:.2},{:.2}", sx(n), sy(d))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        for &(n, d) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(n), sy(d));
        }
        let _ = writeln!(s, "</g>");
        let slope = ser.fit.map_or("n/a".to_string(), |f| format!("{:.2}", f.slope));
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 18.0, ly - 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}">{} slope {slope}</text>"#,
            lx + 24.0,
            escape_xml(&ser.label())
        );
    }
    let ly = top + 14.0 + 18.0 * series.len() as f64;
    let lx = left + pw + 12.0;
    let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 4"/>"#, ly - 4.0, lx + 18.0, ly - 4.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">slope -1/2 guide</text>"#, lx + 24.0);
    s.push_str("</svg>\n");
    s
}
