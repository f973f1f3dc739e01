use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};
use serde::Deserialize;

use entropic_ot::experiments::{
    fmt_exact, parse_measure, read_csv, render_svg, run_experiment, series_from_records, summarize, write_atomic, csv_string,
    ExperimentConfig, RunManifest,
};
use entropic_ot::gaussian::{gaussian_eot, GaussianParam};
use entropic_ot::gromov::{entropic_gw, GwConfig};
use entropic_ot::{sinkhorn_solve, CostSpec, DiscreteMeasure, Error, Seed, SinkhornConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "eot", version, about = "Entropic optimal transport solver and Monte Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve EOT between two measure files (`w x1 … xd` per line).
    Solve(SolveArgs),
    /// Closed-form EOT between two Gaussians given as JSON.
    Gaussian(GaussianArgs),
    /// Entropic Gromov-Wasserstein distance between two measure files.
    Gw(GwArgs),
    /// Run a Monte Carlo sweep from a JSON config.
    Experiment(ExperimentArgs),
    /// Render log-log figures from experiment CSVs.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    SqEuclidean,
    L1,
    Linf,
}

#[derive(Args)]
struct SolveArgs {
    mu: PathBuf,
    nu: PathBuf,
    #[arg(long, value_enum, default_value = "sq-euclidean")]
    cost: CostArg,
    /// Multiplies the cost.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: usize,
    /// Write a machine-readable report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GaussianArgs {
    /// JSON with `mean1`, `cov1`, `mean2`, `cov2`.
    input: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GwArgs {
    mu: PathBuf,
    nu: PathBuf,
    #[arg(long)]
    eps: f64,
    /// Inner Sinkhorn tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    gw_restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Replaces eps_list; comma-separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianPair {
    mean1: Vec<f64>,
    cov1: Vec<Vec<f64>>,
    mean2: Vec<f64>,
    cov2: Vec<Vec<f64>>,
}

/// A failure and the exit code it maps to.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ABoundViolated { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_USAGE,
        };
        Failure(code, e.to_string())
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn read(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn read_measure(path: &Path) -> std::result::Result<DiscreteMeasure, Failure> {
    parse_measure(&read(path)?).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", path.display())))
}

/// Six significant digits for human-facing output.
fn human(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

/// JSON object with exact float formatting; values are pre-rendered JSON.
fn json_object(fields: &[(&str, String)]) -> String {
    let mut s = String::from("{\n");
    for (i, (k, v)) in fields.iter().enumerate() {
        let _ = write!(s, "  \"{k}\": {v}");
        s.push_str(if i + 1 < fields.len() { ",\n" } else { "\n" });
    }
    s.push_str("}\n");
    s
}

fn json_matrix(a: &Array2<f64>) -> String {
    let rows: Vec<String> = a.rows().into_iter().map(|r| format!("[{}]", r.iter().map(|x| fmt_exact(*x)).collect::<Vec<_>>().join(", "))).collect();
    format!("[{}]", rows.join(", "))
}

fn write_json(path: &Option<PathBuf>, fields: &[(&str, String)]) -> std::result::Result<(), Failure> {
    if let Some(p) = path {
        write_atomic(p, json_object(fields).as_bytes())?;
    }
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Outcome {
    let mu = read_measure(&a.mu)?;
    let nu = read_measure(&a.nu)?;
    let spec = match a.cost {
        CostArg::SqEuclidean => CostSpec::sq_euclidean(a.scale)?,
        CostArg::L1 => CostSpec::l1(a.scale)?,
        CostArg::Linf => CostSpec { scale: a.scale, ..CostSpec::linf() },
    };
    let cfg = SinkhornConfig::new(a.eps).with_tol(a.tol).with_max_iters(a.max_iters);
    cfg.validate()?;
    let sol = sinkhorn_solve(&mu, &nu, &spec, cfg)?;
    println!("dual value       {}", human(sol.dual_value));
    println!("primal value     {}", human(sol.primal_value));
    println!("iterations       {}", sol.iterations);
    println!("marginal err mu  {}", human(sol.marginal_err_mu));
    println!("marginal err nu  {}", human(sol.marginal_err_nu));
    println!("converged        {}", sol.converged);
    write_json(
        &a.json,
        &[
            ("dual_value", fmt_exact(sol.dual_value)),
            ("primal_value", fmt_exact(sol.primal_value)),
            ("iterations", sol.iterations.to_string()),
            ("marginal_err_mu", fmt_exact(sol.marginal_err_mu)),
            ("marginal_err_nu", fmt_exact(sol.marginal_err_nu)),
            ("converged", sol.converged.to_string()),
        ],
    )?;
    if sol.converged {
        Ok(0)
    } else {
        eprintln!("warning: Sinkhorn did not reach the marginal tolerance");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> std::result::Result<Array2<f64>, Failure> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Failure(EXIT_USAGE, "covariance must be square".into()));
    }
    Ok(Array2::from_shape_fn((d, d), |(i, j)| rows[i][j]))
}

fn cmd_gaussian(a: GaussianArgs) -> Outcome {
    let pair: GaussianPair = serde_json::from_str(&read(&a.input)?).map_err(Error::from)?;
    let p = GaussianParam::new(Array1::from(pair.mean1), to_matrix(&pair.cov1)?)?;
    let q = GaussianParam::new(Array1::from(pair.mean2), to_matrix(&pair.cov2)?)?;
    let value = gaussian_eot(&p, &q, a.eps)?;
    println!("gaussian eot     {}", human(value));
    write_json(&a.json, &[("value", fmt_exact(value))])?;
    Ok(0)
}

fn cmd_gw(a: GwArgs) -> Outcome {
    let mu = read_measure(&a.mu)?;
    let nu = read_measure(&a.nu)?;
    let mut cfg = GwConfig::new(a.eps);
    cfg.inner = cfg.inner.with_tol(a.tol);
    cfg.restarts = a.gw_restarts;
    cfg.seed = Seed(a.seed);
    let v = entropic_gw(&mu, &nu, &cfg)?;
    println!("entropic gw      {}", human(v.value));
    println!("moment term      {}", human(v.gw11));
    println!("eot term         {}", human(v.gw2.value));
    println!("outer iterations {}", v.gw2.outer_iters);
    println!("converged        {}", v.gw2.converged);
    write_json(
        &a.json,
        &[
            ("value", fmt_exact(v.value)),
            ("gw11", fmt_exact(v.gw11)),
            ("gw2", fmt_exact(v.gw2.value)),
            ("a", json_matrix(&v.gw2.a)),
            ("outer_iters", v.gw2.outer_iters.to_string()),
            ("converged", v.gw2.converged.to_string()),
        ],
    )?;
    Ok(if v.gw2.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_experiment(a: ExperimentArgs) -> Outcome {
    let mut cfg: ExperimentConfig = serde_json::from_str(&read(&a.config)?).map_err(Error::from)?;
    if let Some(s) = a.seed {
        cfg.seed = Seed(s);
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(e) = a.eps {
        cfg.eps_list = e;
    }
    if let Some(t) = a.tol {
        cfg.marginal_tol = t;
    }
    cfg.validate()?;
    let run = run_experiment(&cfg)?;
    write_atomic(&a.out_csv, csv_string(&run.records).as_bytes())?;
    let manifest = RunManifest::new(&cfg, &run);
    if let Some(p) = &a.manifest {
        let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
        write_atomic(p, text.as_bytes())?;
    }
    println!("{:>10} {:>8} {:>14} {:>14} {:>6} {:>8}", "eps", "n", "mean_abs_dev", "stderr", "fails", "valid");
    for c in summarize(&run.records) {
        println!("{:>10} {:>8} {:>14} {:>14} {:>6} {:>8}", human(c.eps), c.n, human(c.mean_abs_dev), human(c.stderr), c.failures, c.valid);
    }
    if manifest.total_failures > 0 {
        eprintln!("warning: {} solver runs did not converge; {} cells invalid", manifest.total_failures, manifest.invalid_cells);
    }
    Ok(0)
}

fn cmd_plot(a: PlotArgs) -> Outcome {
    let mut records = Vec::new();
    for p in &a.csv {
        let recs = read_csv(&read(p)?).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", p.display())))?;
        records.extend(recs);
    }
    if records.is_empty() {
        return Err(Failure(EXIT_USAGE, "no data rows in the input CSVs".into()));
    }
    let series = series_from_records(&records);
    for s in &series {
        let slope = s.fit.map_or("n/a".to_string(), |f| human(f.slope));
        println!("{}: slope {slope}", s.label());
    }
    write_atomic(&a.out, render_svg(&series).as_bytes())?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Gaussian(a) => cmd_gaussian(a),
        Command::Gw(a) => cmd_gw(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
