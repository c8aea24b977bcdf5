//! The `lvglasso` command-line driver.
//!
//! Every subcommand writes its outputs plus a `metadata.json` holding the
//! effective configuration, so a run can be repeated from that file alone.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::em::{self, EmConfig, EmFit, InitScheme};
use crate::error::{Error, Result};
use crate::eval::{self, EdgeSet, RocSeries, DEFAULT_ZERO_TOL};
use crate::glasso::GlassoConfig;
use crate::io;
use crate::matrix::SymMatrix;
use crate::simgen;

/// Relative cutoff used when reporting the numerical rank of `L_hat`.
const RANK_CUTOFF: f64 = 1e-8;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lvglasso", version, about = "Latent variable graphical lasso")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random latent-variable model and a sample from it.
    Simulate(SimulateArgs),
    /// Fit one λ and write S_hat, L_hat and K_hat.
    Fit(FitArgs),
    /// Fit a warm-started λ path and write per-λ summaries and supports.
    Path(PathArgs),
    /// Score a λ path against a simulated truth.
    Roc(RocArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Observed dimension.
    #[arg(long, default_value_t = 198)]
    pub p: usize,
    /// Number of latent variables.
    #[arg(long, default_value_t = 2)]
    pub h: usize,
    /// Sample size.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Model seed; the sample uses `seed + 1`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EmArgs {
    /// Rank bound on the low-rank component; 0 gives the plain graphical lasso.
    #[arg(long, default_value_t = 0)]
    pub r: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub em_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub em_max_iter: usize,
    /// Convergence tolerance of the inner graphical lasso.
    #[arg(long, default_value_t = 1e-6)]
    pub glasso_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_sweeps: usize,
    /// Seed for the random latent-observed block of the starting point.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Start every λ from scratch instead of from the previous fit.
    #[arg(long)]
    pub cold_start: bool,
}

impl EmArgs {
    fn config(&self, r: usize, lambda: f64) -> EmConfig {
        EmConfig {
            r,
            lambda,
            em_tol: self.em_tol,
            em_max_iter: self.em_max_iter,
            glasso: GlassoConfig {
                tol: self.glasso_tol,
                max_sweeps: self.max_sweeps,
                ..GlassoConfig::default()
            },
            init_scheme: if self.cold_start {
                InitScheme::DiagonalRegularized
            } else {
                InitScheme::WarmStart
            },
            init_seed: self.init_seed,
            ..EmConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Sample covariance CSV, or a directory written by `simulate`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PathArgs {
    /// Sample covariance CSV, or a directory written by `simulate`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `min,max,count[,log]`; defaults to 40 log-spaced values scaled to the data.
    #[arg(long)]
    pub lambda_grid: Option<GridSpec>,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
    pub zero_tol: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RocArgs {
    /// Directory written by `simulate`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub lambda_grid: Option<GridSpec>,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
    pub zero_tol: f64,
    /// Also score the plain graphical lasso (r = 0) on the same grid.
    #[arg(long)]
    pub compare: bool,
    /// Write `roc.svg` next to the CSV.
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// `min,max,count[,log]` from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub log_spaced: bool,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("expected min,max,count[,log], got {s:?}"));
        }
        let num = |x: &str| x.parse::<f64>().map_err(|_| format!("bad number {x:?}"));
        let count = parts[2]
            .parse::<usize>()
            .map_err(|_| format!("bad count {:?}", parts[2]))?;
        let log_spaced = match parts.get(3) {
            None => false,
            Some(&"log") => true,
            Some(other) => return Err(format!("fourth field must be \"log\", got {other:?}")),
        };
        Ok(GridSpec {
            min: num(parts[0])?,
            max: num(parts[1])?,
            count,
            log_spaced,
        })
    }
}

impl GridSpec {
    fn resolve(spec: Option<GridSpec>, sigma: &SymMatrix) -> Result<Vec<f64>> {
        match spec {
            Some(g) => em::lambda_grid(g.min, g.max, g.count, g.log_spaced),
            None => em::default_lambda_grid(sigma),
        }
    }
}

/// Maps a library error onto the documented exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input(_) | Error::Parse(_) => EXIT_INPUT,
        Error::NotPositiveDefinite(_) | Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io { .. } => EXIT_IO,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one subcommand. `Ok(EXIT_NUMERICAL)` means the outputs were written
/// but some fit stopped at its iteration limit.
pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Path(a) => cmd_path(a),
        Command::Roc(a) => cmd_roc(a),
    }
}

fn prepare_out_dir(input: Option<&Path>, out: &Path) -> Result<()> {
    if let Some(input) = input {
        if input == out {
            return Err(Error::Input(format!(
                "--in and --out-dir must differ, both are {}",
                out.display()
            )));
        }
    }
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })
}

/// Accepts either a covariance CSV or a `simulate` output directory.
fn sigma_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("sigma_o_n.csv")
    } else {
        input.to_path_buf()
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Input(format!("--{name} must be at least 1")));
    }
    Ok(())
}

fn check_tolerances(em: &EmArgs) -> Result<()> {
    if !(em.glasso_tol > 0.0) {
        return Err(Error::Input(format!(
            "--glasso-tol must be positive, got {}",
            em.glasso_tol
        )));
    }
    check_positive("max-sweeps", em.max_sweeps)
}

fn metadata(command: &str, args: &impl Serialize, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "effective": extra,
    })
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    check_positive("p", a.p)?;
    check_positive("n", a.n)?;
    prepare_out_dir(None, &a.out_dir)?;
    let data_seed = a.seed.wrapping_add(1);
    let model = simgen::generate_model(a.p, a.h, a.seed)?;
    let data = simgen::sample_data(&model, a.n, data_seed)?;

    let dir = &a.out_dir;
    io::write_matrix(&dir.join("k_true.csv"), model.k_true.as_matrix())?;
    io::write_text(
        &dir.join("edges.csv"),
        &io::edges_to_csv(model.true_edges.iter().copied()),
    )?;
    io::write_matrix(&dir.join("x.csv"), &data.x)?;
    io::write_matrix(&dir.join("sigma_o_n.csv"), data.sigma_o_n.as_matrix())?;
    let meta = metadata(
        "simulate",
        a,
        json!({
            "model_seed": a.seed,
            "data_seed": data_seed,
            "diag_value": model.diag_value,
            "edge_count": model.true_edges.len(),
            "locations": model.locations,
        }),
    );
    io::write_json(&dir.join("metadata.json"), &meta)?;
    println!(
        "wrote model (p = {}, h = {}, {} edges, diagonal {}) and {} samples to {}",
        a.p,
        a.h,
        model.true_edges.len(),
        model.diag_value,
        a.n,
        dir.display()
    );
    Ok(EXIT_OK)
}

fn fit_summary(fit: &EmFit, zero_tol: f64) -> serde_json::Value {
    let support = eval::support(&fit.s_hat, zero_tol);
    json!({
        "lambda": fit.lambda,
        "objective": fit.objective(),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "rank_l": fit.l_hat.numerical_rank(RANK_CUTOFF),
        "edge_count": support.len(),
        "m_step_kkt_residual": fit.m_step.kkt_residual,
    })
}

pub fn cmd_fit(a: &FitArgs) -> Result<i32> {
    check_tolerances(&a.em)?;
    prepare_out_dir(Some(&a.input), &a.out_dir)?;
    let input = sigma_path(&a.input);
    let sigma = io::read_sym_matrix(&input)?;
    let cfg = a.em.config(a.em.r, a.lambda);
    let fit = em::fit(&sigma, &cfg, None)?;

    let dir = &a.out_dir;
    io::write_matrix(&dir.join("s_hat.csv"), fit.s_hat.as_matrix())?;
    io::write_matrix(&dir.join("l_hat.csv"), fit.l_hat.as_matrix())?;
    io::write_matrix(&dir.join("k_hat.csv"), fit.partition.k().as_matrix())?;
    let mut report = fit_summary(&fit, DEFAULT_ZERO_TOL);
    report["objective_trace"] = json!(fit.observed_objective_trace);
    io::write_json(&dir.join("report.json"), &report)?;
    io::write_json(
        &dir.join("metadata.json"),
        &metadata(
            "fit",
            a,
            json!({ "sigma_file": input, "init_scheme": cfg.init_scheme }),
        ),
    )?;
    println!(
        "lambda {} objective {} iterations {} converged {}",
        fit.lambda,
        fit.objective(),
        fit.iterations,
        fit.converged
    );
    if fit.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: EM stopped at the iteration limit");
        Ok(EXIT_NUMERICAL)
    }
}

/// Fits the whole grid; a failed λ aborts the command.
fn run_path(sigma: &SymMatrix, lambdas: &[f64], cfg: &EmConfig) -> Result<Vec<EmFit>> {
    em::lambda_path(sigma, lambdas, cfg)?.into_iter().collect()
}

fn unconverged(fits: &[EmFit]) -> usize {
    fits.iter().filter(|f| !f.converged).count()
}

pub fn cmd_path(a: &PathArgs) -> Result<i32> {
    check_tolerances(&a.em)?;
    prepare_out_dir(Some(&a.input), &a.out_dir)?;
    let input = sigma_path(&a.input);
    let sigma = io::read_sym_matrix(&input)?;
    let lambdas = GridSpec::resolve(a.lambda_grid, &sigma)?;
    let cfg = a.em.config(a.em.r, lambdas[0]);
    let fits = run_path(&sigma, &lambdas, &cfg)?;

    let mut summaries = Vec::with_capacity(fits.len());
    let mut supports = String::from("lambda,i,j\n");
    for fit in &fits {
        summaries.push(fit_summary(fit, a.zero_tol));
        for (i, j) in eval::support(&fit.s_hat, a.zero_tol).iter() {
            supports.push_str(&format!("{},{i},{j}\n", fit.lambda));
        }
    }
    let dir = &a.out_dir;
    io::write_json(&dir.join("path.json"), &summaries)?;
    io::write_text(&dir.join("supports.csv"), &supports)?;
    io::write_json(
        &dir.join("metadata.json"),
        &metadata(
            "path",
            a,
            json!({ "sigma_file": input, "lambdas": lambdas }),
        ),
    )?;
    println!(
        "fitted {} values of lambda into {}",
        fits.len(),
        dir.display()
    );
    let bad = unconverged(&fits);
    if bad > 0 {
        eprintln!("warning: {bad} fits stopped at the iteration limit");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

fn roc_csv(series: &RocSeries) -> String {
    let mut out = String::from("lambda,tp,fp,tn,fn,tpr,fpr\n");
    for pt in &series.points {
        let c = pt.counts;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            pt.lambda, c.tp, c.fp, c.tn, c.fn_, pt.tpr, pt.fpr
        ));
    }
    out
}

/// Minimal ROC plot: unit square axes, chance diagonal, one polyline per series.
pub fn roc_svg(series: &[(&str, &RocSeries)]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let x = |fpr: f64| PAD + fpr * SIZE;
    let y = |tpr: f64| PAD + (1.0 - tpr) * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{total}\">\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"black\"/>\n\
         <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">FPR</text>\n\
         <text x=\"12\" y=\"{}\" text-anchor=\"middle\">TPR</text>\n",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0),
        PAD + SIZE / 2.0,
        total - 10.0,
        PAD + SIZE / 2.0,
    );
    for (k, (name, s)) in series.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = s.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        pts.push((0.0, 0.0));
        pts.push((1.0, 1.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let coords: Vec<String> = pts
            .iter()
            .map(|&(f, t)| format!("{:.2},{:.2}", x(f), y(t)))
            .collect();
        let color = COLORS[k % COLORS.len()];
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{color}\">{name} (AUC {:.4})</text>\n",
            coords.join(" "),
            PAD + SIZE * 0.55,
            PAD + SIZE * 0.8 + 18.0 * k as f64,
            s.auc
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn cmd_roc(a: &RocArgs) -> Result<i32> {
    check_tolerances(&a.em)?;
    prepare_out_dir(Some(&a.input), &a.out_dir)?;
    if !a.input.is_dir() {
        return Err(Error::Input(format!(
            "--in must be a directory written by simulate, got {}",
            a.input.display()
        )));
    }
    let sigma_file = a.input.join("sigma_o_n.csv");
    let sigma = io::read_sym_matrix(&sigma_file)?;
    let edges = io::edges_from_csv(&io::read_text(&a.input.join("edges.csv"))?)?;
    let truth = EdgeSet::new(sigma.dim(), edges)?;
    let lambdas = GridSpec::resolve(a.lambda_grid, &sigma)?;

    let main_cfg = a.em.config(a.em.r, lambdas[0]);
    let base_cfg = a.em.config(0, lambdas[0]);
    // The two paths are independent, so the baseline runs on its own thread.
    let (main, baseline) = std::thread::scope(|scope| {
        let baseline = (a.compare && a.em.r > 0)
            .then(|| scope.spawn(|| run_path(&sigma, &lambdas, &base_cfg)));
        let main = run_path(&sigma, &lambdas, &main_cfg);
        let baseline = baseline.map(|h| h.join().expect("baseline path panicked"));
        (main, baseline)
    });
    let main = main?;
    let baseline = baseline.transpose()?;

    let label = format!("r = {}", a.em.r);
    let main_roc = eval::roc(&main, &truth, a.zero_tol)?;
    let dir = &a.out_dir;
    io::write_text(&dir.join("roc.csv"), &roc_csv(&main_roc))?;
    let best = eval::closest_to_truth(&main, &truth, a.zero_tol)?;
    let mut report = json!({
        "r": a.em.r,
        "auc": main_roc.auc,
        "closest_to_truth": main_roc.points[best],
        "unconverged": unconverged(&main),
    });
    println!("AUC {label}: {}", main_roc.auc);

    let mut plots = vec![(label.as_str(), &main_roc)];
    let base_roc = match &baseline {
        Some(fits) => {
            let series = eval::roc(fits, &truth, a.zero_tol)?;
            io::write_text(&dir.join("roc_glasso.csv"), &roc_csv(&series))?;
            let best = eval::closest_to_truth(fits, &truth, a.zero_tol)?;
            report["glasso"] = json!({
                "auc": series.auc,
                "closest_to_truth": series.points[best],
                "unconverged": unconverged(fits),
            });
            println!("AUC r = 0: {}", series.auc);
            Some(series)
        }
        None => None,
    };
    if let Some(series) = &base_roc {
        plots.push(("r = 0", series));
    }
    if a.svg {
        io::write_text(&dir.join("roc.svg"), &roc_svg(&plots))?;
    }
    io::write_json(&dir.join("report.json"), &report)?;
    io::write_json(
        &dir.join("metadata.json"),
        &metadata(
            "roc",
            a,
            json!({ "sigma_file": sigma_file, "lambdas": lambdas }),
        ),
    )?;

    let bad = unconverged(&main) + baseline.as_deref().map_or(0, unconverged);
    if bad > 0 {
        eprintln!("warning: {bad} fits stopped at the iteration limit");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parsing() {
        let g: GridSpec = "0.01,0.5,10,log".parse().unwrap();
        assert_eq!(
            g,
            GridSpec {
                min: 0.01,
                max: 0.5,
                count: 10,
                log_spaced: true
            }
        );
        let g: GridSpec = "0,1,3".parse().unwrap();
        assert!(!g.log_spaced);
        assert!("1,2".parse::<GridSpec>().is_err());
        assert!("1,2,x".parse::<GridSpec>().is_err());
        assert!("1,2,3,lin".parse::<GridSpec>().is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Parse("x".into())), EXIT_INPUT);
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
        let io = Error::Io {
            path: "p".into(),
            source: std::io::Error::other("x"),
        };
        assert_eq!(exit_code(&io), EXIT_IO);
    }

    #[test]
    fn bad_flags_are_input_errors() {
        assert_eq!(
            main_with_args(["lvglasso", "fit", "--lambda", "x"]),
            EXIT_INPUT
        );
        assert_eq!(main_with_args(["lvglasso", "--help"]), EXIT_OK);
    }
}
