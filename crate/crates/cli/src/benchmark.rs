//! Monte Carlo benchmark harness.
//!
//! A JSON config names a data-generating model document, a grid of sample
//! sizes, a replication count, the estimators to compare and a master seed.
//! Replication `r` simulates one path of the largest sample size from seed
//! `derive_seed(master_seed, r)`; smaller sample sizes use its leading
//! periods. Replications run in parallel and are merged by index, so the
//! metrics table depends only on the config. Wall-clock timings go to a
//! separate table because they are not reproducible.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use kronvar_core::estimate::{
    alternating_gvar, gvar_regional, mar_als, mar_projection, var_ols, AlternatingOptions, FitReport, FittedModel,
    GvarSpec, WeightMethod, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use kronvar_core::models::{equal_weights, GvarModel};
use kronvar_core::rng::derive_seed;
use kronvar_core::transforms::{gvar_to_structural, mar_to_var, structural_to_reduced};
use kronvar_core::{KronError, MatrixSeries};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Deserialize;

use crate::commands::{embedding_structural, simulate_model};
use crate::document::{load_model, Model};
use crate::error::{CliError, CliResult};
use crate::panel::format_value;

pub const BENCHMARK_SCHEMA: &str = "kronvar-benchmark/1";

pub const METRICS_HEADER: &str = "estimator,t_len,replications,failures,coef_mse,coef_mse_se,resid_var,weight_error";
pub const TIMING_HEADER: &str = "estimator,t_len,replications,mean_seconds";

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Benchmark config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving `metrics.csv` and `timing.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    VarOls,
    MarProjection,
    MarAls,
    /// Regional least squares with the generating weights.
    GvarRegional,
    /// Weights and coefficients alternated from equal weights.
    AlternatingGvar,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::VarOls => "var_ols",
            Estimator::MarProjection => "mar_projection",
            Estimator::MarAls => "mar_als",
            Estimator::GvarRegional => "gvar_regional",
            Estimator::AlternatingGvar => "alternating_gvar",
        }
    }

    fn needs_gvar(self) -> bool {
        matches!(self, Estimator::GvarRegional | Estimator::AlternatingGvar)
    }
}

fn default_burn_in() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub schema_version: String,
    /// Model document path, relative to the config file.
    pub dgp: PathBuf,
    pub t_grid: Vec<usize>,
    pub replications: usize,
    pub estimators: Vec<Estimator>,
    pub master_seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Lag order of the VAR and MAR fits (defaults to the generating order).
    #[serde(default)]
    pub lags: Option<usize>,
    /// MAR term counts per lag, or one count for all lags (defaults to `min(2n, min(m², n²))`).
    #[serde(default)]
    pub terms: Option<Vec<usize>>,
    /// Weight method of `alternating_gvar`: ls, gls or iv (default gls).
    #[serde(default)]
    pub method: Option<String>,
}

/// Aggregated results for one estimator at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub estimator: Estimator,
    pub t_len: usize,
    pub replications: usize,
    pub failures: usize,
    /// Mean over successful replications of the mean squared reduced-form
    /// coefficient error.
    pub coef_mse: Option<f64>,
    pub coef_mse_se: Option<f64>,
    /// Mean residual variance per series.
    pub resid_var: Option<f64>,
    /// Mean of the max abs weight error (GVAR estimators only).
    pub weight_error: Option<f64>,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    coef_se: f64,
    resid_var: f64,
    weight_error: Option<f64>,
}

/// A scored fit (`None` when the estimator failed) and its wall-clock seconds.
type Timed = (Option<Cell>, f64);

/// Everything a replication needs besides its seed.
pub struct Experiment {
    config: BenchmarkConfig,
    dgp: Model,
    truth: Vec<DMatrix<f64>>,
    lags: usize,
    terms: Vec<usize>,
    method: WeightMethod,
}

fn reduced_truth(dgp: &Model) -> CliResult<Vec<DMatrix<f64>>> {
    let var = match dgp {
        Model::Mar(m) => mar_to_var(m),
        Model::Var(v) => Ok(v.clone()),
        Model::Gvar(g) => structural_to_reduced(&gvar_to_structural(g)),
        Model::Structural(s) => structural_to_reduced(s),
        Model::MarEmbedding { .. } => structural_to_reduced(&embedding_structural(dgp).expect("embedding")),
    }
    .map_err(CliError::from_model)?;
    Ok(var.coeff_mats().to_vec())
}

impl Experiment {
    pub fn new(config: BenchmarkConfig, dgp: Model) -> CliResult<Self> {
        let bad = |msg: String| Err(CliError::Input(format!("benchmark config: {msg}")));
        if config.schema_version != BENCHMARK_SCHEMA {
            return bad(format!("schema_version `{}`, expected `{BENCHMARK_SCHEMA}`", config.schema_version));
        }
        if config.t_grid.is_empty() || config.estimators.is_empty() {
            return bad("t_grid and estimators must be non-empty".into());
        }
        for (i, e) in config.estimators.iter().enumerate() {
            if config.estimators[..i].contains(e) {
                return bad(format!("estimator {} listed twice", e.name()));
            }
            if e.needs_gvar() && !matches!(dgp, Model::Gvar(_)) {
                return bad(format!("{} needs a gvar data-generating model, found {}", e.name(), dgp.kind()));
            }
        }
        let truth = reduced_truth(&dgp)?;
        let lags = config.lags.unwrap_or(truth.len());
        if lags == 0 {
            return bad("lags must be at least 1".into());
        }
        if let Some(&t) = config.t_grid.iter().find(|&&t| t <= lags + 1) {
            return bad(format!("sample size {t} too short for {lags} lags"));
        }
        let dims = dgp.dims();
        let terms = match &config.terms {
            None => vec![(2 * dims.n).min(dims.max_terms()); lags],
            Some(t) if t.len() == 1 => vec![t[0]; lags],
            Some(t) if t.len() == lags => t.clone(),
            Some(t) => return bad(format!("{} term counts for {lags} lags", t.len())),
        };
        let method = match &config.method {
            None => WeightMethod::Gls,
            Some(s) => s.parse().map_err(|e: String| CliError::Input(format!("benchmark config: {e}")))?,
        };
        Ok(Experiment { config, dgp, truth, lags, terms, method })
    }

    pub fn config(&self) -> &BenchmarkConfig {
        &self.config
    }

    fn gvar(&self) -> &GvarModel {
        match &self.dgp {
            Model::Gvar(g) => g,
            _ => unreachable!("checked in Experiment::new"),
        }
    }

    fn estimate(&self, estimator: Estimator, y: &MatrixSeries) -> Result<FitReport, KronError> {
        match estimator {
            Estimator::VarOls => var_ols(y, self.lags),
            Estimator::MarProjection => mar_projection(y, self.lags, &self.terms),
            Estimator::MarAls => {
                let init = mar_projection(y, self.lags, &self.terms)?;
                let FittedModel::Mar(init) = &init.estimate else { unreachable!("projection returns a MAR") };
                mar_als(y, self.lags, &self.terms, init, DEFAULT_TOL, DEFAULT_MAX_ITER)
            }
            Estimator::GvarRegional => {
                let g = self.gvar();
                gvar_regional(y, g.weights(), GvarSpec { p: g.p(), q: g.q(), triangular: g.triangular() })
            }
            Estimator::AlternatingGvar => {
                let g = self.gvar();
                let spec = GvarSpec { p: g.p(), q: g.q(), triangular: g.triangular() };
                let opts = AlternatingOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, method: self.method };
                alternating_gvar(y, &equal_weights(y.dims().n, g.triangular()), spec, opts)
            }
        }
    }

    fn score(&self, report: &FitReport) -> Result<Cell, KronError> {
        let est = report.estimate.reduced_coefficients()?;
        let dims = self.dgp.dims();
        let lags = est.len().max(self.truth.len());
        let zero = DMatrix::zeros(dims.mn(), dims.mn());
        let sq: f64 = (0..lags)
            .map(|j| (est.get(j).unwrap_or(&zero) - self.truth.get(j).unwrap_or(&zero)).norm_squared())
            .sum();
        let res = &report.residuals;
        let resid_var = report.rss() / (res.t_len() * dims.mn()) as f64;
        let weight_error = match (&report.estimate, &self.dgp) {
            (FittedModel::Gvar(fit), Model::Gvar(truth)) => Some((fit.weights() - truth.weights()).amax()),
            _ => None,
        };
        Ok(Cell { coef_se: sq / (lags * dims.mn() * dims.mn()) as f64, resid_var, weight_error })
    }

    /// Results of replication `r`, indexed `[t][estimator]`, with timings.
    fn replicate(&self, r: usize) -> CliResult<Vec<Vec<Timed>>> {
        let t_max = *self.config.t_grid.iter().max().expect("non-empty grid");
        let seed = derive_seed(self.config.master_seed, r as u64);
        let path =
            simulate_model(&self.dgp, t_max, self.config.burn_in, seed).map_err(CliError::from_model)?;
        let dims = path.dims();
        Ok(self
            .config
            .t_grid
            .iter()
            .map(|&t| {
                let y = MatrixSeries::new(dims, path.data()[..t].to_vec()).expect("prefix of a valid series");
                self.config
                    .estimators
                    .iter()
                    .map(|&e| {
                        let start = Instant::now();
                        let cell = self.estimate(e, &y).and_then(|rep| self.score(&rep)).ok();
                        (cell, start.elapsed().as_secs_f64())
                    })
                    .collect()
            })
            .collect())
    }

    /// Runs every replication and aggregates rows estimator-major, then by
    /// sample size in grid order.
    pub fn run(&self) -> CliResult<Vec<MetricRow>> {
        let reps = self.config.replications;
        let results: Vec<_> = (0..reps).into_par_iter().map(|r| self.replicate(r)).collect::<CliResult<_>>()?;
        let mut rows = Vec::new();
        for (ei, &estimator) in self.config.estimators.iter().enumerate() {
            for (ti, &t_len) in self.config.t_grid.iter().enumerate() {
                let entries: Vec<_> = results.iter().map(|rep| rep[ti][ei]).collect();
                let cells: Vec<Cell> = entries.iter().filter_map(|(c, _)| *c).collect();
                let k = cells.len();
                let mean = |f: &dyn Fn(&Cell) -> f64| (k > 0).then(|| cells.iter().map(f).sum::<f64>() / k as f64);
                let coef_mse = mean(&|c| c.coef_se);
                let coef_mse_se = coef_mse.filter(|_| k > 1).map(|mu| {
                    let var = cells.iter().map(|c| (c.coef_se - mu).powi(2)).sum::<f64>() / (k - 1) as f64;
                    (var / k as f64).sqrt()
                });
                let weights: Vec<f64> = cells.iter().filter_map(|c| c.weight_error).collect();
                rows.push(MetricRow {
                    estimator,
                    t_len,
                    replications: reps,
                    failures: reps - k,
                    coef_mse,
                    coef_mse_se,
                    resid_var: mean(&|c| c.resid_var),
                    weight_error: (!weights.is_empty()).then(|| weights.iter().sum::<f64>() / weights.len() as f64),
                    mean_seconds: if reps > 0 { entries.iter().map(|(_, s)| s).sum::<f64>() / reps as f64 } else { 0.0 },
                });
            }
        }
        if reps == 0 {
            rows.clear();
        }
        Ok(rows)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_value).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.estimator.name(),
            r.t_len,
            r.replications,
            r.failures,
            opt(r.coef_mse),
            opt(r.coef_mse_se),
            opt(r.resid_var),
            opt(r.weight_error)
        )
        .expect("writing to a String");
    }
    s
}

pub fn timing_csv(rows: &[MetricRow]) -> String {
    let mut s = format!("{TIMING_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.estimator.name(), r.t_len, r.replications, format_value(r.mean_seconds))
            .expect("writing to a String");
    }
    s
}

/// Parses a config file and loads its data-generating model.
pub fn load_experiment(path: &Path) -> CliResult<Experiment> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config: BenchmarkConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: benchmark config: {e}", path.display())))?;
    let dgp_path = path.parent().unwrap_or(Path::new(".")).join(&config.dgp);
    let dgp = load_model(&dgp_path)?.model;
    Experiment::new(config, dgp)
}

pub fn benchmark(args: &BenchmarkArgs) -> CliResult<()> {
    let experiment = load_experiment(&args.config)?;
    let rows = experiment.run()?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let metrics = args.out.join("metrics.csv");
    std::fs::write(&metrics, metrics_csv(&rows)).map_err(|e| CliError::io(&metrics, e))?;
    let timing = args.out.join("timing.csv");
    std::fs::write(&timing, timing_csv(&rows)).map_err(|e| CliError::io(&timing, e))
}
