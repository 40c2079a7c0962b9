//! The `simulate`, `fit`, `convert` and `decompose` subcommands.
//!
//! Every command computes all of its outputs before touching the file
//! system, so a failing invocation leaves no partial files behind.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use kronvar_core::estimate::{
    alternating_gvar, gvar_regional, mar_als, mar_projection, structural_init, var_ols, AlternatingOptions,
    FitReport, FittedModel, GvarSpec, WeightMethod, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use kronvar_core::kron::{min_term_count, nkp_decompose_with, rearranged_singular_values, Dims, NkpOptions};
use kronvar_core::models::{equal_weights, gvar_overidentification_count};
use kronvar_core::simulate::{simulate_gvar, simulate_mar, simulate_var};
use kronvar_core::transforms::{gvar_embed_mar, gvar_to_structural, mar_to_var, structural_to_reduced, var_to_mar, StructuralGvar};
use kronvar_core::{KronError, MatrixSeries};
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::document::{load_model, to_rows, Labels, Model, ModelDocument, Provenance, TermDoc};
use crate::error::{CliError, CliResult};
use crate::panel::{load_dense, load_panel, write_panel, Panel};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model document to simulate (mar, var, gvar, structural or mar_embedding).
    #[arg(long)]
    pub model: PathBuf,
    /// Number of periods written to the panel.
    #[arg(long = "t-len")]
    pub t_len: usize,
    /// Periods simulated and discarded before the first written one.
    #[arg(long = "burn-in", default_value_t = 100)]
    pub burn_in: usize,
    /// Seed of the innovation stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output panel CSV; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Var,
    Mar,
    Gvar,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Long-format panel CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kind: FitKind,
    /// Lag order p (the domestic lag order for gvar).
    #[arg(long, default_value_t = 1)]
    pub lags: usize,
    /// MAR term counts J_1,...,J_p; a single value applies to every lag.
    #[arg(long)]
    pub terms: Option<String>,
    /// GVAR star lag order q (defaults to p).
    #[arg(long = "star-lags")]
    pub star_lags: Option<usize>,
    /// GVAR weights: a dense CSV file, `equal`, or `estimate`.
    #[arg(long, default_value = "equal")]
    pub weights: String,
    /// GVAR weights restricted to earlier regions (lower triangular).
    #[arg(long)]
    pub triangular: bool,
    /// mar: projection | als (default projection); gvar: ls | gls | iv (default gls).
    #[arg(long)]
    pub method: Option<String>,
    /// Relative tolerance of the alternating procedures.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Cycle limit of the alternating procedures.
    #[arg(long = "max-iter", default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Output model document.
    #[arg(long)]
    pub out: PathBuf,
    /// Fit report (defaults to `<out>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConvertTarget {
    Var,
    MarEmbed,
    Structural,
    Reduced,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Source model document.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub to: ConvertTarget,
    /// Term counts for a decomposition of the reduced form into a MAR.
    #[arg(long)]
    pub terms: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Dense CSV (no header) holding an mn × mn matrix.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Size of the `A` factors.
    #[arg(short = 'm', long = "m")]
    pub m: usize,
    /// Size of the `B` factors.
    #[arg(short = 'n', long = "n")]
    pub n: usize,
    /// Number of terms kept (defaults to the numerical rank).
    #[arg(long)]
    pub terms: Option<usize>,
    /// Relative singular-value threshold defining the numerical rank.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Report destination (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Comma-separated term counts, broadcast when a single value is given.
pub fn parse_terms(text: &str, lags: usize) -> CliResult<Vec<usize>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| CliError::Input(format!("bad term count `{s}`"))))
        .collect::<CliResult<Vec<_>>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; lags]),
        k if k == lags => Ok(values),
        k => Err(CliError::Input(format!("{k} term counts given for {lags} lags"))),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Structural form of a stored Kronecker-sum embedding.
pub(crate) fn embedding_structural(model: &Model) -> Option<StructuralGvar> {
    match model {
        Model::MarEmbedding { embedding, noise } => Some(StructuralGvar {
            dims: embedding.g0.dims(),
            g0: embedding.g0.materialize(),
            lag_mats: embedding.lags.iter().map(|k| k.materialize()).collect(),
            noise: noise.clone(),
        }),
        _ => None,
    }
}

pub(crate) fn simulate_model(model: &Model, t_len: usize, burn_in: usize, seed: u64) -> Result<MatrixSeries, KronError> {
    match model {
        Model::Mar(m) => simulate_mar(m, t_len, burn_in, seed),
        Model::Var(v) => simulate_var(v, t_len, burn_in, seed),
        Model::Gvar(g) => simulate_gvar(g, t_len, burn_in, seed),
        Model::Structural(s) => simulate_var(&structural_to_reduced(s)?, t_len, burn_in, seed),
        Model::MarEmbedding { .. } => {
            let s = embedding_structural(model).expect("embedding");
            simulate_var(&structural_to_reduced(&s)?, t_len, burn_in, seed)
        }
    }
}

#[derive(Serialize)]
struct SimulationMeta<'a> {
    regions: Vec<String>,
    variables: Vec<String>,
    t_len: usize,
    burn_in: usize,
    seed: u64,
    model_kind: &'a str,
    model_sha256: &'a str,
    command: &'a str,
}

pub fn simulate(args: &SimulateArgs, command: &str) -> CliResult<()> {
    if args.t_len == 0 {
        return Err(CliError::Input("--t-len must be positive".into()));
    }
    let loaded = load_model(&args.model)?;
    let mut series =
        simulate_model(&loaded.model, args.t_len, args.burn_in, args.seed).map_err(CliError::from_model)?;
    if let Some(labels) = &loaded.document.labels {
        series = series
            .with_labels(labels.variables.clone(), labels.regions.clone())
            .map_err(|e| CliError::Input(format!("model labels: {e}")))?;
    }
    let panel = Panel::from_series(series);
    let mut csv = Vec::new();
    write_panel(&mut csv, &panel)?;
    let meta = SimulationMeta {
        regions: panel.regions(),
        variables: panel.variables(),
        t_len: args.t_len,
        burn_in: args.burn_in,
        seed: args.seed,
        model_kind: loaded.model.kind(),
        model_sha256: &loaded.sha256,
        command,
    };
    write_file(&args.out, &csv)?;
    write_file(&sidecar(&args.out, ".meta.json"), to_json(&meta).as_bytes())
}

#[derive(Serialize)]
struct FitReportDoc {
    kind: &'static str,
    estimator: String,
    m: usize,
    n: usize,
    observations: usize,
    residual_count: usize,
    residual_covariance: Vec<Vec<f64>>,
    loglik_gaussian: f64,
    aic: f64,
    bic: f64,
    n_params: usize,
    iterations: usize,
    converged: bool,
    objective_trace: Vec<f64>,
    notes: Vec<String>,
    data_sha256: String,
}

struct FitOutcome {
    report: FitReport,
    estimator: String,
    notes: Vec<String>,
}

fn fit_var(y: &MatrixSeries, args: &FitArgs) -> CliResult<FitOutcome> {
    if let Some(method) = &args.method {
        return Err(CliError::Input(format!("--method {method} does not apply to var fits")));
    }
    let report = var_ols(y, args.lags).map_err(CliError::from_estimation)?;
    Ok(FitOutcome { report, estimator: "var_ols".into(), notes: Vec::new() })
}

fn fit_mar(y: &MatrixSeries, args: &FitArgs) -> CliResult<FitOutcome> {
    let terms = args
        .terms
        .as_deref()
        .ok_or_else(|| CliError::Input("mar fits need --terms J_1,...,J_p".into()))?;
    let terms = parse_terms(terms, args.lags)?;
    let projection = mar_projection(y, args.lags, &terms).map_err(CliError::from_estimation)?;
    match args.method.as_deref().unwrap_or("projection") {
        "projection" => Ok(FitOutcome { report: projection, estimator: "mar_projection".into(), notes: Vec::new() }),
        "als" => {
            let FittedModel::Mar(init) = &projection.estimate else {
                unreachable!("mar_projection returns a MAR");
            };
            let report =
                mar_als(y, args.lags, &terms, init, args.tol, args.max_iter).map_err(CliError::from_estimation)?;
            Ok(FitOutcome {
                report,
                estimator: "mar_als".into(),
                notes: vec!["initialized at the projection estimate".into()],
            })
        }
        other => Err(CliError::Input(format!("unknown mar method `{other}` (expected projection or als)"))),
    }
}

fn fit_gvar(y: &MatrixSeries, args: &FitArgs) -> CliResult<FitOutcome> {
    let dims = y.dims();
    let n = dims.n;
    let spec = GvarSpec { p: args.lags, q: args.star_lags.unwrap_or(args.lags), triangular: args.triangular };
    let method: WeightMethod = args.method.as_deref().unwrap_or("gls").parse().map_err(CliError::Input)?;
    let mut notes = Vec::new();
    let fixed = match args.weights.as_str() {
        "equal" => Some(equal_weights(n, args.triangular)),
        "estimate" => None,
        path => {
            let w = load_dense(Path::new(path))?;
            if w.shape() != (n, n) {
                return Err(CliError::Input(format!("weight matrix must be {n}×{n}, found {:?}", w.shape())));
            }
            Some(w)
        }
    };
    if let Some(w) = fixed {
        kronvar_core::models::validate_weights(&w, args.triangular).map_err(|e| CliError::Input(e.to_string()))?;
        if args.method.is_some() {
            notes.push("weights held fixed; --method unused".into());
        }
        let report = gvar_regional(y, &w, spec).map_err(CliError::from_estimation)?;
        return Ok(FitOutcome { report, estimator: "gvar_regional".into(), notes });
    }

    let count = gvar_overidentification_count(dims, args.lags);
    if count <= 0 {
        return Err(CliError::from_estimation(KronError::IdentificationDeficit { count }));
    }
    let j = (2 * n).min(dims.max_terms());
    let init = mar_projection(y, args.lags, &vec![j; args.lags])
        .and_then(|fit| structural_init(y, &fit, None, args.lags, args.triangular));
    let w_init = match init {
        Ok(model) => {
            notes.push(format!("weights initialized by the structural estimator from a {j}-term projection"));
            model.weights().clone()
        }
        Err(e @ KronError::IdentificationDeficit { .. }) => return Err(CliError::from_estimation(e)),
        Err(e) => {
            notes.push(format!("structural initialization failed ({}); started from equal weights", e.name()));
            equal_weights(n, args.triangular)
        }
    };
    let opts = AlternatingOptions { tol: args.tol, max_iter: args.max_iter, method };
    let report = alternating_gvar(y, &w_init, spec, opts).map_err(CliError::from_estimation)?;
    Ok(FitOutcome { report, estimator: format!("alternating_gvar ({method})"), notes })
}

pub fn fit(args: &FitArgs, command: &str) -> CliResult<()> {
    if args.lags == 0 {
        return Err(CliError::Input("--lags must be at least 1".into()));
    }
    let data = std::fs::read(&args.data).map_err(|e| CliError::io(&args.data, e))?;
    let panel = load_panel(&args.data)?;
    let y = &panel.series;
    let outcome = match args.kind {
        FitKind::Var => fit_var(y, args)?,
        FitKind::Mar => fit_mar(y, args)?,
        FitKind::Gvar => fit_gvar(y, args)?,
    };
    let report = &outcome.report;
    let model = match &report.estimate {
        FittedModel::Var(v) => Model::Var(v.clone()),
        FittedModel::Mar(m) => Model::Mar(m.clone()),
        FittedModel::Gvar(g) => Model::Gvar(g.clone()),
    };
    let labels = Labels { variables: panel.variables(), regions: panel.regions() };
    let document = ModelDocument::new(&model, Some(labels), Provenance::new(command, None));
    let dims = y.dims();
    let report_doc = FitReportDoc {
        kind: model.kind(),
        estimator: outcome.estimator,
        m: dims.m,
        n: dims.n,
        observations: y.t_len(),
        residual_count: report.residuals.t_len(),
        residual_covariance: to_rows(&report.residual_covariance),
        loglik_gaussian: report.loglik_gaussian,
        aic: report.aic,
        bic: report.bic,
        n_params: report.n_params,
        iterations: report.iterations,
        converged: report.converged,
        objective_trace: report.objective_trace.clone(),
        notes: outcome.notes,
        data_sha256: sha256_hex(&data),
    };
    let report_path = args.report.clone().unwrap_or_else(|| sidecar(&args.out, ".report.json"));
    document.save(&args.out)?;
    write_file(&report_path, to_json(&report_doc).as_bytes())
}

pub fn convert(args: &ConvertArgs, command: &str) -> CliResult<()> {
    if args.terms.is_some() && args.to != ConvertTarget::MarEmbed {
        return Err(CliError::Input("--terms applies only to --to mar-embed".into()));
    }
    let loaded = load_model(&args.model)?;
    let source = loaded.model.kind();
    let target = match args.to {
        ConvertTarget::Var => "var",
        ConvertTarget::MarEmbed => "mar-embed",
        ConvertTarget::Structural => "structural",
        ConvertTarget::Reduced => "reduced",
    };
    let unsupported = || CliError::Unsupported(format!("UnsupportedConversion: {source} → {target}"));
    let reduced_of = |s: &StructuralGvar| structural_to_reduced(s).map_err(CliError::from_model);
    let terms_for = |lags: usize| args.terms.as_deref().map(|t| parse_terms(t, lags)).transpose();

    let out = match (&loaded.model, args.to) {
        (Model::Mar(m), ConvertTarget::Var | ConvertTarget::Reduced) => {
            Model::Var(mar_to_var(m).map_err(CliError::from_model)?)
        }
        (Model::Var(v), ConvertTarget::MarEmbed) => {
            let terms = terms_for(v.p())?.ok_or_else(|| {
                CliError::Unsupported(
                    "UnsupportedConversion: var → mar-embed needs explicit --terms J_1,...,J_p".into(),
                )
            })?;
            Model::Mar(var_to_mar(v, &terms).map_err(CliError::from_model)?)
        }
        (Model::Gvar(g), ConvertTarget::Structural) => Model::Structural(gvar_to_structural(g)),
        (Model::Gvar(g), ConvertTarget::Var | ConvertTarget::Reduced) => {
            Model::Var(reduced_of(&gvar_to_structural(g))?)
        }
        (Model::Gvar(g), ConvertTarget::MarEmbed) => match terms_for(g.max_lag())? {
            Some(terms) => {
                let reduced = reduced_of(&gvar_to_structural(g))?;
                Model::Mar(var_to_mar(&reduced, &terms).map_err(CliError::from_model)?)
            }
            None => Model::MarEmbedding {
                embedding: gvar_embed_mar(g).map_err(CliError::from_model)?,
                noise: g.noise().clone(),
            },
        },
        (Model::Structural(s), ConvertTarget::Var | ConvertTarget::Reduced) => Model::Var(reduced_of(s)?),
        (Model::MarEmbedding { .. }, ConvertTarget::Var | ConvertTarget::Reduced) => {
            Model::Var(reduced_of(&embedding_structural(&loaded.model).expect("embedding"))?)
        }
        (Model::MarEmbedding { .. }, ConvertTarget::Structural) => {
            Model::Structural(embedding_structural(&loaded.model).expect("embedding"))
        }
        _ => return Err(unsupported()),
    };
    let document = ModelDocument::new(&out, loaded.document.labels.clone(), Provenance::new(command, None));
    document.save(&args.out)?;
    match &out {
        Model::MarEmbedding { embedding, .. } => println!(
            "mar_embedding: g0 terms {}, lag term counts {:?}",
            embedding.g0.len(),
            embedding.lag_term_counts()
        ),
        Model::Mar(m) => println!("mar: lag term counts {:?}", m.term_counts()),
        other => println!("{}", other.kind()),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct DecompositionReport {
    pub m: usize,
    pub n: usize,
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
    pub rank_tol: f64,
    pub terms: usize,
    pub factors: Vec<TermDoc>,
    /// Frobenius norm of the input minus the reconstruction from `factors`.
    pub reconstruction_error: f64,
    /// Measured reconstruction error for every term count `1..=min(m², n²)`.
    pub error_by_terms: Vec<f64>,
    /// `sqrt` of the tail singular-value energy for the same term counts.
    pub tail_error_by_terms: Vec<f64>,
}

pub fn decomposition_report(c: &DMatrix<f64>, dims: Dims, terms: Option<usize>, tol: f64) -> CliResult<DecompositionReport> {
    let mn = dims.mn();
    if c.shape() != (mn, mn) {
        return Err(CliError::Input(format!(
            "matrix is {}×{}, expected {mn}×{mn} for m = {}, n = {}",
            c.nrows(),
            c.ncols(),
            dims.m,
            dims.n
        )));
    }
    let sv = rearranged_singular_values(c, dims).map_err(CliError::from_model)?;
    let rank = min_term_count(c, dims, tol).map_err(CliError::from_model)?;
    let j = terms.unwrap_or(rank.max(1));
    let opts = NkpOptions { tol, strict: false };
    let mut error_by_terms = Vec::new();
    let mut tail_error_by_terms = Vec::new();
    for k in 1..=dims.max_terms() {
        let dec = nkp_decompose_with(c, dims, k, opts).map_err(CliError::from_model)?;
        error_by_terms.push((c - dec.sum.materialize()).norm());
        tail_error_by_terms.push(sv[k..].iter().map(|s| s * s).sum::<f64>().sqrt());
    }
    let dec = nkp_decompose_with(c, dims, j, opts).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(DecompositionReport {
        m: dims.m,
        n: dims.n,
        singular_values: sv,
        numerical_rank: rank,
        rank_tol: tol,
        terms: j,
        factors: dec.sum.terms().iter().map(|t| TermDoc { a: to_rows(&t.a), b: to_rows(&t.b) }).collect(),
        reconstruction_error: (c - dec.sum.materialize()).norm(),
        error_by_terms,
        tail_error_by_terms,
    })
}

pub fn decompose(args: &DecomposeArgs) -> CliResult<()> {
    let dims = Dims::new(args.m, args.n).map_err(|e| CliError::Input(e.to_string()))?;
    let c = load_dense(&args.matrix)?;
    let report = decomposition_report(&c, dims, args.terms, args.tol)?;
    let text = to_json(&report);
    match &args.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

