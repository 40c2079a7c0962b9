use nalgebra::{DMatrix, DVector};

use super::weights::{estimate_weights, free_set, WeightMethod};
use super::{gaussian_loglik, information_criteria, FitReport, FittedModel};
use crate::error::{KronError, Result};
use crate::linalg::{block_diag, ln_det_spd, lstsq};
use crate::models::{validate_weights, GvarModel, NoiseSpec};
use crate::simulate::MatrixSeries;
use crate::transforms::{gvar_to_structural, star_series};

/// Lag structure of a GVAR fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GvarSpec {
    /// Domestic lag order.
    pub p: usize,
    /// Star lag order (contemporaneous star always included).
    pub q: usize,
    pub triangular: bool,
}

impl GvarSpec {
    fn max_lag(&self) -> usize {
        self.p.max(self.q)
    }
}

/// Settings of [`alternating_gvar`].
#[derive(Debug, Clone, Copy)]
pub struct AlternatingOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: WeightMethod,
}

impl Default for AlternatingOptions {
    fn default() -> Self {
        AlternatingOptions {
            tol: super::DEFAULT_TOL,
            max_iter: super::DEFAULT_MAX_ITER,
            method: WeightMethod::Gls,
        }
    }
}

fn has_star(w: &DMatrix<f64>, i: usize) -> bool {
    w.row(i).iter().any(|x| *x != 0.0)
}

/// Per-region regressors per equation.
fn regressor_count(m: usize, spec: &GvarSpec, star: bool) -> usize {
    m * (spec.p + if star { spec.q + 1 } else { 0 })
}

/// Least squares per region given the weights; returns the unvalidated blocks.
fn regional_coefficients(
    y: &MatrixSeries,
    w: &DMatrix<f64>,
    spec: &GvarSpec,
) -> Result<(Vec<Vec<DMatrix<f64>>>, Vec<Vec<DMatrix<f64>>>)> {
    let dims = y.dims();
    let (m, n) = (dims.m, dims.n);
    let lag = spec.max_lag();
    let star = star_series(y, w)?;
    let rows = y.t_len().saturating_sub(lag);

    let mut a_blocks = Vec::with_capacity(n);
    let mut b_blocks = Vec::with_capacity(n);
    for i in 0..n {
        let active = has_star(w, i);
        let k = regressor_count(m, spec, active);
        if rows <= k {
            return Err(KronError::RankDeficientRegressors(format!(
                "region {i}: {rows} observations for {k} regressors"
            )));
        }
        let mut x = DMatrix::zeros(rows, k);
        let mut yy = DMatrix::zeros(rows, m);
        for (r, t) in (lag..y.t_len()).enumerate() {
            yy.row_mut(r).copy_from(&y.get(t).column(i).transpose());
            let mut c = 0;
            for j in 1..=spec.p {
                x.view_mut((r, c), (1, m)).copy_from(&y.get(t - j).column(i).transpose());
                c += m;
            }
            if active {
                for l in 0..=spec.q {
                    x.view_mut((r, c), (1, m)).copy_from(&star.get(t - l).column(i).transpose());
                    c += m;
                }
            }
        }
        let coef = lstsq(&x, &yy, &format!("region {i}"))?;
        let block = |c: usize| coef.view((c * m, 0), (m, m)).transpose();
        a_blocks.push((0..spec.p).map(block).collect());
        b_blocks.push(if active {
            (0..=spec.q).map(|l| block(spec.p + l)).collect()
        } else {
            vec![DMatrix::zeros(m, m); spec.q + 1]
        });
    }
    Ok((a_blocks, b_blocks))
}

/// Structural residuals `U_{t,:,i}` for `t = start..T`, one `m × (T − start)` matrix per region.
pub(crate) fn regional_residuals(y: &MatrixSeries, model: &GvarModel, start: usize) -> Result<Vec<DMatrix<f64>>> {
    let (m, n) = (model.dims().m, model.dims().n);
    let star = star_series(y, model.weights())?;
    let cols = y.t_len() - start;
    Ok((0..n)
        .map(|i| {
            let mut e = DMatrix::zeros(m, cols);
            for (c, t) in (start..y.t_len()).enumerate() {
                let mut u: DVector<f64> = y.get(t).column(i).into_owned();
                for j in 1..=model.p() {
                    u -= model.a(i, j) * y.get(t - j).column(i);
                }
                for l in 0..=model.q() {
                    u -= model.b(i, l) * star.get(t - l).column(i);
                }
                e.set_column(c, &u);
            }
            e
        })
        .collect())
}

/// Pooled residual sum of squares, or for GLS the concentrated criterion
/// `Σᵢ ln det(Sᵢ / T_eff)` that the GLS weight step and the regional OLS step
/// both decrease.
fn objective(residuals: &[DMatrix<f64>], method: WeightMethod) -> f64 {
    match method {
        WeightMethod::Gls => residuals
            .iter()
            .map(|e| {
                let s = e * e.transpose() / e.ncols() as f64;
                ln_det_spd(&s).unwrap_or(f64::NEG_INFINITY)
            })
            .sum(),
        _ => residuals.iter().map(|e| e.norm_squared()).sum(),
    }
}

/// Re-estimates the noise blocks from the residuals at `(coefficients, W)` and
/// assembles the report.
fn gvar_report(
    y: &MatrixSeries,
    model: &GvarModel,
    spec: &GvarSpec,
    extra_params: usize,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> Result<FitReport> {
    let dims = model.dims();
    let (m, n) = (dims.m, dims.n);
    let lag = model.max_lag();
    let res = regional_residuals(y, model, lag)?;
    let t_eff = y.t_len() - lag;
    let mut omegas = Vec::with_capacity(n);
    let mut n_params = extra_params;
    for (i, e) in res.iter().enumerate() {
        let k = regressor_count(m, spec, has_star(model.weights(), i));
        n_params += k * m;
        let s = e * e.transpose() / (t_eff - k) as f64;
        omegas.push((&s + s.transpose()) * 0.5);
    }
    let model = GvarModel::new(
        dims,
        model.a_blocks().to_vec(),
        model.b_blocks().to_vec(),
        model.weights().clone(),
        model.triangular(),
        NoiseSpec::BlockDiagonal { blocks: omegas.clone() },
    )?;

    let g0 = gvar_to_structural(&model).g0;
    let log_jacobian = g0.lu().determinant().abs().ln();
    let ll: f64 = res
        .iter()
        .map(|e| gaussian_loglik(&e.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()))
        .sum::<f64>()
        + t_eff as f64 * log_jacobian;
    let (aic, bic) = information_criteria(ll, n_params, t_eff);

    let data = (0..t_eff)
        .map(|c| DMatrix::from_fn(m, n, |r, i| res[i][(r, c)]))
        .collect();
    Ok(FitReport {
        estimate: FittedModel::Gvar(model),
        residuals: MatrixSeries::new(dims, data)?,
        residual_covariance: block_diag(&omegas),
        loglik_gaussian: ll,
        aic,
        bic,
        n_params,
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn provisional_model(
    y: &MatrixSeries,
    w: &DMatrix<f64>,
    spec: &GvarSpec,
) -> Result<GvarModel> {
    let (a, b) = regional_coefficients(y, w, spec)?;
    let dims = y.dims();
    let lag = spec.max_lag();
    let model = GvarModel::new(dims, a, b, w.clone(), spec.triangular, NoiseSpec::block_identity(dims))?;
    // attach the residual covariances so that GLS weight steps can use them
    let res = regional_residuals(y, &model, lag)?;
    let t_eff = y.t_len() - lag;
    let blocks = res
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let k = regressor_count(dims.m, spec, has_star(w, i));
            let s = e * e.transpose() / (t_eff - k) as f64;
            (&s + s.transpose()) * 0.5
        })
        .collect();
    GvarModel::new(
        dims,
        model.a_blocks().to_vec(),
        model.b_blocks().to_vec(),
        w.clone(),
        spec.triangular,
        NoiseSpec::BlockDiagonal { blocks },
    )
}

fn validate_spec(y: &MatrixSeries, w: &DMatrix<f64>, spec: &GvarSpec) -> Result<()> {
    if spec.p == 0 {
        return Err(KronError::InvalidModel("domestic lag order must be at least 1".into()));
    }
    if w.shape() != (y.dims().n, y.dims().n) {
        return Err(KronError::ShapeMismatch(format!(
            "weights are {:?} for {} regions",
            w.shape(),
            y.dims().n
        )));
    }
    validate_weights(w, spec.triangular)
}

/// Regional least squares of each region on its own lags and its star
/// variables at lags `0..=q`, with the weights fixed. Regions with an all-zero
/// weight row carry no star terms.
pub fn gvar_regional(y: &MatrixSeries, w_tilde: &DMatrix<f64>, spec: GvarSpec) -> Result<FitReport> {
    validate_spec(y, w_tilde, &spec)?;
    let model = provisional_model(y, w_tilde, &spec)?;
    let res = regional_residuals(y, &model, spec.max_lag())?;
    let rss = objective(&res, WeightMethod::Ls);
    gvar_report(y, &model, &spec, 0, 0, true, vec![rss])
}

/// Alternates regional coefficient estimation (weights fixed) and weight
/// estimation (coefficients fixed).
///
/// A cycle is one coefficient pass followed by one weight pass; the objective
/// is recorded after every pass. With `Ls` the pooled residual sum of squares
/// and with `Gls` the concentrated log-determinant criterion are
/// non-increasing. Convergence compares the objective after consecutive
/// weight passes (the first against the initial coefficient pass) relative to
/// `max(|previous|, 1)`.
pub fn alternating_gvar(
    y: &MatrixSeries,
    w_init: &DMatrix<f64>,
    spec: GvarSpec,
    opts: AlternatingOptions,
) -> Result<FitReport> {
    validate_spec(y, w_init, &spec)?;
    let lag = spec.max_lag();
    let n = y.dims().n;
    let free_weights: usize = (0..n)
        .map(|i| free_set(n, i, spec.triangular).len().saturating_sub(1))
        .sum();

    let mut model = provisional_model(y, w_init, &spec)?;
    let mut trace = vec![objective(&regional_residuals(y, &model, lag)?, opts.method)];
    let mut reference = trace[0];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        if iterations > 0 {
            model = provisional_model(y, model.weights(), &spec)?;
            trace.push(objective(&regional_residuals(y, &model, lag)?, opts.method));
        }
        let w_new = estimate_weights(y, &model, opts.method)?;
        model = model.with_weights(w_new)?;
        let obj = objective(&regional_residuals(y, &model, lag)?, opts.method);
        trace.push(obj);
        iterations += 1;
        if (reference - obj).abs() <= opts.tol * reference.abs().max(1.0) {
            converged = true;
            break;
        }
        reference = obj;
    }
    gvar_report(y, &model, &spec, free_weights, iterations, converged, trace)
}
