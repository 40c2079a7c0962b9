use nalgebra::{DMatrix, DVector};

use super::{gaussian_loglik, information_criteria, vectors, FitReport, FittedModel};
use crate::error::{KronError, Result};
use crate::linalg::lstsq;
use crate::models::VarModel;
use crate::simulate::MatrixSeries;

/// Regressor rows `[y_{t−1}′ … y_{t−p}′]` and responses `y_t′` for `t = p..T`.
pub(crate) fn lag_design(ys: &[DVector<f64>], p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = ys[0].len();
    let rows = ys.len() - p;
    let mut x = DMatrix::zeros(rows, p * k);
    let mut y = DMatrix::zeros(rows, k);
    for (r, t) in (p..ys.len()).enumerate() {
        y.row_mut(r).copy_from(&ys[t].transpose());
        for i in 0..p {
            x.view_mut((r, i * k), (1, k)).copy_from(&ys[t - i - 1].transpose());
        }
    }
    (x, y)
}

/// Residual vectors `y_t − Σᵢ Φᵢ y_{t−i}` for `t = p..T`.
pub(crate) fn var_residuals(ys: &[DVector<f64>], coeffs: &[DMatrix<f64>]) -> Vec<DVector<f64>> {
    let p = coeffs.len();
    (p..ys.len())
        .map(|t| {
            let mut u = ys[t].clone();
            for (i, a) in coeffs.iter().enumerate() {
                u -= a * &ys[t - i - 1];
            }
            u
        })
        .collect()
}

pub(crate) fn residual_cov(res: &[DVector<f64>], denom: usize) -> DMatrix<f64> {
    let k = res[0].len();
    let mut s = DMatrix::zeros(k, k);
    for u in res {
        s += u * u.transpose();
    }
    let s = s / denom as f64;
    (&s + s.transpose()) * 0.5
}

/// Equation-by-equation least squares of `y_t` on `p` of its own lags. The
/// innovation covariance divides by `T − p`.
pub fn var_ols(y: &MatrixSeries, p: usize) -> Result<FitReport> {
    let dims = y.dims();
    let k = dims.mn();
    if p == 0 {
        return Err(KronError::InvalidModel("lag order must be at least 1".into()));
    }
    if y.t_len() <= p * k + p {
        return Err(KronError::RankDeficientRegressors(format!(
            "{} observations cannot identify a VAR({p}) in {k} variables",
            y.t_len()
        )));
    }
    let ys = vectors(y);
    let (x, yy) = lag_design(&ys, p);
    let coef = lstsq(&x, &yy, "VAR regressors")?;
    let coeffs: Vec<DMatrix<f64>> =
        (0..p).map(|i| coef.view((i * k, 0), (k, k)).transpose()).collect();

    let res = var_residuals(&ys, &coeffs);
    let t_eff = res.len();
    let sigma = residual_cov(&res, t_eff);
    let model = VarModel::new(dims, coeffs, sigma.clone())?;
    let rss: f64 = res.iter().map(|u| u.norm_squared()).sum();
    let ll = gaussian_loglik(&res);
    let n_params = p * k * k;
    let (aic, bic) = information_criteria(ll, n_params, t_eff);
    Ok(FitReport {
        estimate: FittedModel::Var(model),
        residuals: MatrixSeries::from_vectors(dims, &res)?,
        residual_covariance: sigma,
        loglik_gaussian: ll,
        aic,
        bic,
        n_params,
        iterations: 0,
        converged: true,
        objective_trace: vec![rss],
    })
}
