//! Estimators: unrestricted VAR least squares, MAR projection and alternating
//! least squares, regional GVAR regressions, simplex-constrained weight
//! estimation, the GVAR alternating loop and the structural initial estimator.

mod gvar;
mod mar;
mod structural;
mod var;
mod weights;

pub use gvar::{alternating_gvar, gvar_regional, AlternatingOptions, GvarSpec};
pub use mar::{mar_als, mar_projection};
pub use structural::{structural_init, MOMENT_PENALTY};
pub use var::var_ols;
pub use weights::{estimate_weights, simplex_qp, WeightMethod};

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::ln_det_spd;
use crate::models::{GvarModel, MarModel, VarModel};
use crate::simulate::MatrixSeries;
use crate::transforms::{gvar_to_structural, mar_to_var, structural_to_reduced};

/// Relative tolerance for the alternating procedures.
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Estimated model of any of the three kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Var(VarModel),
    Mar(MarModel),
    Gvar(GvarModel),
}

impl FittedModel {
    /// Reduced-form VAR coefficient matrices `Φ₁ … Φ_p`.
    pub fn reduced_coefficients(&self) -> Result<Vec<DMatrix<f64>>> {
        Ok(match self {
            FittedModel::Var(v) => v.coeff_mats().to_vec(),
            FittedModel::Mar(m) => mar_to_var(m)?.coeff_mats().to_vec(),
            FittedModel::Gvar(g) => structural_to_reduced(&gvar_to_structural(g))?.coeff_mats().to_vec(),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FittedModel::Var(_) => "var",
            FittedModel::Mar(_) => "mar",
            FittedModel::Gvar(_) => "gvar",
        }
    }
}

/// Output of every estimator.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub estimate: FittedModel,
    /// Residuals for `t = max lag .. T`; structural `U_t` for GVAR fits.
    pub residuals: MatrixSeries,
    /// `mn × mn` residual covariance (block diagonal for GVAR fits).
    pub residual_covariance: DMatrix<f64>,
    pub loglik_gaussian: f64,
    pub aic: f64,
    pub bic: f64,
    /// Free coefficient (and weight) parameters entering the criteria.
    pub n_params: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl FitReport {
    /// Sum of squared residuals.
    pub fn rss(&self) -> f64 {
        rss(&self.residuals)
    }
}

pub(crate) fn rss(res: &MatrixSeries) -> f64 {
    res.data().iter().map(|u| u.norm_squared()).sum()
}

/// Vectorized observations.
pub(crate) fn vectors(y: &MatrixSeries) -> Vec<DVector<f64>> {
    (0..y.t_len()).map(|t| y.vectorized(t)).collect()
}

/// Gaussian log-likelihood of residual vectors at the ML covariance estimate.
pub(crate) fn gaussian_loglik(residuals: &[DVector<f64>]) -> f64 {
    let t = residuals.len();
    if t == 0 {
        return f64::NAN;
    }
    let k = residuals[0].len();
    let mut s = DMatrix::zeros(k, k);
    for u in residuals {
        s += u * u.transpose();
    }
    s /= t as f64;
    match ln_det_spd(&s) {
        Some(ld) => -0.5 * t as f64 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + ld + k as f64),
        None => f64::NEG_INFINITY,
    }
}

/// `(aic, bic)` for log-likelihood `ll` with `k` parameters and `t` observations.
pub(crate) fn information_criteria(ll: f64, k: usize, t: usize) -> (f64, f64) {
    (-2.0 * ll + 2.0 * k as f64, -2.0 * ll + k as f64 * (t as f64).ln())
}
