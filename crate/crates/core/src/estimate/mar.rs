use nalgebra::{DMatrix, DVector};

use super::var::{residual_cov, var_ols, var_residuals};
use super::{gaussian_loglik, information_criteria, vectors, FitReport, FittedModel};
use crate::error::{KronError, Result};
use crate::kron::{nkp_decompose, normalize_identifiable, Dims, KronTerm, KroneckerSum, DEFAULT_RANK_TOL};
use crate::linalg::{spd_solve, vec};
use crate::models::{mar_param_count, MarModel, NoiseSpec};
use crate::simulate::MatrixSeries;
use crate::transforms::mar_to_var;

fn check_term_counts(dims: Dims, p: usize, term_counts: &[usize]) -> Result<()> {
    if term_counts.len() != p {
        return Err(KronError::ShapeMismatch(format!(
            "{} term counts for lag order {p}",
            term_counts.len()
        )));
    }
    let max = dims.max_terms();
    if let Some(&j) = term_counts.iter().find(|&&j| j > max) {
        return Err(KronError::InvalidTermCount { requested: j, max });
    }
    Ok(())
}

/// Assembles the report for a MAR estimate; noise is the residual covariance
/// over `T − p`.
fn mar_report(
    y: &MatrixSeries,
    ys: &[DVector<f64>],
    coeffs: Vec<KroneckerSum>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> Result<FitReport> {
    let dims = y.dims();
    let mats: Vec<DMatrix<f64>> = coeffs.iter().map(KroneckerSum::materialize).collect();
    let res = var_residuals(ys, &mats);
    let t_eff = res.len();
    let sigma = residual_cov(&res, t_eff);
    let model = MarModel::new(dims, coeffs, NoiseSpec::General { sigma: sigma.clone() })?;
    let ll = gaussian_loglik(&res);
    let n_params = mar_param_count(dims, &model.term_counts());
    let (aic, bic) = information_criteria(ll, n_params, t_eff);
    Ok(FitReport {
        estimate: FittedModel::Mar(model),
        residuals: MatrixSeries::from_vectors(dims, &res)?,
        residual_covariance: sigma,
        loglik_gaussian: ll,
        aic,
        bic,
        n_params,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Unrestricted VAR least squares followed by the best `Jᵢ`-term Kronecker
/// approximation of each coefficient matrix.
pub fn mar_projection(y: &MatrixSeries, p: usize, term_counts: &[usize]) -> Result<FitReport> {
    let dims = y.dims();
    check_term_counts(dims, p, term_counts)?;
    let var = var_ols(y, p)?;
    let phis = var.estimate.reduced_coefficients()?;
    let coeffs = phis
        .iter()
        .zip(term_counts)
        .map(|(phi, &j)| {
            if j == 0 {
                Ok(KroneckerSum::empty(dims))
            } else {
                nkp_decompose(phi, dims, j, DEFAULT_RANK_TOL)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let ys = vectors(y);
    let mats: Vec<DMatrix<f64>> = coeffs.iter().map(KroneckerSum::materialize).collect();
    let rss: f64 = var_residuals(&ys, &mats).iter().map(|u| u.norm_squared()).sum();
    mar_report(y, &ys, coeffs, 0, true, vec![rss])
}

/// One factor slot of the alternating least squares: lag index and term.
struct Slot {
    lag: usize,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

fn slots_of(coeffs: &[KroneckerSum]) -> Vec<Slot> {
    coeffs
        .iter()
        .enumerate()
        .flat_map(|(i, ks)| {
            ks.terms().iter().map(move |t| Slot { lag: i + 1, a: t.a.clone(), b: t.b.clone() })
        })
        .collect()
}

fn coeffs_of(dims: Dims, p: usize, slots: &[Slot]) -> Result<Vec<KroneckerSum>> {
    (1..=p)
        .map(|lag| {
            let terms = slots
                .iter()
                .filter(|s| s.lag == lag)
                .map(|s| KronTerm { a: s.a.clone(), b: s.b.clone() })
                .collect();
            let ks = KroneckerSum::new(dims, terms)?;
            normalize_identifiable(&ks).map(|(k, _)| k)
        })
        .collect()
}

fn matrix_rss(y: &[DMatrix<f64>], p: usize, slots: &[Slot]) -> f64 {
    (p..y.len())
        .map(|t| {
            let mut u = y[t].clone();
            for s in slots {
                u -= &s.a * &y[t - s.lag] * s.b.transpose();
            }
            u.norm_squared()
        })
        .sum()
}

/// Least squares for all `A` factors with the `B` factors fixed:
/// `Y_t = Σ_k A_k (Y_{t−lag_k} B_k′)`.
fn update_a(y: &[DMatrix<f64>], p: usize, slots: &mut [Slot], m: usize) -> Result<()> {
    let kk = slots.len();
    let mut gram = DMatrix::zeros(kk * m, kk * m);
    let mut cross = DMatrix::zeros(m, kk * m);
    let mut z = DMatrix::zeros(kk * m, y[0].ncols());
    for t in p..y.len() {
        for (k, s) in slots.iter().enumerate() {
            z.view_mut((k * m, 0), (m, z.ncols())).copy_from(&(&y[t - s.lag] * s.b.transpose()));
        }
        gram += &z * z.transpose();
        cross += &y[t] * z.transpose();
    }
    let sol = spd_solve(&gram, &cross.transpose())
        .ok_or_else(|| KronError::DegenerateTerms("A-step normal equations are singular".into()))?;
    let a_all = sol.transpose();
    for (k, s) in slots.iter_mut().enumerate() {
        s.a = a_all.view((0, k * m), (m, m)).into_owned();
    }
    Ok(())
}

/// Least squares for all `B` factors with the `A` factors fixed:
/// `Y_t′ = Σ_k B_k (A_k Y_{t−lag_k})′`.
fn update_b(y: &[DMatrix<f64>], p: usize, slots: &mut [Slot], n: usize) -> Result<()> {
    let kk = slots.len();
    let mut gram = DMatrix::zeros(kk * n, kk * n);
    let mut cross = DMatrix::zeros(n, kk * n);
    let mut w = DMatrix::zeros(kk * n, y[0].nrows());
    for t in p..y.len() {
        for (k, s) in slots.iter().enumerate() {
            w.view_mut((k * n, 0), (n, w.ncols()))
                .copy_from(&(&s.a * &y[t - s.lag]).transpose());
        }
        gram += &w * w.transpose();
        cross += y[t].transpose() * w.transpose();
    }
    let sol = spd_solve(&gram, &cross.transpose())
        .ok_or_else(|| KronError::DegenerateTerms("B-step normal equations are singular".into()))?;
    let b_all = sol.transpose();
    for (k, s) in slots.iter_mut().enumerate() {
        s.b = b_all.view((0, k * n), (n, n)).into_owned();
    }
    Ok(())
}

/// Alternating least squares over the factor pairs, starting from `init`.
///
/// Each half-step is an exact least-squares solve (the recursion is linear in
/// the `A`s for fixed `B`s and vice versa), so the residual sum of squares in
/// `objective_trace` never increases. Stops when its relative decrease drops
/// below `tol` or after `max_iter` full cycles.
pub fn mar_als(
    y: &MatrixSeries,
    p: usize,
    term_counts: &[usize],
    init: &MarModel,
    tol: f64,
    max_iter: usize,
) -> Result<FitReport> {
    let dims = y.dims();
    check_term_counts(dims, p, term_counts)?;
    if init.dims() != dims || init.p() != p || init.term_counts() != term_counts {
        return Err(KronError::ShapeMismatch(format!(
            "initial model has dims {:?}, lags {}, terms {:?}; expected {:?}, {p}, {term_counts:?}",
            init.dims(),
            init.p(),
            init.term_counts(),
            dims
        )));
    }
    if y.t_len() <= p + 1 {
        return Err(KronError::RankDeficientRegressors("series shorter than the lag order".into()));
    }
    // sanity check that init is a usable VAR
    mar_to_var(init)?;

    let data = y.data();
    let ys: Vec<DVector<f64>> = data.iter().map(vec).collect();
    let mut slots = slots_of(init.coeffs());
    let mut trace = vec![matrix_rss(data, p, &slots)];
    let mut iterations = 0;
    let mut converged = false;

    if !slots.is_empty() {
        while iterations < max_iter {
            update_a(data, p, &mut slots, dims.m)?;
            update_b(data, p, &mut slots, dims.n)?;
            let normalized = coeffs_of(dims, p, &slots)?;
            slots = slots_of(&normalized);
            iterations += 1;
            let prev = *trace.last().unwrap();
            let cur = matrix_rss(data, p, &slots);
            trace.push(cur);
            if prev <= 0.0 || (prev - cur) / prev < tol {
                converged = true;
                break;
            }
        }
    } else {
        converged = max_iter > 0;
    }

    let coeffs = coeffs_of(dims, p, &slots)?;
    mar_report(y, &ys, coeffs, iterations, converged, trace)
}
