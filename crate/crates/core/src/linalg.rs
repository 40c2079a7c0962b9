//! Small dense helpers shared by the model, transform and estimation code.

use nalgebra::{DMatrix, DVector};

use crate::error::{KronError, Result};

/// Relative threshold on the diagonal of R below which a regressor matrix is
/// treated as rank deficient.
pub(crate) const REGRESSOR_RANK_TOL: f64 = 1e-10;

/// Thin singular value decomposition `A = U diag(σ) Vᵀ` with `σ` descending.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD (computed with faer's divide-and-conquer bidiagonal solver).
pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    if a.is_empty() {
        return Ok(Svd { u: DMatrix::zeros(a.nrows(), 0), singular_values: Vec::new(), v: DMatrix::zeros(a.ncols(), 0) });
    }
    let dec = to_faer(a)
        .thin_svd()
        .map_err(|_| KronError::IllConditioned("singular value decomposition did not converge".into()))?;
    let sv = dec.S().column_vector().iter().cloned().collect();
    Ok(Svd { u: from_faer(dec.U()), singular_values: sv, v: from_faer(dec.V()) })
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    to_faer(a)
        .singular_values()
        .map_err(|_| KronError::IllConditioned("singular value decomposition did not converge".into()))
}

/// Eigenvalues of a symmetric matrix (lower triangle referenced), ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    to_faer(a)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| KronError::IllConditioned("symmetric eigenvalue iteration did not converge".into()))
}

/// Column-major vectorization, `vec(A)`.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for a `rows × cols` matrix.
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v)
}

/// Block-diagonal matrix assembled from square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let size: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(size, size);
    let mut offset = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((offset, offset), (k, k)).copy_from(b);
        offset += k;
    }
    out
}

/// Copy of the `(i, j)` block of size `m × m`.
pub fn block(c: &DMatrix<f64>, m: usize, i: usize, j: usize) -> DMatrix<f64> {
    c.view((i * m, j * m), (m, m)).into_owned()
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= rel_tol * scale))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !is_symmetric(a, 1e-10) {
        return Err(KronError::NotSpd(format!("{what} is not symmetric")));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| KronError::NotSpd(format!("{what} is not positive definite")))?;
    let l = chol.unpack();
    if l.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(KronError::NotSpd(format!("{what} is not positive definite")));
    }
    Ok(l)
}

/// 2-norm condition number from the singular values; infinite when singular.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let Ok(sv) = singular_values(a) else {
        return f64::INFINITY;
    };
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Spectral radius from the eigenvalues of the real Schur form; infinite if
/// the eigenvalue iteration fails.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    match to_faer(a).eigenvalues() {
        Ok(eig) => eig.iter().map(|z| z.norm()).fold(0.0_f64, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Least squares `argmin_B ||Y - X B||_F` by Householder QR.
///
/// Fails when the diagonal of R drops below [`REGRESSOR_RANK_TOL`] relative to
/// its largest entry; `context` is folded into the error message.
pub fn lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let k = x.ncols();
    if x.nrows() < k || k == 0 {
        return Err(KronError::RankDeficientRegressors(format!(
            "{context}: {} observations for {k} regressors",
            x.nrows()
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let dmax = r.diagonal().iter().fold(0.0_f64, |a, d| a.max(d.abs()));
    if dmax == 0.0 || r.diagonal().iter().any(|d| d.abs() <= REGRESSOR_RANK_TOL * dmax) {
        return Err(KronError::RankDeficientRegressors(format!(
            "{context}: regressor matrix is numerically rank deficient"
        )));
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty).ok_or_else(|| {
        KronError::RankDeficientRegressors(format!("{context}: triangular solve failed"))
    })
}

/// Solve `H x = g` for symmetric positive definite `H`, reporting failure as `None`.
pub(crate) fn spd_solve(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = h.clone().cholesky()?;
    Some(chol.solve(g))
}

/// `ln det` of a symmetric positive definite matrix.
pub(crate) fn ln_det_spd(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}
