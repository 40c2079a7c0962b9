//! Conversions between the MAR, VAR and GVAR representations.
//!
//! A GVAR in structural form reads `G₀ y_t = Σⱼ Lⱼ y_{t−j} + u_t` with
//! `G₀ = I − diag(B₀^{(i)})·W` and `Lⱼ = diag(Aⱼ^{(i)}) + diag(Bⱼ^{(i)})·W`,
//! where `W = W̃ ⊗ I_m`. Each `Lⱼ` is a sum of at most `2n` Kronecker terms and
//! `G₀` of at most `n + 1`, so the structural matrices embed exactly in a
//! multi-term MAR. Premultiplying by `G₀⁻¹` can raise the term count, so the
//! reduced form is decomposed only with explicit term counts.

use nalgebra::DMatrix;

use crate::error::{KronError, Result};
use crate::kron::{kron, min_term_count, nkp_decompose, Dims, KroneckerSum, DEFAULT_RANK_TOL};
use crate::linalg::{block, block_diag, cholesky_lower, condition_number};
use crate::models::{GvarModel, MarModel, NoiseSpec, VarModel};
use crate::simulate::MatrixSeries;

/// Condition number of `G₀` above which it is treated as singular.
pub const G0_CONDITION_LIMIT: f64 = 1e12;

/// Structural form of a GVAR.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralGvar {
    pub dims: Dims,
    /// `I − diag(B₀^{(i)})·W`.
    pub g0: DMatrix<f64>,
    /// `diag(Aⱼ^{(i)}) + diag(Bⱼ^{(i)})·W` for `j = 1..max(p, q)`.
    pub lag_mats: Vec<DMatrix<f64>>,
    /// Block-diagonal structural noise `Σ◇`.
    pub noise: NoiseSpec,
}

/// Vectorized form: lag `i` coefficient `Σⱼ B_{i,j} ⊗ A_{i,j}`.
pub fn mar_to_var(model: &MarModel) -> Result<VarModel> {
    let dims = model.dims();
    let coeffs = model.coeffs().iter().map(KroneckerSum::materialize).collect();
    VarModel::new(dims, coeffs, model.noise().covariance(dims)?)
}

/// Best `Jᵢ`-term approximation of each VAR coefficient matrix, wrapped as a
/// MAR with the VAR's covariance as general noise.
pub fn var_to_mar(model: &VarModel, term_counts: &[usize]) -> Result<MarModel> {
    if term_counts.len() != model.p() {
        return Err(KronError::ShapeMismatch(format!(
            "{} term counts for a VAR with {} lags",
            term_counts.len(),
            model.p()
        )));
    }
    let dims = model.dims();
    let coeffs = model
        .coeff_mats()
        .iter()
        .zip(term_counts)
        .map(|(a, &j)| {
            if j == 0 {
                Ok(KroneckerSum::empty(dims))
            } else {
                nkp_decompose(a, dims, j, DEFAULT_RANK_TOL)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    MarModel::new(dims, coeffs, NoiseSpec::General { sigma: model.sigma().clone() })
}

/// `W̃ ⊗ I_m`: block `(i, j)` equals `ω_{i,j} I_m`.
pub fn expand_weights(w_tilde: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    kron(w_tilde, &DMatrix::identity(m, m))
}

/// Star variables: column `i` of each output matrix is `Σ_{j≠i} ω_{i,j} Y_{t,:,j}`.
pub fn star_series(y: &MatrixSeries, w_tilde: &DMatrix<f64>) -> Result<MatrixSeries> {
    let n = y.dims().n;
    if w_tilde.shape() != (n, n) {
        return Err(KronError::ShapeMismatch(format!(
            "weights are {:?} for {n} regions",
            w_tilde.shape()
        )));
    }
    let wt = w_tilde.transpose();
    MatrixSeries::new(y.dims(), y.data().iter().map(|yt| yt * &wt).collect())
}

pub fn gvar_to_structural(model: &GvarModel) -> StructuralGvar {
    let dims = model.dims();
    let (m, n) = (dims.m, dims.n);
    let w = expand_weights(model.weights(), m);
    let b_diag = |lag: usize| block_diag(&(0..n).map(|i| model.b(i, lag)).collect::<Vec<_>>());
    let a_diag = |lag: usize| block_diag(&(0..n).map(|i| model.a(i, lag)).collect::<Vec<_>>());

    let g0 = DMatrix::identity(dims.mn(), dims.mn()) - b_diag(0) * &w;
    let lag_mats = (1..=model.max_lag()).map(|j| a_diag(j) + b_diag(j) * &w).collect();
    StructuralGvar { dims, g0, lag_mats, noise: model.noise().clone() }
}

/// `Φⱼ = G₀⁻¹ Lⱼ` and `Σ = G₀⁻¹ Σ◇ G₀⁻ᵀ`.
pub fn structural_to_reduced(s: &StructuralGvar) -> Result<VarModel> {
    let g0_inv = invert_g0(&s.g0)?;
    let coeffs: Vec<_> = s.lag_mats.iter().map(|l| &g0_inv * l).collect();
    let sigma_s = s.noise.covariance(s.dims)?;
    let sigma = &g0_inv * sigma_s * g0_inv.transpose();
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    VarModel::new(s.dims, coeffs, sigma)
}

/// Inverse of `G₀`, refusing matrices with condition number above [`G0_CONDITION_LIMIT`].
pub fn invert_g0(g0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(g0);
    if !(condition < G0_CONDITION_LIMIT) {
        return Err(KronError::SingularG0 { condition });
    }
    g0.clone().try_inverse().ok_or(KronError::SingularG0 { condition })
}

/// Kronecker-sum representation of a GVAR's structural matrices.
#[derive(Debug, Clone)]
pub struct GvarEmbedding {
    pub g0: KroneckerSum,
    /// One sum per structural lag matrix.
    pub lags: Vec<KroneckerSum>,
}

impl GvarEmbedding {
    pub fn lag_term_counts(&self) -> Vec<usize> {
        self.lags.iter().map(KroneckerSum::len).collect()
    }

    /// Lag sums re-wrapped as a MAR carrying the structural noise. `G₀` is not
    /// part of a MAR, so the result reproduces the structural lag matrices only.
    pub fn lag_mar(&self, noise: NoiseSpec) -> Result<MarModel> {
        MarModel::new(self.g0.dims(), self.lags.clone(), noise)
    }
}

/// Decomposes `G₀` and each structural lag matrix with as many terms as its
/// numerical Kronecker rank (at most `n + 1` and `2n` respectively).
pub fn gvar_embed_mar(model: &GvarModel) -> Result<GvarEmbedding> {
    let s = gvar_to_structural(model);
    let exact = |c: &DMatrix<f64>| -> Result<KroneckerSum> {
        let j = min_term_count(c, s.dims, DEFAULT_RANK_TOL)?;
        if j == 0 {
            Ok(KroneckerSum::empty(s.dims))
        } else {
            nkp_decompose(c, s.dims, j, DEFAULT_RANK_TOL)
        }
    };
    Ok(GvarEmbedding {
        g0: exact(&s.g0)?,
        lags: s.lag_mats.iter().map(exact).collect::<Result<Vec<_>>>()?,
    })
}

/// `G₀⁻¹` and the lower Cholesky factors of the `Σ◇` blocks recovered from a
/// reduced-form covariance.
#[derive(Debug, Clone)]
pub struct CholeskyIdentification {
    pub g0_inv: DMatrix<f64>,
    pub sigma_sqrt_blocks: Vec<DMatrix<f64>>,
}

/// For a triangular system the lower Cholesky factor of `G₀⁻¹ Σ◇ G₀⁻ᵀ` is
/// `G₀⁻¹ Σ◇^{1/2}`, and since `G₀⁻¹` has identity diagonal blocks the two
/// factors separate blockwise.
pub fn cholesky_identify(sigma_reduced: &DMatrix<f64>, dims: Dims) -> Result<CholeskyIdentification> {
    dims.check_square(sigma_reduced, "reduced-form covariance")?;
    let (m, n) = (dims.m, dims.n);
    let l = cholesky_lower(sigma_reduced, "reduced-form covariance")?;
    let dmax = l.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    let blocks: Vec<DMatrix<f64>> = (0..n).map(|i| block(&l, m, i, i)).collect();
    for (i, b) in blocks.iter().enumerate() {
        let dmin = b.diagonal().iter().cloned().fold(f64::INFINITY, f64::min);
        if !(dmin > 1e-12 * dmax) {
            return Err(KronError::IllConditioned(format!(
                "diagonal block {i} of the Cholesky factor is numerically singular"
            )));
        }
    }

    let mut g0_inv = DMatrix::zeros(dims.mn(), dims.mn());
    for c in 0..n {
        // X · L_cc = L_rc  ⇔  L_ccᵀ · Xᵀ = L_rcᵀ
        let lcc_t = blocks[c].transpose();
        for r in c..n {
            let target = if r == c {
                DMatrix::identity(m, m)
            } else {
                let rhs = block(&l, m, r, c).transpose();
                lcc_t
                    .solve_upper_triangular(&rhs)
                    .ok_or_else(|| KronError::IllConditioned(format!("block {c} solve failed")))?
                    .transpose()
            };
            g0_inv.view_mut((r * m, c * m), (m, m)).copy_from(&target);
        }
    }
    Ok(CholeskyIdentification { g0_inv, sigma_sqrt_blocks: blocks })
}
