//! Model types: multi-term matrix autoregressions, unrestricted VARs and
//! global VARs, plus parameter counting and stability checks.

use nalgebra::DMatrix;

use crate::error::{KronError, Result};
use crate::kron::{is_normalized, kron, normalize_identifiable, Dims, KroneckerSum};
use crate::linalg::{block_diag, cholesky_lower, spectral_radius};

/// Stability margin used when generating simulation presets.
pub const DEFAULT_STABILITY_MARGIN: f64 = 0.02;

/// Tolerance on weight-row sums and zero patterns.
const WEIGHT_TOL: f64 = 1e-9;

/// Innovation covariance of `vec(U_t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// `Σ_c ⊗ Σ_r` with `sigma_r` (`m × m`) across variables and `sigma_c`
    /// (`n × n`) across regions.
    Separable { sigma_r: DMatrix<f64>, sigma_c: DMatrix<f64> },
    /// Unrestricted `mn × mn` covariance.
    General { sigma: DMatrix<f64> },
    /// One `m × m` block per region, regions mutually uncorrelated.
    BlockDiagonal { blocks: Vec<DMatrix<f64>> },
}

impl NoiseSpec {
    /// `Σ_r = I_m`, `Σ_c = I_n`.
    pub fn identity(dims: Dims) -> Self {
        NoiseSpec::Separable {
            sigma_r: DMatrix::identity(dims.m, dims.m),
            sigma_c: DMatrix::identity(dims.n, dims.n),
        }
    }

    pub fn block_identity(dims: Dims) -> Self {
        NoiseSpec::BlockDiagonal { blocks: vec![DMatrix::identity(dims.m, dims.m); dims.n] }
    }

    /// Checks shapes against `dims` and positive definiteness of every component.
    pub fn validate(&self, dims: Dims) -> Result<()> {
        self.cholesky_factor(dims).map(|_| ())
    }

    /// Dense `mn × mn` covariance.
    pub fn covariance(&self, dims: Dims) -> Result<DMatrix<f64>> {
        self.check_shapes(dims)?;
        Ok(match self {
            NoiseSpec::Separable { sigma_r, sigma_c } => kron(sigma_c, sigma_r),
            NoiseSpec::General { sigma } => sigma.clone(),
            NoiseSpec::BlockDiagonal { blocks } => block_diag(blocks),
        })
    }

    /// Lower Cholesky factor of [`NoiseSpec::covariance`]. For the separable
    /// kind this is `chol(Σ_c) ⊗ chol(Σ_r)`.
    pub fn cholesky_factor(&self, dims: Dims) -> Result<DMatrix<f64>> {
        self.check_shapes(dims)?;
        match self {
            NoiseSpec::Separable { sigma_r, sigma_c } => {
                let lr = cholesky_lower(sigma_r, "sigma_r")?;
                let lc = cholesky_lower(sigma_c, "sigma_c")?;
                Ok(kron(&lc, &lr))
            }
            NoiseSpec::General { sigma } => cholesky_lower(sigma, "sigma"),
            NoiseSpec::BlockDiagonal { blocks } => {
                let factors = blocks
                    .iter()
                    .enumerate()
                    .map(|(i, b)| cholesky_lower(b, &format!("noise block {i}")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(block_diag(&factors))
            }
        }
    }

    fn check_shapes(&self, dims: Dims) -> Result<()> {
        let bad = |what: &str, got: (usize, usize), want: usize| {
            Err(KronError::ShapeMismatch(format!("{what} is {got:?}, expected ({want}, {want})")))
        };
        match self {
            NoiseSpec::Separable { sigma_r, sigma_c } => {
                if sigma_r.shape() != (dims.m, dims.m) {
                    return bad("sigma_r", sigma_r.shape(), dims.m);
                }
                if sigma_c.shape() != (dims.n, dims.n) {
                    return bad("sigma_c", sigma_c.shape(), dims.n);
                }
            }
            NoiseSpec::General { sigma } => {
                if sigma.shape() != (dims.mn(), dims.mn()) {
                    return bad("sigma", sigma.shape(), dims.mn());
                }
            }
            NoiseSpec::BlockDiagonal { blocks } => {
                if blocks.len() != dims.n {
                    return Err(KronError::ShapeMismatch(format!(
                        "{} noise blocks for {} regions",
                        blocks.len(),
                        dims.n
                    )));
                }
                for b in blocks {
                    if b.shape() != (dims.m, dims.m) {
                        return bad("noise block", b.shape(), dims.m);
                    }
                }
            }
        }
        Ok(())
    }
}

/// `Y_t = Σᵢ Σⱼ A_{i,j} Y_{t−i} B_{i,j}′ + U_t`, with lag `i` coefficient
/// stored as a normalized [`KroneckerSum`].
#[derive(Debug, Clone, PartialEq)]
pub struct MarModel {
    dims: Dims,
    coeffs: Vec<KroneckerSum>,
    noise: NoiseSpec,
}

impl MarModel {
    /// Normalizes every lag's Kronecker sum; the lag order is `coeffs.len()`.
    pub fn new(dims: Dims, coeffs: Vec<KroneckerSum>, noise: NoiseSpec) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(KronError::InvalidModel("MAR lag order must be at least 1".into()));
        }
        let coeffs = coeffs
            .iter()
            .enumerate()
            .map(|(i, ks)| {
                if ks.dims() != dims {
                    return Err(KronError::ShapeMismatch(format!(
                        "lag {} coefficient has dims {:?}, model has {:?}",
                        i + 1,
                        ks.dims(),
                        dims
                    )));
                }
                normalize_identifiable(ks).map(|(k, _)| k)
            })
            .collect::<Result<Vec<_>>>()?;
        noise.validate(dims)?;
        Ok(MarModel { dims, coeffs, noise })
    }

    /// Stores coefficients that are already in normalized form without
    /// touching them, so that persisted models reload bit for bit. Fails with
    /// `InvalidModel` when a lag is not normalized within `1e-10`.
    pub fn from_normalized(dims: Dims, coeffs: Vec<KroneckerSum>, noise: NoiseSpec) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(KronError::InvalidModel("MAR lag order must be at least 1".into()));
        }
        for (i, ks) in coeffs.iter().enumerate() {
            if ks.dims() != dims {
                return Err(KronError::ShapeMismatch(format!(
                    "lag {} coefficient has dims {:?}, model has {:?}",
                    i + 1,
                    ks.dims(),
                    dims
                )));
            }
            if !is_normalized(ks, 1e-10) {
                return Err(KronError::InvalidModel(format!(
                    "lag {} coefficient is not in normalized form",
                    i + 1
                )));
            }
        }
        noise.validate(dims)?;
        Ok(MarModel { dims, coeffs, noise })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn p(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[KroneckerSum] {
        &self.coeffs
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn term_counts(&self) -> Vec<usize> {
        self.coeffs.iter().map(|c| c.len()).collect()
    }
}

/// `y_t = Σᵢ Aᵢ y_{t−i} + u_t` on the vectorized series.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    dims: Dims,
    coeff_mats: Vec<DMatrix<f64>>,
    sigma: DMatrix<f64>,
}

impl VarModel {
    pub fn new(dims: Dims, coeff_mats: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        if coeff_mats.is_empty() {
            return Err(KronError::InvalidModel("VAR lag order must be at least 1".into()));
        }
        for (i, a) in coeff_mats.iter().enumerate() {
            dims.check_square(a, &format!("lag {} coefficient", i + 1))?;
        }
        dims.check_square(&sigma, "sigma")?;
        cholesky_lower(&sigma, "sigma")?;
        Ok(VarModel { dims, coeff_mats, sigma })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn p(&self) -> usize {
        self.coeff_mats.len()
    }

    pub fn coeff_mats(&self) -> &[DMatrix<f64>] {
        &self.coeff_mats
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `(p·mn) × (p·mn)` companion matrix.
    pub fn companion(&self) -> DMatrix<f64> {
        let k = self.dims.mn();
        let p = self.p();
        let mut c = DMatrix::zeros(k * p, k * p);
        for (i, a) in self.coeff_mats.iter().enumerate() {
            c.view_mut((0, i * k), (k, k)).copy_from(a);
        }
        for i in 1..p {
            c.view_mut((i * k, (i - 1) * k), (k, k)).fill_with_identity();
        }
        c
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.companion())
    }
}

/// True iff the companion spectral radius is below `1 − margin`.
pub fn is_stable(model: &VarModel, margin: f64) -> bool {
    model.spectral_radius() < 1.0 - margin
}

/// Regional models linked through star variables `Y*_{t,:,i} = Σ_{j≠i} ω_{i,j} Y_{t,:,j}`:
///
/// `Y_{t,:,i} = Σ_{j=1..p} A_j^{(i)} Y_{t−j,:,i} + Σ_{k=0..q} B_k^{(i)} Y*_{t−k,:,i} + U_{t,:,i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GvarModel {
    dims: Dims,
    p: usize,
    q: usize,
    a_blocks: Vec<Vec<DMatrix<f64>>>,
    b_blocks: Vec<Vec<DMatrix<f64>>>,
    weights: DMatrix<f64>,
    triangular: bool,
    noise: NoiseSpec,
}

impl GvarModel {
    /// `a_blocks[i]` holds `p` matrices for region `i`; `b_blocks[i]` holds
    /// `q + 1` matrices, index 0 contemporaneous. Noise must be block diagonal.
    pub fn new(
        dims: Dims,
        a_blocks: Vec<Vec<DMatrix<f64>>>,
        b_blocks: Vec<Vec<DMatrix<f64>>>,
        weights: DMatrix<f64>,
        triangular: bool,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let (m, n) = (dims.m, dims.n);
        if a_blocks.len() != n || b_blocks.len() != n {
            return Err(KronError::ShapeMismatch(format!(
                "expected coefficient blocks for {n} regions, got {} and {}",
                a_blocks.len(),
                b_blocks.len()
            )));
        }
        let p = a_blocks[0].len();
        let q_plus = b_blocks[0].len();
        if p == 0 {
            return Err(KronError::InvalidModel("GVAR domestic lag order must be at least 1".into()));
        }
        if q_plus == 0 {
            return Err(KronError::InvalidModel(
                "GVAR needs at least the contemporaneous star coefficient".into(),
            ));
        }
        for i in 0..n {
            if a_blocks[i].len() != p || b_blocks[i].len() != q_plus {
                return Err(KronError::ShapeMismatch(format!(
                    "region {i} has {} domestic and {} star lags, expected {p} and {q_plus}",
                    a_blocks[i].len(),
                    b_blocks[i].len()
                )));
            }
            for mat in a_blocks[i].iter().chain(b_blocks[i].iter()) {
                if mat.shape() != (m, m) {
                    return Err(KronError::ShapeMismatch(format!(
                        "region {i} block is {:?}, expected ({m}, {m})",
                        mat.shape()
                    )));
                }
            }
        }
        validate_weights(&weights, triangular)?;
        if !matches!(noise, NoiseSpec::BlockDiagonal { .. }) {
            return Err(KronError::InvalidModel("GVAR noise must be block diagonal".into()));
        }
        noise.validate(dims)?;
        Ok(GvarModel { dims, p, q: q_plus - 1, a_blocks, b_blocks, weights, triangular, noise })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of structural lag matrices, `max(p, q)`.
    pub fn max_lag(&self) -> usize {
        self.p.max(self.q)
    }

    pub fn a_blocks(&self) -> &[Vec<DMatrix<f64>>] {
        &self.a_blocks
    }

    pub fn b_blocks(&self) -> &[Vec<DMatrix<f64>>] {
        &self.b_blocks
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn triangular(&self) -> bool {
        self.triangular
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// `Ω_i` blocks of the block-diagonal structural noise.
    pub fn noise_blocks(&self) -> &[DMatrix<f64>] {
        match &self.noise {
            NoiseSpec::BlockDiagonal { blocks } => blocks,
            _ => unreachable!("validated at construction"),
        }
    }

    /// Same coefficients with a different (validated) weight matrix.
    pub fn with_weights(&self, weights: DMatrix<f64>) -> Result<Self> {
        validate_weights(&weights, self.triangular)?;
        let mut out = self.clone();
        out.weights = weights;
        Ok(out)
    }

    /// Coefficient `A_j^{(i)}` for lag `j ≥ 1`, zero beyond `p`.
    pub fn a(&self, region: usize, lag: usize) -> DMatrix<f64> {
        if (1..=self.p).contains(&lag) {
            self.a_blocks[region][lag - 1].clone()
        } else {
            DMatrix::zeros(self.dims.m, self.dims.m)
        }
    }

    /// Coefficient `B_k^{(i)}` for lag `k ≥ 0`, zero beyond `q`.
    pub fn b(&self, region: usize, lag: usize) -> DMatrix<f64> {
        if lag <= self.q {
            self.b_blocks[region][lag].clone()
        } else {
            DMatrix::zeros(self.dims.m, self.dims.m)
        }
    }
}

/// Enforces zero diagonal, nonnegativity, row sums in {0, 1} and, when
/// `triangular`, zeros on and above the diagonal.
pub fn validate_weights(w: &DMatrix<f64>, triangular: bool) -> Result<()> {
    let n = w.nrows();
    if !w.is_square() || n == 0 {
        return Err(KronError::ShapeMismatch(format!("weight matrix is {:?}", w.shape())));
    }
    for i in 0..n {
        if w[(i, i)] != 0.0 {
            return Err(KronError::InvalidModel(format!("weight ({i},{i}) must be zero")));
        }
        let mut sum = 0.0;
        let mut any = false;
        for j in 0..n {
            let x = w[(i, j)];
            if !x.is_finite() || x < 0.0 {
                return Err(KronError::InvalidModel(format!("weight ({i},{j}) = {x} is negative")));
            }
            if triangular && j >= i && x != 0.0 {
                return Err(KronError::InvalidModel(format!(
                    "triangular system requires weight ({i},{j}) = 0"
                )));
            }
            any |= x != 0.0;
            sum += x;
        }
        if any && (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(KronError::InvalidModel(format!("weight row {i} sums to {sum}, not 1")));
        }
    }
    Ok(())
}

/// Equal weights `1/(n−1)` off the diagonal, or `1/i` on the strictly lower
/// triangle for triangular systems (row 0 then stays zero).
pub fn equal_weights(n: usize, triangular: bool) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if triangular {
            if j < i { 1.0 / i as f64 } else { 0.0 }
        } else if i != j {
            1.0 / (n - 1) as f64
        } else {
            0.0
        }
    })
}

/// Free parameters of a MAR with the given per-lag term counts,
/// `Σᵢ [(m² + n²)Jᵢ − Jᵢ²]`.
pub fn mar_param_count(dims: Dims, term_counts: &[usize]) -> usize {
    let s = dims.m * dims.m + dims.n * dims.n;
    term_counts.iter().map(|&j| s * j - j * j).sum()
}

/// Estimating equations minus free parameters of the structural GVAR fit with
/// unknown weights: `N[(N−2)pM² − N + 1]`.
pub fn gvar_overidentification_count(dims: Dims, p: usize) -> i64 {
    let (m, n, p) = (dims.m as i64, dims.n as i64, p as i64);
    let count = n * ((n - 2) * p * m * m - n + 1);
    let equations = p * (m * n) * (m * n) + n * m * m;
    let params = 2 * p * n * m * m + n * m * m + n * (n - 1);
    debug_assert_eq!(count, equations - params);
    count
}
