//! Independent reference implementations and seeded random generators for
//! the kronvar test suites.
//!
//! The oracles deliberately avoid the library routines they check: Kronecker
//! products and rearrangement are explicit index loops, singular values come
//! from a one-sided Jacobi iteration, and spectral radii from repeated
//! squaring.

use kronvar_core::kron::{Dims, KronTerm, KroneckerSum};
use kronvar_core::models::{GvarModel, MarModel, NoiseSpec};
use kronvar_core::rng::GaussianStream;
use kronvar_core::simulate::MatrixSeries;
use nalgebra::DMatrix;

/// Seeded source of random matrices and models.
pub struct Gen {
    stream: GaussianStream,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen { stream: GaussianStream::new(seed) }
    }

    pub fn normal(&mut self) -> f64 {
        self.stream.next_normal()
    }

    pub fn uniform(&mut self) -> f64 {
        self.stream.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.stream.next_normal())
    }

    /// `X Xᵀ / k + I/2`, comfortably positive definite.
    pub fn spd(&mut self, k: usize) -> DMatrix<f64> {
        let x = self.matrix(k, k);
        &x * x.transpose() / k as f64 + DMatrix::identity(k, k) * 0.5
    }

    pub fn dims(&mut self, lo: usize, hi: usize) -> Dims {
        Dims::new(self.int(lo, hi), self.int(lo, hi)).unwrap()
    }

    /// `j` random Gaussian factor pairs.
    pub fn kron_sum(&mut self, dims: Dims, j: usize) -> KroneckerSum {
        let terms = (0..j)
            .map(|_| KronTerm { a: self.matrix(dims.m, dims.m), b: self.matrix(dims.n, dims.n) })
            .collect();
        KroneckerSum::new(dims, terms).unwrap()
    }

    /// Random row-normalized weights with zero diagonal; the triangular
    /// pattern keeps only entries below the diagonal (first row all zero).
    pub fn weights(&mut self, n: usize, triangular: bool) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            let cols: Vec<usize> = (0..n).filter(|&k| k != i && (!triangular || k < i)).collect();
            if cols.is_empty() {
                continue;
            }
            let draws: Vec<f64> = cols.iter().map(|_| 0.2 + self.uniform()).collect();
            let total: f64 = draws.iter().sum();
            for (&k, d) in cols.iter().zip(draws) {
                w[(i, k)] = d / total;
            }
        }
        w
    }

    /// MAR model with `terms[i]` random terms at lag `i + 1`, rescaled so the
    /// companion spectral radius equals `radius`. Lag `j` is scaled by `cʲ`,
    /// which multiplies every companion eigenvalue by `c`.
    pub fn stable_mar(&mut self, dims: Dims, terms: &[usize], radius: f64, noise: NoiseSpec) -> MarModel {
        let mut coeffs: Vec<KroneckerSum> = terms.iter().map(|&j| self.kron_sum(dims, j)).collect();
        let mats: Vec<DMatrix<f64>> = coeffs.iter().map(|c| c.materialize()).collect();
        let rho = spectral_radius_oracle(&companion(&mats));
        if rho > 0.0 {
            let c = radius / rho;
            for (lag, ks) in coeffs.iter_mut().enumerate() {
                let s = c.powi(lag as i32 + 1);
                let scaled = ks.terms().iter().map(|t| KronTerm { a: &t.a * s, b: t.b.clone() }).collect();
                *ks = KroneckerSum::new(dims, scaled).unwrap();
            }
        }
        MarModel::new(dims, coeffs, noise).unwrap()
    }

    /// Random GVAR with `p` domestic and `q` star lags. Contemporaneous star
    /// blocks have entries of size `b0_scale`; lagged blocks are rescaled so
    /// the reduced form has spectral radius `radius`. Regions without
    /// neighbours get zero star blocks.
    pub fn stable_gvar(
        &mut self,
        dims: Dims,
        p: usize,
        q: usize,
        triangular: bool,
        b0_scale: f64,
        radius: f64,
    ) -> GvarModel {
        let (m, n) = (dims.m, dims.n);
        let w = self.weights(n, triangular);
        loop {
            let mut a: Vec<Vec<DMatrix<f64>>> =
                (0..n).map(|_| (0..p).map(|_| self.matrix(m, m) / (m as f64).sqrt()).collect()).collect();
            let mut b: Vec<Vec<DMatrix<f64>>> = (0..n)
                .map(|i| {
                    let star = w.row(i).iter().any(|x| *x != 0.0);
                    (0..=q)
                        .map(|k| {
                            if !star {
                                return DMatrix::zeros(m, m);
                            }
                            let scale = if k == 0 { b0_scale } else { 1.0 / (m as f64).sqrt() };
                            self.matrix(m, m) * scale
                        })
                        .collect()
                })
                .collect();
            let noise = NoiseSpec::BlockDiagonal { blocks: (0..n).map(|_| self.spd(m)).collect() };
            let (g0, lags) = structural_oracle(dims, &a, &b, &w);
            let Some(g0_inv) = g0.clone().try_inverse() else { continue };
            if g0.norm() * g0_inv.norm() > 1e6 {
                continue;
            }
            let reduced: Vec<DMatrix<f64>> = lags.iter().map(|l| &g0_inv * l).collect();
            let rho = spectral_radius_oracle(&companion(&reduced));
            if rho > 0.0 {
                let c = radius / rho;
                for i in 0..n {
                    for (j, mat) in a[i].iter_mut().enumerate() {
                        *mat *= c.powi(j as i32 + 1);
                    }
                    for (k, mat) in b[i].iter_mut().enumerate().skip(1) {
                        *mat *= c.powi(k as i32);
                    }
                }
            }
            return GvarModel::new(dims, a, b, w, triangular, noise).unwrap();
        }
    }
}

/// Companion matrix of `Φ₁ … Φ_p`.
pub fn companion(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let k = mats[0].nrows();
    let p = mats.len();
    let mut c = DMatrix::zeros(k * p, k * p);
    for (j, phi) in mats.iter().enumerate() {
        for r in 0..k {
            for s in 0..k {
                c[(r, j * k + s)] = phi[(r, s)];
            }
        }
    }
    for r in k..k * p {
        c[(r, r - k)] = 1.0;
    }
    c
}

/// `B ⊗ A` from the entry formula.
pub fn kron_oracle(b: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(m * n, m * n);
    for i1 in 0..n {
        for j1 in 0..n {
            for i2 in 0..m {
                for j2 in 0..m {
                    out[(i1 * m + i2, j1 * m + j2)] = b[(i1, j1)] * a[(i2, j2)];
                }
            }
        }
    }
    out
}

/// Column-major flattening.
pub fn vec_oracle(a: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    for c in 0..a.ncols() {
        for r in 0..a.nrows() {
            out.push(a[(r, c)]);
        }
    }
    out
}

/// Rearrangement by the four-index permutation: entry `(p, q)` of block
/// `(i, j)` goes to row `q·m + p`, column `j·n + i`.
pub fn rearrange_oracle(c: &DMatrix<f64>, m: usize, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m * m, n * n);
    for i in 0..n {
        for j in 0..n {
            for p in 0..m {
                for q in 0..m {
                    out[(q * m + p, j * n + i)] = c[(i * m + p, j * m + q)];
                }
            }
        }
    }
    out
}

/// Thin SVD by one-sided Jacobi rotations: returns `(U, σ, V)` with `σ`
/// sorted in decreasing order and `A = U diag(σ) Vᵀ`.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let transpose = a.nrows() < a.ncols();
    let mut u = if transpose { a.transpose() } else { a.clone() };
    let k = u.ncols();
    let mut v = DMatrix::<f64>::identity(k, k);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha: f64 = u.column(p).norm_squared();
                let beta: f64 = u.column(q).norm_squared();
                let gamma: f64 = u.column(p).dot(&u.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut u, &mut v] {
                    for r in 0..mat.nrows() {
                        let x = mat[(r, p)];
                        let y = mat[(r, q)];
                        mat[(r, p)] = c * x - s * y;
                        mat[(r, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..k).map(|c| (u.column(c).norm(), c)).collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let mut uu = DMatrix::zeros(u.nrows(), k);
    let mut vv = DMatrix::zeros(k, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &(s, src)) in order.iter().enumerate() {
        sigma.push(s);
        if s > 0.0 {
            uu.set_column(dst, &(u.column(src) / s));
        }
        vv.set_column(dst, &v.column(src));
    }
    if transpose {
        (vv, sigma, uu)
    } else {
        (uu, sigma, vv)
    }
}

/// Best rank-`j` approximation of `a` from the Jacobi SVD.
pub fn truncated_svd_oracle(a: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let (u, s, v) = jacobi_svd(a);
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for k in 0..j.min(s.len()) {
        out += u.column(k) * v.column(k).transpose() * s[k];
    }
    out
}

/// `sqrt(Σ_{k>j} σ_k²)` of the rearranged matrix.
pub fn tail_energy_oracle(c: &DMatrix<f64>, m: usize, n: usize, j: usize) -> f64 {
    let (_, s, _) = jacobi_svd(&rearrange_oracle(c, m, n));
    s.iter().skip(j).map(|x| x * x).sum::<f64>().sqrt()
}

/// Number of Jacobi singular values of the rearranged matrix above `tol·σ₁`.
pub fn kron_rank_oracle(c: &DMatrix<f64>, m: usize, n: usize, tol: f64) -> usize {
    let (_, s, _) = jacobi_svd(&rearrange_oracle(c, m, n));
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * top).count()
}

/// Spectral radius from `ρ(A) = lim ‖A^{2^k}‖^{1/2^k}` with renormalized squaring.
pub fn spectral_radius_oracle(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut mat = a / norm;
    let mut log_scale = norm.ln();
    let mut power = 1.0f64;
    for _ in 0..40 {
        let sq = &mat * &mat;
        let nu = sq.norm();
        if nu == 0.0 {
            return 0.0;
        }
        mat = sq / nu;
        log_scale = 2.0 * log_scale + nu.ln();
        power *= 2.0;
    }
    (log_scale / power).exp()
}

/// `Σᵢ [(m²+n²)Jᵢ − Jᵢ²]` by counting: every factor entry is a parameter,
/// and each pair `k ≤ l` of terms carries one restriction from `𝒜′𝒜 = I`
/// while each pair `k > l` carries one zero of the triangular `ℬ′`.
pub fn mar_param_count_oracle(m: usize, n: usize, terms: &[usize]) -> i64 {
    let mut total = 0i64;
    for &j in terms {
        let mut entries = 0i64;
        for _ in 0..j {
            entries += (m * m + n * n) as i64;
        }
        let (mut orthonormal, mut triangular_zeros) = (0i64, 0i64);
        for k in 0..j {
            for l in 0..j {
                if k <= l {
                    orthonormal += 1;
                } else {
                    triangular_zeros += 1;
                }
            }
        }
        total += entries - orthonormal - triangular_zeros;
    }
    total
}

/// Equations minus parameters of the structural fit, counted item by item:
/// one equation per entry of every reduced lag matrix and `m²` moments per
/// region; parameters are the entries of all `A_j`, `B_j` (`j ≥ 1`) and `B₀`
/// blocks plus the free off-diagonal weights net of the row-sum constraints.
pub fn overidentification_oracle(m: usize, n: usize, p: usize) -> i64 {
    let mut equations = 0i64;
    for _lag in 0..p {
        for _r in 0..m * n {
            for _c in 0..m * n {
                equations += 1;
            }
        }
    }
    for _region in 0..n {
        equations += (m * m) as i64;
    }
    let mut params = 0i64;
    for _region in 0..n {
        for _lag in 0..p {
            params += 2 * (m * m) as i64;
        }
        params += (m * m) as i64;
        for _other in 0..n - 1 {
            params += 1;
        }
    }
    equations - params
}

/// `(G₀, [L₁ …])` assembled block by block.
pub fn structural_oracle(
    dims: Dims,
    a: &[Vec<DMatrix<f64>>],
    b: &[Vec<DMatrix<f64>>],
    w: &DMatrix<f64>,
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let (m, n) = (dims.m, dims.n);
    let p = a[0].len();
    let q = b[0].len() - 1;
    let lags = p.max(q);
    let mut g0 = DMatrix::identity(m * n, m * n);
    let mut ls = vec![DMatrix::zeros(m * n, m * n); lags];
    for i in 0..n {
        for k in 0..n {
            let wik = w[(i, k)];
            let blk = &b[i][0] * wik;
            let mut view = g0.view_mut((i * m, k * m), (m, m));
            view -= blk;
            for j in 1..=lags {
                let mut contrib = DMatrix::zeros(m, m);
                if i == k && j <= p {
                    contrib += &a[i][j - 1];
                }
                if j <= q {
                    contrib += &b[i][j] * wik;
                }
                let mut view = ls[j - 1].view_mut((i * m, k * m), (m, m));
                view += contrib;
            }
        }
    }
    (g0, ls)
}

/// Matrix-form MAR recursion `Y_t = Σ A Y_{t−i} Bᵀ + U_t` written with explicit loops.
pub fn mar_recursion_oracle(model: &MarModel, noise: &MatrixSeries) -> Vec<DMatrix<f64>> {
    let p = model.p();
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(noise.t_len());
    for t in 0..noise.t_len() {
        let mut y = noise.get(t).clone();
        for lag in 1..=p.min(t) {
            for term in model.coeffs()[lag - 1].terms() {
                y += &term.a * &out[t - lag] * term.b.transpose();
            }
        }
        out.push(y);
    }
    out
}

/// Structural residuals `U_{t,:,i}` of each regional equation for `t ≥ max lag`.
pub fn regional_residuals_oracle(y: &MatrixSeries, model: &GvarModel) -> Vec<DMatrix<f64>> {
    let dims = y.dims();
    let (m, n) = (dims.m, dims.n);
    let (p, q) = (model.p(), model.q());
    let start = p.max(q);
    let w = model.weights();
    let star = |t: usize, i: usize| {
        let mut s = nalgebra::DVector::zeros(m);
        for k in 0..n {
            s += y.get(t).column(k) * w[(i, k)];
        }
        s
    };
    (start..y.t_len())
        .map(|t| {
            let mut u = DMatrix::zeros(m, n);
            for i in 0..n {
                let mut r = y.get(t).column(i).into_owned();
                for j in 1..=p {
                    r -= &model.a_blocks()[i][j - 1] * y.get(t - j).column(i);
                }
                for k in 0..=q {
                    r -= &model.b_blocks()[i][k] * star(t - k, i);
                }
                u.set_column(i, &r);
            }
            u
        })
        .collect()
}
