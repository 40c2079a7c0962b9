//! Kronecker products, the rearrangement operator and Kronecker-sum decomposition.
//!
//! An `mn × mn` matrix is viewed as an `n × n` grid of `m × m` blocks. The
//! rearrangement operator maps block `(i, j)` to column `j·n + i` of an
//! `m² × n²` matrix holding `vec` of that block, so that
//! `rearrange(B ⊗ A) = vec(A) vec(B)′`. A sum of `J` Kronecker products
//! therefore rearranges to a rank-`J` matrix, and the best `J`-term
//! approximation of any matrix is a truncated SVD of its rearrangement.
//!
//! Factor pairs are only identified up to an invertible mixing of the terms.
//! [`normalize_identifiable`] fixes the representative: the stacked `vec(Aⱼ)`
//! columns are orthonormal and the stacked `vec(Bⱼ)′` rows are in echelon
//! form with strictly positive pivots (upper triangular with positive
//! diagonal whenever the leading `J` columns of the rearranged matrix are
//! linearly independent, which is the generic case).

use nalgebra::DMatrix;

use crate::error::{KronError, Result};
use crate::linalg::{singular_values, svd, unvec, vec};

/// Default relative singular-value threshold for numerical Kronecker rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Diagonal entries of the a-stack R factor below this fraction of
/// `‖a_stack‖_F` mark the terms as degenerate.
const DEGENERATE_TOL: f64 = 1e-12;

/// Residual threshold (relative to `‖P‖_F`) for accepting a pivot column when
/// bringing the b-stack into echelon form.
const PIVOT_TOL: f64 = 1e-11;

/// Number of variables `m` and regions `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
}

impl Dims {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(KronError::ShapeMismatch(format!(
                "dimensions must be positive, got m={m}, n={n}"
            )));
        }
        Ok(Dims { m, n })
    }

    /// Size `mn` of the vectorized observation.
    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    /// Largest possible Kronecker rank, `min(m², n²)`.
    pub fn max_terms(&self) -> usize {
        (self.m * self.m).min(self.n * self.n)
    }

    pub(crate) fn check_square(&self, c: &DMatrix<f64>, what: &str) -> Result<()> {
        let k = self.mn();
        if c.nrows() != k || c.ncols() != k {
            return Err(KronError::ShapeMismatch(format!(
                "{what} is {}x{}, expected {k}x{k} for m={}, n={}",
                c.nrows(),
                c.ncols(),
                self.m,
                self.n
            )));
        }
        Ok(())
    }
}

/// One term `B ⊗ A` of a Kronecker sum.
#[derive(Debug, Clone, PartialEq)]
pub struct KronTerm {
    /// `m × m` left factor (acts on variables).
    pub a: DMatrix<f64>,
    /// `n × n` right factor (acts on regions).
    pub b: DMatrix<f64>,
}

/// `Σⱼ Bⱼ ⊗ Aⱼ` stored as its factor pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerSum {
    dims: Dims,
    terms: Vec<KronTerm>,
}

impl KroneckerSum {
    pub fn new(dims: Dims, terms: Vec<KronTerm>) -> Result<Self> {
        for (k, t) in terms.iter().enumerate() {
            if t.a.shape() != (dims.m, dims.m) || t.b.shape() != (dims.n, dims.n) {
                return Err(KronError::ShapeMismatch(format!(
                    "term {k}: A is {:?}, B is {:?}, expected ({m},{m}) and ({n},{n})",
                    t.a.shape(),
                    t.b.shape(),
                    m = dims.m,
                    n = dims.n
                )));
            }
        }
        Ok(KroneckerSum { dims, terms })
    }

    /// Sum with no terms; materializes to the zero matrix.
    pub fn empty(dims: Dims) -> Self {
        KroneckerSum { dims, terms: Vec::new() }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn terms(&self) -> &[KronTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The dense `mn × mn` matrix `Σⱼ Bⱼ ⊗ Aⱼ`.
    pub fn materialize(&self) -> DMatrix<f64> {
        let k = self.dims.mn();
        let mut out = DMatrix::zeros(k, k);
        for t in &self.terms {
            out += kron(&t.b, &t.a);
        }
        out
    }

    /// Column stacks `[vec A₁ … vec A_J]` and `[vec B₁ … vec B_J]`.
    pub fn stacks(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (m, n) = (self.dims.m, self.dims.n);
        let j = self.terms.len();
        let mut a = DMatrix::zeros(m * m, j);
        let mut b = DMatrix::zeros(n * n, j);
        for (k, t) in self.terms.iter().enumerate() {
            a.column_mut(k).copy_from(&vec(&t.a));
            b.column_mut(k).copy_from(&vec(&t.b));
        }
        (a, b)
    }
}

/// Stacked factors of a normalized Kronecker sum.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorStacks {
    /// `m² × J`, orthonormal columns `vec(Aⱼ)`.
    pub a_stack: DMatrix<f64>,
    /// `n² × J`, columns `vec(Bⱼ)`; its transpose is in echelon form.
    pub b_stack: DMatrix<f64>,
    /// Column of `b_stack′` holding the positive pivot of each row.
    pub pivots: Vec<usize>,
}

/// Kronecker product `B ⊗ A`: block `(i, j)` equals `B[i, j]·A`.
pub fn kron(b: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j1 in 0..bc {
        for i1 in 0..br {
            let s = b[(i1, j1)];
            for j2 in 0..ac {
                for i2 in 0..ar {
                    out[(i1 * ar + i2, j1 * ac + j2)] = s * a[(i2, j2)];
                }
            }
        }
    }
    out
}

/// The rearrangement operator: `m² × n²` matrix whose column `j·n + i` is
/// `vec` of block `(i, j)` of `c`.
pub fn rearrange(c: &DMatrix<f64>, dims: Dims) -> Result<DMatrix<f64>> {
    dims.check_square(c, "matrix to rearrange")?;
    let (m, n) = (dims.m, dims.n);
    let mut r = DMatrix::zeros(m * m, n * n);
    for j in 0..n {
        for i in 0..n {
            let col = j * n + i;
            for q in 0..m {
                for p in 0..m {
                    r[(q * m + p, col)] = c[(i * m + p, j * m + q)];
                }
            }
        }
    }
    Ok(r)
}

/// Inverse of [`rearrange`]; a pure permutation of entries.
pub fn inverse_rearrange(r: &DMatrix<f64>, dims: Dims) -> Result<DMatrix<f64>> {
    let (m, n) = (dims.m, dims.n);
    if r.shape() != (m * m, n * n) {
        return Err(KronError::ShapeMismatch(format!(
            "rearranged matrix is {:?}, expected ({}, {})",
            r.shape(),
            m * m,
            n * n
        )));
    }
    let mut c = DMatrix::zeros(m * n, m * n);
    for j in 0..n {
        for i in 0..n {
            let col = j * n + i;
            for q in 0..m {
                for p in 0..m {
                    c[(i * m + p, j * m + q)] = r[(q * m + p, col)];
                }
            }
        }
    }
    Ok(c)
}

/// Singular values of `rearrange(c)` in descending order.
pub fn rearranged_singular_values(c: &DMatrix<f64>, dims: Dims) -> Result<Vec<f64>> {
    let r = rearrange(c, dims)?;
    singular_values(&r)
}

fn numerical_rank(sv: &[f64], tol: f64) -> usize {
    match sv.first() {
        Some(&s0) if s0 > 0.0 => sv.iter().filter(|&&s| s > tol * s0).count(),
        _ => 0,
    }
}

/// Minimal number of Kronecker terms reproducing `c`: the count of singular
/// values of `rearrange(c)` above `tol` times the largest.
pub fn min_term_count(c: &DMatrix<f64>, dims: Dims, tol: f64) -> Result<usize> {
    let sv = rearranged_singular_values(c, dims)?;
    Ok(numerical_rank(&sv, tol))
}

/// Options for [`nkp_decompose_with`].
#[derive(Debug, Clone, Copy)]
pub struct NkpOptions {
    /// Singular values at or below `tol·σ₁` count as zero.
    pub tol: f64,
    /// Fail with `RankDeficient` instead of truncating to the numerical rank.
    pub strict: bool,
}

impl Default for NkpOptions {
    fn default() -> Self {
        NkpOptions { tol: DEFAULT_RANK_TOL, strict: false }
    }
}

/// Full output of a nearest-Kronecker-sum decomposition.
#[derive(Debug, Clone)]
pub struct NkpDecomposition {
    pub sum: KroneckerSum,
    pub stacks: FactorStacks,
    /// All singular values of the rearranged matrix, descending.
    pub singular_values: Vec<f64>,
    /// `sqrt(Σ_{k>J} σ_k²)`, the Frobenius error of the truncation.
    pub tail_error: f64,
}

/// Best Frobenius-norm `j`-term Kronecker approximation of `c`, normalized.
///
/// Non-strict: when `j` exceeds the numerical rank the result holds only as
/// many terms as that rank (possibly none).
pub fn nkp_decompose(c: &DMatrix<f64>, dims: Dims, j: usize, tol: f64) -> Result<KroneckerSum> {
    nkp_decompose_with(c, dims, j, NkpOptions { tol, strict: false }).map(|d| d.sum)
}

pub fn nkp_decompose_with(
    c: &DMatrix<f64>,
    dims: Dims,
    j: usize,
    opts: NkpOptions,
) -> Result<NkpDecomposition> {
    let max = dims.max_terms();
    if j == 0 || j > max {
        return Err(KronError::InvalidTermCount { requested: j, max });
    }
    let r = rearrange(c, dims)?;
    let dec = svd(&r)?;
    let sv = dec.singular_values;
    let rank = numerical_rank(&sv, opts.tol);
    if opts.strict && j > rank {
        return Err(KronError::RankDeficient { requested: j, rank });
    }
    let keep = j.min(rank);
    let (m, n) = (dims.m, dims.n);
    let terms = (0..keep)
        .map(|k| KronTerm {
            a: unvec(dec.u.column(k).as_slice(), m, m),
            b: unvec((dec.v.column(k) * sv[k]).as_slice(), n, n),
        })
        .collect();
    let raw = KroneckerSum::new(dims, terms)?;
    let (sum, stacks) = normalize_identifiable(&raw)?;
    let tail_error = sv[keep..].iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok(NkpDecomposition { sum, stacks, singular_values: sv, tail_error })
}

/// Brings a Kronecker sum into the identifiable representation: orthonormal
/// a-stack, b-stack transpose in echelon form with positive pivots. The
/// materialized matrix is unchanged up to rounding.
pub fn normalize_identifiable(ks: &KroneckerSum) -> Result<(KroneckerSum, FactorStacks)> {
    let dims = ks.dims;
    let (m, n) = (dims.m, dims.n);
    let jn = ks.len();
    let (a_stack, b_stack) = ks.stacks();
    if jn == 0 {
        return Ok((ks.clone(), FactorStacks { a_stack, b_stack, pivots: Vec::new() }));
    }
    if jn > dims.max_terms() {
        return Err(KronError::DegenerateTerms(format!(
            "{jn} terms exceed the maximal Kronecker rank {}",
            dims.max_terms()
        )));
    }

    let a_norm = a_stack.norm();
    let a_r = a_stack.clone().qr().r();
    if let Some(k) = (0..jn).find(|&k| !(a_r[(k, k)].abs() > DEGENERATE_TOL * a_norm)) {
        return Err(KronError::DegenerateTerms(format!(
            "a-stack column {k} is linearly dependent on the preceding columns"
        )));
    }

    let p = &a_stack * b_stack.transpose();
    let pivots = echelon_pivots(&p, jn).ok_or_else(|| {
        KronError::DegenerateTerms(format!(
            "rearranged matrix has fewer than {jn} independent columns (b-stack rank deficient)"
        ))
    })?;

    let mut lead = DMatrix::zeros(m * m, jn);
    for (k, &col) in pivots.iter().enumerate() {
        lead.column_mut(k).copy_from(&p.column(col));
    }
    let qr = lead.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..jn {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    let mut bt = q.transpose() * &p;
    for (k, &piv) in pivots.iter().enumerate() {
        for l in 0..piv {
            bt[(k, l)] = 0.0;
        }
        if !(bt[(k, piv)] > 0.0) {
            return Err(KronError::DegenerateTerms(format!(
                "non-positive pivot in row {k} of the b-stack"
            )));
        }
    }

    let terms = (0..jn)
        .map(|k| KronTerm {
            a: unvec(q.column(k).as_slice(), m, m),
            b: unvec(bt.row(k).transpose().as_slice(), n, n),
        })
        .collect();
    let stacks = FactorStacks { a_stack: q, b_stack: bt.transpose(), pivots };
    Ok((KroneckerSum { dims, terms }, stacks))
}

/// Whether `ks` satisfies the normalized-form invariants: a-stack columns
/// orthonormal within `tol`, and every row of the b-stack transpose starting
/// with a positive entry strictly to the right of the previous row's.
pub fn is_normalized(ks: &KroneckerSum, tol: f64) -> bool {
    let (a, b) = ks.stacks();
    let j = ks.len();
    if (a.transpose() * &a - DMatrix::identity(j, j)).amax() > tol {
        return false;
    }
    let bt = b.transpose();
    let mut last: Option<usize> = None;
    for k in 0..j {
        let Some(piv) = (0..bt.ncols()).find(|&c| bt[(k, c)] != 0.0) else {
            return false;
        };
        if bt[(k, piv)] < 0.0 || last.is_some_and(|l| piv <= l) {
            return false;
        }
        last = Some(piv);
    }
    true
}

/// First `j` columns of `p` (left to right) that are not in the span of the
/// columns already chosen. Gram-Schmidt with one re-orthogonalization pass.
fn echelon_pivots(p: &DMatrix<f64>, j: usize) -> Option<Vec<usize>> {
    let scale = p.norm();
    if scale == 0.0 {
        return None;
    }
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(j);
    let mut pivots = Vec::with_capacity(j);
    for col in 0..p.ncols() {
        if pivots.len() == j {
            break;
        }
        let mut r = p.column(col).into_owned();
        for _ in 0..2 {
            for qv in &basis {
                let c = qv.dot(&r);
                r.axpy(-c, qv, 1.0);
            }
        }
        let norm = r.norm();
        if norm > PIVOT_TOL * scale {
            basis.push(r / norm);
            pivots.push(col);
        }
    }
    (pivots.len() == j).then_some(pivots)
}
