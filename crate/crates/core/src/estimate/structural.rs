//! Structural GVAR parameters from reduced-form estimates.
//!
//! With `Φⱼ` the reduced-form coefficients, block row `i` of
//! `(I − B₀◇W)Φⱼ − 𝒜ⱼ◇ − ℬⱼ◇W` reads
//!
//! ```text
//! Φⱼ[i,:] − B₀⁽ⁱ⁾ Σ_k ω_{i,k} Φⱼ[k,:] − Aⱼ⁽ⁱ⁾ Eᵢ − Bⱼ⁽ⁱ⁾ (ωᵢ′ ⊗ I_m)
//! ```
//!
//! where `Eᵢ` selects block column `i`. This is linear in the region's blocks
//! for fixed weights and linear in the region's weights for fixed blocks. The
//! star/residual orthogonality moments `B₀⁽ⁱ⁾ Σ_k ω_{i,k} S_{k,i}`, with
//! `S_{k,i} = Σ_t Y_{t,:,k} Û_{t,:,i}′` standardized, enter as a squared
//! penalty with weight [`MOMENT_PENALTY`].

use nalgebra::{DMatrix, DVector};

use super::weights::{free_set, simplex_qp};
use super::FitReport;
use crate::error::{KronError, Result};
use crate::linalg::{spd_solve, vec};
use crate::models::{equal_weights, gvar_overidentification_count, validate_weights, GvarModel, NoiseSpec};
use crate::simulate::MatrixSeries;
use crate::transforms::gvar_to_structural;

/// Weight of the squared standardized orthogonality moments in the objective.
pub const MOMENT_PENALTY: f64 = 1.0;

const TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;

struct Problem {
    m: usize,
    n: usize,
    p: usize,
    /// `phi[j][i]` is block row `i` of `Φ_{j+1}` (`m × mn`).
    phi: Vec<Vec<DMatrix<f64>>>,
    /// `moments[i][k]` is the standardized `S_{k,i}`.
    moments: Vec<Vec<DMatrix<f64>>>,
    triangular: bool,
}

/// Per-region unknowns: `B₀`, `A₁..A_p`, `B₁..B_p`.
#[derive(Clone)]
struct RegionBlocks {
    b0: DMatrix<f64>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
}

impl Problem {
    /// `m × mn` selector of block column `k` scaled by `s`.
    fn selector(&self, k: usize, s: f64) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.m, self.m * self.n);
        for r in 0..self.m {
            e[(r, k * self.m + r)] = s;
        }
        e
    }

    fn spread(&self, w_row: &[f64]) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.m, self.m * self.n);
        for (k, &s) in w_row.iter().enumerate() {
            for r in 0..self.m {
                e[(r, k * self.m + r)] = s;
            }
        }
        e
    }

    fn psi(&self, j: usize, w_row: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.m * self.n);
        for (k, &s) in w_row.iter().enumerate() {
            if s != 0.0 {
                out += &self.phi[j][k] * s;
            }
        }
        out
    }

    fn moment(&self, i: usize, w_row: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.m);
        for (k, &s) in w_row.iter().enumerate() {
            if s != 0.0 {
                out += &self.moments[i][k] * s;
            }
        }
        out
    }

    fn region_objective(&self, i: usize, w_row: &[f64], blocks: &RegionBlocks) -> f64 {
        let ei = self.selector(i, 1.0);
        let spread = self.spread(w_row);
        let mut total = 0.0;
        for j in 0..self.p {
            let r = &self.phi[j][i] - &blocks.b0 * self.psi(j, w_row) - &blocks.a[j] * &ei - &blocks.b[j] * &spread;
            total += r.norm_squared();
        }
        total + MOMENT_PENALTY * (&blocks.b0 * self.moment(i, w_row)).norm_squared()
    }

    /// Least squares for region `i`'s blocks given its weight row.
    fn solve_blocks(&self, i: usize, w_row: &[f64]) -> Result<RegionBlocks> {
        let (m, p) = (self.m, self.p);
        let star = w_row.iter().any(|x| *x != 0.0);
        let zero = DMatrix::zeros(m, m);
        // unknown layout: [A_1..A_p, B_0, B_1..B_p]
        let nb = if star { 2 * p + 1 } else { p };
        let mut gram = DMatrix::zeros(nb * m, nb * m);
        let mut cross = DMatrix::zeros(m, nb * m);
        let ei = self.selector(i, 1.0);
        let spread = self.spread(w_row);
        for j in 0..p {
            let mut x = DMatrix::zeros(nb * m, m * self.n);
            x.view_mut((j * m, 0), (m, m * self.n)).copy_from(&ei);
            if star {
                x.view_mut((p * m, 0), (m, m * self.n)).copy_from(&self.psi(j, w_row));
                x.view_mut(((p + 1 + j) * m, 0), (m, m * self.n)).copy_from(&spread);
            }
            gram += &x * x.transpose();
            cross += &self.phi[j][i] * x.transpose();
        }
        if star {
            let mm = self.moment(i, w_row);
            let pen = &mm * mm.transpose() * MOMENT_PENALTY;
            let mut view = gram.view_mut((p * m, p * m), (m, m));
            view += pen;
        }
        let theta = spd_solve(&gram, &cross.transpose())
            .ok_or_else(|| {
                KronError::RankDeficientRegressors(format!(
                    "region {i}: structural equations do not identify the coefficient blocks"
                ))
            })?
            .transpose();
        let blk = |c: usize| theta.view((0, c * m), (m, m)).into_owned();
        Ok(RegionBlocks {
            a: (0..p).map(blk).collect(),
            b0: if star { blk(p) } else { zero.clone() },
            b: if star { (0..p).map(|j| blk(p + 1 + j)).collect() } else { vec![zero; p] },
        })
    }

    /// Simplex-constrained least squares for region `i`'s weights given its blocks.
    fn solve_weights(&self, i: usize, blocks: &RegionBlocks) -> Result<Vec<f64>> {
        let free = free_set(self.n, i, self.triangular);
        let mut row = vec![0.0; self.n];
        match free.len() {
            0 => return Ok(row),
            1 => {
                row[free[0]] = 1.0;
                return Ok(row);
            }
            _ => {}
        }
        let ei = self.selector(i, 1.0);
        let pen = MOMENT_PENALTY.sqrt();
        // columns: stacked vec of each lag residual contribution, then the moment block
        let len = self.p * self.m * self.m * self.n + self.m * self.m;
        let mut target = DVector::zeros(len);
        let mut regs = DMatrix::zeros(len, free.len());
        let seg = self.m * self.m * self.n;
        for j in 0..self.p {
            let t = &self.phi[j][i] - &blocks.a[j] * &ei;
            target.rows_mut(j * seg, seg).copy_from(&vec(&t));
            for (c, &k) in free.iter().enumerate() {
                let x = &blocks.b0 * &self.phi[j][k] + &blocks.b[j] * self.selector(k, 1.0);
                regs.view_mut((j * seg, c), (seg, 1)).copy_from(&vec(&x));
            }
        }
        for (c, &k) in free.iter().enumerate() {
            let x = &blocks.b0 * &self.moments[i][k] * pen;
            regs.view_mut((self.p * seg, c), (self.m * self.m, 1)).copy_from(&vec(&x));
        }
        let h = regs.transpose() * &regs;
        let g = regs.transpose() * target;
        let sol = simplex_qp(&h, &g).map_err(|e| match e {
            KronError::InfeasibleConstraints(msg) => {
                KronError::InfeasibleConstraints(format!("region {i}: {msg}"))
            }
            other => other,
        })?;
        for (c, &k) in free.iter().enumerate() {
            row[k] = sol[c];
        }
        Ok(row)
    }
}

/// Initial GVAR estimate from a reduced-form fit (MAR or VAR) by least squares
/// on the structural recovery equations plus the orthogonality-moment penalty.
///
/// `y` is the data the fit was computed on; `p` is the lag order of both the
/// fit and the returned model (`q = p`). With `w_tilde` given the weights are
/// held fixed; otherwise they start from equal weights and are alternated with
/// the coefficient blocks, which requires a positive over-identification
/// count. Noise blocks are the covariances of `Ĝ₀ û_t` (identity when those
/// are not positive definite, e.g. for noiseless inputs).
pub fn structural_init(
    y: &MatrixSeries,
    fit: &FitReport,
    w_tilde: Option<&DMatrix<f64>>,
    p: usize,
    triangular: bool,
) -> Result<GvarModel> {
    let dims = y.dims();
    let (m, n) = (dims.m, dims.n);
    let phis = fit.estimate.reduced_coefficients()?;
    if phis.len() != p || p == 0 {
        return Err(KronError::ShapeMismatch(format!(
            "fit has {} lags, structural model requested with p = {p}",
            phis.len()
        )));
    }
    if fit.residuals.dims() != dims || fit.residuals.t_len() > y.t_len() {
        return Err(KronError::ShapeMismatch("residuals do not match the data".into()));
    }
    if w_tilde.is_none() {
        let count = gvar_overidentification_count(dims, p);
        if count <= 0 {
            return Err(KronError::IdentificationDeficit { count });
        }
    }

    let problem = Problem {
        m,
        n,
        p,
        phi: phis
            .iter()
            .map(|phi| (0..n).map(|i| phi.view((i * m, 0), (m, m * n)).into_owned()).collect())
            .collect(),
        moments: standardized_moments(y, &fit.residuals),
        triangular,
    };

    let mut w = match w_tilde {
        Some(w) => {
            validate_weights(w, triangular)?;
            if w.shape() != (n, n) {
                return Err(KronError::ShapeMismatch(format!("weights are {:?}", w.shape())));
            }
            w.clone()
        }
        None => equal_weights(n, triangular),
    };
    let row = |w: &DMatrix<f64>, i: usize| -> Vec<f64> { w.row(i).iter().cloned().collect() };

    let mut blocks = (0..n).map(|i| problem.solve_blocks(i, &row(&w, i))).collect::<Result<Vec<_>>>()?;
    if w_tilde.is_none() {
        let total = |w: &DMatrix<f64>, blocks: &[RegionBlocks]| -> f64 {
            (0..n).map(|i| problem.region_objective(i, &row(w, i), &blocks[i])).sum()
        };
        let mut prev = total(&w, &blocks);
        for _ in 0..MAX_ITER {
            for i in 0..n {
                let r = problem.solve_weights(i, &blocks[i])?;
                for (k, v) in r.into_iter().enumerate() {
                    w[(i, k)] = v;
                }
            }
            blocks = (0..n).map(|i| problem.solve_blocks(i, &row(&w, i))).collect::<Result<Vec<_>>>()?;
            let cur = total(&w, &blocks);
            if (prev - cur).abs() <= TOL * prev.abs().max(f64::MIN_POSITIVE) {
                break;
            }
            prev = cur;
        }
    }

    let a_blocks: Vec<Vec<DMatrix<f64>>> = blocks.iter().map(|b| b.a.clone()).collect();
    let b_blocks: Vec<Vec<DMatrix<f64>>> = blocks
        .iter()
        .map(|b| std::iter::once(b.b0.clone()).chain(b.b.iter().cloned()).collect())
        .collect();
    let provisional = GvarModel::new(
        dims,
        a_blocks.clone(),
        b_blocks.clone(),
        w.clone(),
        triangular,
        NoiseSpec::block_identity(dims),
    )?;
    let g0 = gvar_to_structural(&provisional).g0;
    let noise_blocks = structural_noise(&g0, &fit.residuals, m, n);
    GvarModel::new(dims, a_blocks, b_blocks, w, triangular, NoiseSpec::BlockDiagonal { blocks: noise_blocks })
}

/// `S_{k,i} = Σ_t Y_{t,:,k} Û_{t,:,i}′ / (T_eff · rms(Y) · rms(Û))`, with the
/// residuals aligned to the end of the data.
fn standardized_moments(y: &MatrixSeries, residuals: &MatrixSeries) -> Vec<Vec<DMatrix<f64>>> {
    let (m, n) = (y.dims().m, y.dims().n);
    let t_eff = residuals.t_len();
    let offset = y.t_len() - t_eff;
    let count = (t_eff * m * n) as f64;
    let rms_y = ((offset..y.t_len()).map(|t| y.get(t).norm_squared()).sum::<f64>() / count).sqrt();
    let rms_u = (residuals.data().iter().map(|u| u.norm_squared()).sum::<f64>() / count).sqrt();
    let scale = t_eff as f64 * rms_y * rms_u;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    if !(scale > 0.0) {
                        return DMatrix::zeros(m, m);
                    }
                    let mut s = DMatrix::zeros(m, m);
                    for (c, t) in (offset..y.t_len()).enumerate() {
                        s += y.get(t).column(k) * residuals.get(c).column(i).transpose();
                    }
                    s / scale
                })
                .collect()
        })
        .collect()
}

fn structural_noise(g0: &DMatrix<f64>, residuals: &MatrixSeries, m: usize, n: usize) -> Vec<DMatrix<f64>> {
    let t_eff = residuals.t_len() as f64;
    let mut s = DMatrix::zeros(m * n, m * n);
    for t in 0..residuals.t_len() {
        let u = g0 * residuals.vectorized(t);
        s += &u * u.transpose();
    }
    s /= t_eff;
    (0..n)
        .map(|i| {
            let b = s.view((i * m, i * m), (m, m)).into_owned();
            let b = (&b + b.transpose()) * 0.5;
            if b.clone().cholesky().is_some() {
                b
            } else {
                DMatrix::identity(m, m)
            }
        })
        .collect()
}
