//! Weight estimation with the regional coefficients held fixed.
//!
//! For region `i` the regression
//! `Y_{t,:,i} − Σⱼ Aⱼ Y_{t−j,:,i} = Σ_{k∈F} w_k Ỹ_{t,:,k} + U_{t,:,i}`,
//! `Ỹ_{t,:,k} = Σ_l B_l Y_{t−l,:,k}`, is solved for the scalar weights over the
//! simplex `w ≥ 0, Σ w = 1` by a primal active-set quadratic program.

use nalgebra::{DMatrix, DVector};

use super::var::lag_design;
use super::vectors;
use crate::error::{KronError, Result};
use crate::linalg::{cholesky_lower, lstsq, symmetric_eigenvalues, unvec};
use crate::models::{validate_weights, GvarModel};
use crate::simulate::MatrixSeries;

/// How the weight regression treats the error variance and endogeneity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMethod {
    /// Unweighted least squares.
    Ls,
    /// Least squares weighted by `Ω_i⁻¹` taken from the model's noise blocks.
    Gls,
    /// Two-stage least squares: contemporaneous regressors are replaced by
    /// their projections on all variables at lags `1..=max(p,q)+1`.
    Iv,
}

impl std::str::FromStr for WeightMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ls" => Ok(WeightMethod::Ls),
            "gls" => Ok(WeightMethod::Gls),
            "iv" => Ok(WeightMethod::Iv),
            other => Err(format!("unknown weight method '{other}' (expected ls, gls or iv)")),
        }
    }
}

impl std::fmt::Display for WeightMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightMethod::Ls => "ls",
            WeightMethod::Gls => "gls",
            WeightMethod::Iv => "iv",
        })
    }
}

/// Regions whose weight toward `i` is free.
pub(crate) fn free_set(n: usize, i: usize, triangular: bool) -> Vec<usize> {
    (0..n).filter(|&j| j != i && (!triangular || j < i)).collect()
}

/// Smallest eigenvalue below this fraction of the largest makes the weight
/// regression unidentified.
const COLLINEARITY_TOL: f64 = 1e-12;

/// Estimates `W̃` for fixed coefficient blocks of `model`.
pub fn estimate_weights(y: &MatrixSeries, model: &GvarModel, method: WeightMethod) -> Result<DMatrix<f64>> {
    let dims = model.dims();
    if y.dims() != dims {
        return Err(KronError::ShapeMismatch(format!(
            "data dims {:?} differ from model dims {:?}",
            y.dims(),
            dims
        )));
    }
    let (m, n) = (dims.m, dims.n);
    let lag = model.max_lag();
    let start = if method == WeightMethod::Iv { lag + 1 } else { lag };
    if y.t_len() <= start + 1 {
        return Err(KronError::RankDeficientRegressors("series too short for the weight regression".into()));
    }

    // contemporaneous observations used as regressors, possibly instrumented
    let contemporaneous: Vec<DMatrix<f64>> = if method == WeightMethod::Iv {
        let ys = vectors(y);
        let (z, yy) = lag_design(&ys, lag + 1);
        let pi = lstsq(&z, &yy, "IV first stage")?;
        let fitted = z * pi;
        let mut out = vec![DMatrix::zeros(m, n); y.t_len()];
        for (r, t) in (start..y.t_len()).enumerate() {
            out[t] = unvec(fitted.row(r).transpose().as_slice(), m, n);
        }
        out
    } else {
        y.data().to_vec()
    };

    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let free = free_set(n, i, model.triangular());
        match free.len() {
            0 => continue,
            1 => {
                w[(i, free[0])] = 1.0;
                continue;
            }
            _ => {}
        }
        let whiten = if method == WeightMethod::Gls {
            let l = cholesky_lower(&model.noise_blocks()[i], &format!("noise block {i}"))?;
            Some(l)
        } else {
            None
        };
        let k = free.len();
        let mut h = DMatrix::zeros(k, k);
        let mut g = DVector::zeros(k);
        let mut x = DMatrix::zeros(m, k);
        for t in start..y.t_len() {
            let mut target = y.get(t).column(i).into_owned();
            for j in 1..=model.p() {
                target -= model.a(i, j) * y.get(t - j).column(i);
            }
            for (c, &src) in free.iter().enumerate() {
                let mut xc = model.b(i, 0) * contemporaneous[t].column(src);
                for l in 1..=model.q() {
                    xc += model.b(i, l) * y.get(t - l).column(src);
                }
                x.set_column(c, &xc);
            }
            let (xw, tw) = match &whiten {
                Some(l) => (
                    l.solve_lower_triangular(&x).expect("cholesky factor is nonsingular"),
                    l.solve_lower_triangular(&target).expect("cholesky factor is nonsingular"),
                ),
                None => (x.clone(), target),
            };
            h += xw.transpose() * &xw;
            g += xw.transpose() * tw;
        }
        let row = simplex_qp(&h, &g).map_err(|e| match e {
            KronError::InfeasibleConstraints(msg) => {
                KronError::InfeasibleConstraints(format!("region {i}: {msg}"))
            }
            other => other,
        })?;
        for (c, &src) in free.iter().enumerate() {
            w[(i, src)] = row[c];
        }
    }
    validate_weights(&w, model.triangular())?;
    Ok(w)
}

/// `argmin ½ wᵀHw − gᵀw` subject to `w ≥ 0`, `Σ w = 1`, for positive
/// definite `H`. Primal active-set method started from the barycenter;
/// ties in the blocking and releasing rules go to the smallest index.
pub fn simplex_qp(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let k = g.len();
    if h.shape() != (k, k) || k == 0 {
        return Err(KronError::ShapeMismatch(format!("QP with H {:?} and g of length {k}", h.shape())));
    }
    let eig = symmetric_eigenvalues(h)?;
    let emax = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let emin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(emax > 0.0) || !(emin > COLLINEARITY_TOL * emax) {
        return Err(KronError::InfeasibleConstraints(
            "candidate regressors are numerically collinear".into(),
        ));
    }
    // scale to unit largest eigenvalue so the tolerances below are absolute
    let h = h / emax;
    let g = g / emax;

    let mut w = DVector::from_element(k, 1.0 / k as f64);
    let mut active = vec![false; k];
    for _ in 0..(20 * k + 50) {
        let free: Vec<usize> = (0..k).filter(|&j| !active[j]).collect();
        let f = free.len();
        let mut kkt = DMatrix::zeros(f + 1, f + 1);
        let mut rhs = DVector::zeros(f + 1);
        for (a, &ja) in free.iter().enumerate() {
            for (b, &jb) in free.iter().enumerate() {
                kkt[(a, b)] = h[(ja, jb)];
            }
            kkt[(a, f)] = 1.0;
            kkt[(f, a)] = 1.0;
            rhs[a] = g[ja];
        }
        rhs[f] = 1.0;
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| KronError::InfeasibleConstraints("singular KKT system".into()))?;
        let nu = sol[f];
        let step: Vec<f64> = free.iter().enumerate().map(|(a, &j)| sol[a] - w[j]).collect();

        if step.iter().all(|s| s.abs() <= 1e-13) {
            let grad = &h * &w - &g;
            let release = (0..k)
                .filter(|&j| active[j])
                .map(|j| (j, grad[j] + nu))
                .filter(|&(_, mu)| mu < -1e-12)
                .fold(None, |best: Option<(usize, f64)>, cur| match best {
                    Some(b) if b.1 <= cur.1 => Some(b),
                    _ => Some(cur),
                });
            match release {
                Some((j, _)) => active[j] = false,
                None => return Ok(finish(w)),
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (a, &j) in free.iter().enumerate() {
            if step[a] < 0.0 {
                let ratio = -w[j] / step[a];
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
        }
        for (a, &j) in free.iter().enumerate() {
            w[j] += alpha * step[a];
        }
        if let Some(j) = blocking {
            w[j] = 0.0;
            active[j] = true;
        }
    }
    Err(KronError::InfeasibleConstraints("active-set iterations did not terminate".into()))
}

fn finish(mut w: DVector<f64>) -> DVector<f64> {
    w.iter_mut().for_each(|x| *x = x.max(0.0));
    let s = w.sum();
    w / s
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle: minimize over every support set with the equality
    /// constraint only, keep feasible candidates.
    fn brute_force(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
        let k = g.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 1u32..(1 << k) {
            let idx: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
            let f = idx.len();
            let mut kkt = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (a, &ja) in idx.iter().enumerate() {
                for (b, &jb) in idx.iter().enumerate() {
                    kkt[(a, b)] = h[(ja, jb)];
                }
                kkt[(a, f)] = 1.0;
                kkt[(f, a)] = 1.0;
                rhs[a] = g[ja];
            }
            rhs[f] = 1.0;
            let sol = kkt.lu().solve(&rhs).unwrap();
            if (0..f).any(|a| sol[a] < -1e-12) {
                continue;
            }
            let mut w = DVector::zeros(k);
            for (a, &j) in idx.iter().enumerate() {
                w[j] = sol[a].max(0.0);
            }
            let obj = 0.5 * (w.transpose() * h * &w)[0] - g.dot(&w);
            if best.as_ref().map_or(true, |b| obj < b.0 - 1e-14) {
                best = Some((obj, w));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn interior_solution() {
        let h = DMatrix::identity(3, 3);
        let g = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let w = simplex_qp(&h, &g).unwrap();
        assert!((w - g).norm() < 1e-12);
    }

    #[test]
    fn vertex_solution() {
        let h = DMatrix::identity(3, 3);
        let g = DVector::from_vec(vec![5.0, -1.0, 0.0]);
        let w = simplex_qp(&h, &g).unwrap();
        assert!((w - DVector::from_vec(vec![1.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn matches_support_enumeration() {
        let mut state = 12345u64;
        let mut next = || {
            state = crate::rng::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..200 {
            let k = 2 + (next().abs() * 4.0) as usize;
            let r = DMatrix::from_fn(k + 2, k, |_, _| next());
            let h = r.transpose() * &r + DMatrix::identity(k, k) * 0.01;
            let g = DVector::from_fn(k, |_, _| 3.0 * next());
            let w = simplex_qp(&h, &g).unwrap();
            let oracle = brute_force(&h, &g);
            assert!((&w - &oracle).norm() < 1e-8, "{w} vs {oracle}");
            assert!((w.sum() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn collinear_regressors_are_infeasible() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let h = &v * v.transpose();
        let g = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(simplex_qp(&h, &g), Err(KronError::InfeasibleConstraints(_))));
    }

    #[test]
    fn free_sets() {
        assert_eq!(free_set(3, 1, false), vec![0, 2]);
        assert_eq!(free_set(3, 2, true), vec![0, 1]);
        assert!(free_set(3, 0, true).is_empty());
    }
}
