//! Matrix-valued series and simulation from MAR, VAR and GVAR models.
//!
//! All recursions start from zero initial conditions and discard `burn_in`
//! leading points. Noise for `burn_in + t_len` periods is drawn up front by
//! [`draw_noise`], so a path is a pure function of `(model, t_len, burn_in, seed)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{KronError, Result};
use crate::kron::Dims;
use crate::linalg::{unvec, vec};
use crate::models::{is_stable, GvarModel, MarModel, NoiseSpec, VarModel};
use crate::rng::GaussianStream;
use crate::transforms::{gvar_to_structural, mar_to_var, structural_to_reduced};

/// Default number of discarded leading periods.
pub const DEFAULT_BURN_IN: usize = 500;

/// A length-`T` sequence of `m × n` observations (variables × regions).
///
/// The vectorized observation `y_t` stacks the region columns in order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    dims: Dims,
    data: Vec<DMatrix<f64>>,
    variable_names: Option<Vec<String>>,
    region_names: Option<Vec<String>>,
}

impl MatrixSeries {
    pub fn new(dims: Dims, data: Vec<DMatrix<f64>>) -> Result<Self> {
        if data.is_empty() {
            return Err(KronError::ShapeMismatch("series must have at least one time point".into()));
        }
        if let Some((t, y)) = data.iter().enumerate().find(|(_, y)| y.shape() != (dims.m, dims.n)) {
            return Err(KronError::ShapeMismatch(format!(
                "observation {t} is {:?}, expected ({}, {})",
                y.shape(),
                dims.m,
                dims.n
            )));
        }
        Ok(MatrixSeries { dims, data, variable_names: None, region_names: None })
    }

    /// Builds a series from vectorized observations of length `mn`.
    pub fn from_vectors(dims: Dims, ys: &[DVector<f64>]) -> Result<Self> {
        let data = ys
            .iter()
            .map(|y| {
                if y.len() != dims.mn() {
                    Err(KronError::ShapeMismatch(format!("vector of length {}", y.len())))
                } else {
                    Ok(unvec(y.as_slice(), dims.m, dims.n))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        MatrixSeries::new(dims, data)
    }

    pub fn with_labels(mut self, variables: Vec<String>, regions: Vec<String>) -> Result<Self> {
        if variables.len() != self.dims.m || regions.len() != self.dims.n {
            return Err(KronError::ShapeMismatch(format!(
                "{} variable and {} region labels for a {}x{} series",
                variables.len(),
                regions.len(),
                self.dims.m,
                self.dims.n
            )));
        }
        self.variable_names = Some(variables);
        self.region_names = Some(regions);
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn t_len(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[DMatrix<f64>] {
        &self.data
    }

    pub fn get(&self, t: usize) -> &DMatrix<f64> {
        &self.data[t]
    }

    /// `y_t = vec(Y_t)`.
    pub fn vectorized(&self, t: usize) -> DVector<f64> {
        vec(&self.data[t])
    }

    pub fn variable_names(&self) -> Option<&[String]> {
        self.variable_names.as_deref()
    }

    pub fn region_names(&self) -> Option<&[String]> {
        self.region_names.as_deref()
    }

    /// Points `start..` as a new series, labels kept.
    pub fn slice_from(&self, start: usize) -> Result<Self> {
        let mut out = MatrixSeries::new(self.dims, self.data[start..].to_vec())?;
        out.variable_names = self.variable_names.clone();
        out.region_names = self.region_names.clone();
        Ok(out)
    }
}

/// I.i.d. Gaussian innovations `vec(U_t) = L z_t` with `L` the Cholesky factor
/// of the covariance described by `spec`.
pub fn draw_noise(spec: &NoiseSpec, dims: Dims, t_len: usize, seed: u64) -> Result<MatrixSeries> {
    if t_len == 0 {
        return Err(KronError::ShapeMismatch("t_len must be at least 1".into()));
    }
    let l = spec.cholesky_factor(dims)?;
    let mut g = GaussianStream::new(seed);
    let k = dims.mn();
    let data = (0..t_len)
        .map(|_| {
            let z = DVector::from_fn(k, |_, _| g.next_normal());
            unvec((&l * z).as_slice(), dims.m, dims.n)
        })
        .collect();
    MatrixSeries::new(dims, data)
}

fn check_stable(var: &VarModel) -> Result<()> {
    if is_stable(var, 0.0) {
        Ok(())
    } else {
        Err(KronError::Unstable { radius: var.spectral_radius(), bound: 1.0 })
    }
}

/// Simulates `Y_t = Σᵢ Σⱼ A_{i,j} Y_{t−i} B_{i,j}′ + U_t`.
pub fn simulate_mar(model: &MarModel, t_len: usize, burn_in: usize, seed: u64) -> Result<MatrixSeries> {
    check_stable(&mar_to_var(model)?)?;
    let noise = draw_noise(model.noise(), model.dims(), burn_in + t_len, seed)?;
    mar_recursion(model, &noise)?.slice_from(burn_in)
}

/// Matrix-form recursion driven by a given innovation path, zero start.
pub fn mar_recursion(model: &MarModel, noise: &MatrixSeries) -> Result<MatrixSeries> {
    check_dims(model.dims(), noise)?;
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(noise.t_len());
    for t in 0..noise.t_len() {
        let mut yt = noise.get(t).clone();
        for (i, ks) in model.coeffs().iter().enumerate() {
            let lag = i + 1;
            if t < lag {
                continue;
            }
            let prev = &out[t - lag];
            for term in ks.terms() {
                yt += &term.a * prev * term.b.transpose();
            }
        }
        out.push(yt);
    }
    MatrixSeries::new(model.dims(), out)
}

/// Simulates the vectorized VAR `y_t = Σᵢ Aᵢ y_{t−i} + u_t`.
pub fn simulate_var(model: &VarModel, t_len: usize, burn_in: usize, seed: u64) -> Result<MatrixSeries> {
    check_stable(model)?;
    let spec = NoiseSpec::General { sigma: model.sigma().clone() };
    let noise = draw_noise(&spec, model.dims(), burn_in + t_len, seed)?;
    var_recursion(model, &noise)?.slice_from(burn_in)
}

/// Vectorized recursion driven by a given innovation path, zero start.
pub fn var_recursion(model: &VarModel, noise: &MatrixSeries) -> Result<MatrixSeries> {
    check_dims(model.dims(), noise)?;
    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(noise.t_len());
    for t in 0..noise.t_len() {
        let mut yt = noise.vectorized(t);
        for (i, a) in model.coeff_mats().iter().enumerate() {
            if t > i {
                yt += a * &ys[t - i - 1];
            }
        }
        ys.push(yt);
    }
    MatrixSeries::from_vectors(model.dims(), &ys)
}

/// A simulated GVAR path together with its structural innovations.
#[derive(Debug, Clone)]
pub struct GvarPath {
    pub series: MatrixSeries,
    /// `U_t` of the regional equations, aligned with `series`.
    pub innovations: MatrixSeries,
}

pub fn simulate_gvar(model: &GvarModel, t_len: usize, burn_in: usize, seed: u64) -> Result<MatrixSeries> {
    simulate_gvar_path(model, t_len, burn_in, seed).map(|p| p.series)
}

/// Simulates `G₀ y_t = Σⱼ Lⱼ y_{t−j} + u_t` with block-diagonal `u_t`. The
/// reduced form is checked for stability; each step solves with the LU
/// factors of `G₀` so the regional equations hold to rounding.
pub fn simulate_gvar_path(model: &GvarModel, t_len: usize, burn_in: usize, seed: u64) -> Result<GvarPath> {
    let dims = model.dims();
    let structural = gvar_to_structural(model);
    let reduced = structural_to_reduced(&structural)?;
    check_stable(&reduced)?;
    let noise = draw_noise(model.noise(), dims, burn_in + t_len, seed)?;
    let lu = structural.g0.clone().lu();

    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(noise.t_len());
    for t in 0..noise.t_len() {
        let mut rhs = noise.vectorized(t);
        for (j, l) in structural.lag_mats.iter().enumerate() {
            if t > j {
                rhs += l * &ys[t - j - 1];
            }
        }
        let yt = lu
            .solve(&rhs)
            .ok_or(KronError::SingularG0 { condition: f64::INFINITY })?;
        ys.push(yt);
    }
    Ok(GvarPath {
        series: MatrixSeries::from_vectors(dims, &ys[burn_in..])?,
        innovations: noise.slice_from(burn_in)?,
    })
}

fn check_dims(dims: Dims, noise: &MatrixSeries) -> Result<()> {
    if noise.dims() != dims {
        return Err(KronError::ShapeMismatch(format!(
            "noise has dims {:?}, model has {:?}",
            noise.dims(),
            dims
        )));
    }
    Ok(())
}
