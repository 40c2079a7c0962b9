//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kronvar_cli::document::{Model, ModelDocument, Provenance};
use kronvar_cli::panel::format_value;
use kronvar_core::kron::Dims;
use kronvar_core::models::{GvarModel, MarModel, NoiseSpec, VarModel};
use kronvar_testkit::Gen;
use nalgebra::DMatrix;

pub fn kronvar<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_kronvar")).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn save_model(dir: &Path, name: &str, model: Model) -> PathBuf {
    let path = dir.join(name);
    ModelDocument::new(&model, None, Provenance::new("test fixture", None)).save(&path).unwrap();
    path
}

pub fn write_dense(dir: &Path, name: &str, a: &DMatrix<f64>) -> PathBuf {
    let text: String = a
        .row_iter()
        .map(|r| r.iter().map(|x| format_value(*x)).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

pub fn stable_mar(seed: u64, m: usize, n: usize, terms: &[usize]) -> MarModel {
    let mut g = Gen::new(seed);
    let dims = Dims::new(m, n).unwrap();
    g.stable_mar(dims, terms, 0.7, NoiseSpec::identity(dims))
}

pub fn zero_mar(m: usize, n: usize) -> MarModel {
    let dims = Dims::new(m, n).unwrap();
    MarModel::new(dims, vec![kronvar_core::KroneckerSum::empty(dims)], NoiseSpec::identity(dims)).unwrap()
}

/// A VAR(1) whose coefficient is a rotation scaled to spectral radius 1.1.
pub fn unstable_var() -> VarModel {
    let dims = Dims::new(2, 1).unwrap();
    let phi = DMatrix::from_row_slice(2, 2, &[0.0, -1.1, 1.1, 0.0]);
    VarModel::new(dims, vec![phi], DMatrix::identity(2, 2)).unwrap()
}

/// Two one-variable regions with unit contemporaneous star coefficients and
/// unit weights, so `G₀ = [[1, −1], [−1, 1]]` is singular.
pub fn singular_gvar() -> GvarModel {
    let dims = Dims::new(1, 2).unwrap();
    let one = DMatrix::from_element(1, 1, 1.0);
    let a = vec![vec![one.clone() * 0.1]; 2];
    let b = vec![vec![one.clone(), one.clone() * 0.0]; 2];
    let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let noise = NoiseSpec::BlockDiagonal { blocks: vec![one.clone(); 2] };
    GvarModel::new(dims, a, b, w, false, noise).unwrap()
}

pub fn triangular_gvar(seed: u64, m: usize) -> GvarModel {
    let mut g = Gen::new(seed);
    g.stable_gvar(Dims::new(m, 3).unwrap(), 1, 1, true, 0.4, 0.6)
}
