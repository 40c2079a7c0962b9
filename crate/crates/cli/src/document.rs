//! JSON model documents.
//!
//! Every document carries `schema_version`, a `kind` tag with the kind's
//! coefficient arrays (matrices as row-major nested lists), `dims`, the
//! `noise` specification, optional `labels` and a `provenance` record.
//! Numbers are written in shortest round-trip form and parsed exactly, so
//! `load(save(model))` reproduces every coefficient bit for bit.

use std::path::Path;

use kronvar_core::kron::{is_normalized, Dims, KronTerm, KroneckerSum};
use kronvar_core::models::{GvarModel, MarModel, NoiseSpec, VarModel};
use kronvar_core::transforms::{GvarEmbedding, StructuralGvar};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MODEL_SCHEMA: &str = "kronvar-model/1";

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: String,
    #[serde(flatten)]
    pub body: ModelBody,
    pub dims: DimsDoc,
    pub noise: NoiseDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsDoc {
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDoc {
    pub a: Rows,
    pub b: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    /// `coefficients[lag][term]`.
    Mar { lags: usize, coefficients: Vec<Vec<TermDoc>> },
    Var { lags: usize, coefficients: Vec<Rows> },
    Gvar {
        p: usize,
        q: usize,
        triangular: bool,
        weights: Rows,
        /// `a_blocks[region][lag − 1]`.
        a_blocks: Vec<Vec<Rows>>,
        /// `b_blocks[region][lag]`, lag 0 contemporaneous.
        b_blocks: Vec<Vec<Rows>>,
    },
    Structural { lags: usize, g0: Rows, lag_matrices: Vec<Rows> },
    /// Kronecker-sum form of a GVAR's structural matrices.
    MarEmbedding { lags: usize, term_counts: Vec<usize>, g0_terms: Vec<TermDoc>, coefficients: Vec<Vec<TermDoc>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseDoc {
    Separable { sigma_r: Rows, sigma_c: Rows },
    General { sigma: Rows },
    BlockDiagonal { blocks: Vec<Rows> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub variables: Vec<String>,
    pub regions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub command: String,
    /// Left empty so that documents depend only on their inputs.
    pub timestamp: Option<String>,
}

impl Provenance {
    pub fn new(command: impl Into<String>, seed: Option<u64>) -> Self {
        Provenance { seed, command: command.into(), timestamp: None }
    }
}

/// In-memory model of any document kind.
#[derive(Debug, Clone)]
pub enum Model {
    Mar(MarModel),
    Var(VarModel),
    Gvar(GvarModel),
    Structural(StructuralGvar),
    MarEmbedding { embedding: GvarEmbedding, noise: NoiseSpec },
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Mar(_) => "mar",
            Model::Var(_) => "var",
            Model::Gvar(_) => "gvar",
            Model::Structural(_) => "structural",
            Model::MarEmbedding { .. } => "mar_embedding",
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            Model::Mar(m) => m.dims(),
            Model::Var(v) => v.dims(),
            Model::Gvar(g) => g.dims(),
            Model::Structural(s) => s.dims,
            Model::MarEmbedding { embedding, .. } => embedding.g0.dims(),
        }
    }
}

pub fn to_rows(a: &DMatrix<f64>) -> Rows {
    a.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

pub fn from_rows(rows: &Rows, nrows: usize, ncols: usize, what: &str) -> CliResult<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Input(format!("{what} must be {nrows}×{ncols}")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CliError::Input(format!("{what} contains non-finite values")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

fn terms_doc(ks: &KroneckerSum) -> Vec<TermDoc> {
    ks.terms().iter().map(|t| TermDoc { a: to_rows(&t.a), b: to_rows(&t.b) }).collect()
}

fn terms_from_doc(terms: &[TermDoc], dims: Dims, what: &str) -> CliResult<KroneckerSum> {
    let terms = terms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            Ok(KronTerm {
                a: from_rows(&t.a, dims.m, dims.m, &format!("{what} term {k} factor a"))?,
                b: from_rows(&t.b, dims.n, dims.n, &format!("{what} term {k} factor b"))?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let ks = KroneckerSum::new(dims, terms).map_err(CliError::from_model)?;
    if !is_normalized(&ks, 1e-10) {
        return Err(CliError::Input(format!("{what} is not in normalized form")));
    }
    Ok(ks)
}

fn noise_doc(noise: &NoiseSpec) -> NoiseDoc {
    match noise {
        NoiseSpec::Separable { sigma_r, sigma_c } => {
            NoiseDoc::Separable { sigma_r: to_rows(sigma_r), sigma_c: to_rows(sigma_c) }
        }
        NoiseSpec::General { sigma } => NoiseDoc::General { sigma: to_rows(sigma) },
        NoiseSpec::BlockDiagonal { blocks } => NoiseDoc::BlockDiagonal { blocks: blocks.iter().map(to_rows).collect() },
    }
}

fn noise_from_doc(doc: &NoiseDoc, dims: Dims) -> CliResult<NoiseSpec> {
    let (m, n) = (dims.m, dims.n);
    let spec = match doc {
        NoiseDoc::Separable { sigma_r, sigma_c } => NoiseSpec::Separable {
            sigma_r: from_rows(sigma_r, m, m, "noise sigma_r")?,
            sigma_c: from_rows(sigma_c, n, n, "noise sigma_c")?,
        },
        NoiseDoc::General { sigma } => NoiseSpec::General { sigma: from_rows(sigma, m * n, m * n, "noise sigma")? },
        NoiseDoc::BlockDiagonal { blocks } => {
            if blocks.len() != n {
                return Err(CliError::Input(format!("noise needs {n} blocks, found {}", blocks.len())));
            }
            NoiseSpec::BlockDiagonal {
                blocks: blocks
                    .iter()
                    .enumerate()
                    .map(|(i, b)| from_rows(b, m, m, &format!("noise block {i}")))
                    .collect::<CliResult<_>>()?,
            }
        }
    };
    spec.validate(dims).map_err(CliError::from_model)?;
    Ok(spec)
}

impl ModelDocument {
    pub fn new(model: &Model, labels: Option<Labels>, provenance: Provenance) -> Self {
        let dims = model.dims();
        let (body, noise) = match model {
            Model::Mar(mar) => (
                ModelBody::Mar { lags: mar.p(), coefficients: mar.coeffs().iter().map(terms_doc).collect() },
                noise_doc(mar.noise()),
            ),
            Model::Var(var) => (
                ModelBody::Var { lags: var.p(), coefficients: var.coeff_mats().iter().map(to_rows).collect() },
                NoiseDoc::General { sigma: to_rows(var.sigma()) },
            ),
            Model::Gvar(g) => (
                ModelBody::Gvar {
                    p: g.p(),
                    q: g.q(),
                    triangular: g.triangular(),
                    weights: to_rows(g.weights()),
                    a_blocks: g.a_blocks().iter().map(|r| r.iter().map(to_rows).collect()).collect(),
                    b_blocks: g.b_blocks().iter().map(|r| r.iter().map(to_rows).collect()).collect(),
                },
                noise_doc(g.noise()),
            ),
            Model::Structural(s) => (
                ModelBody::Structural {
                    lags: s.lag_mats.len(),
                    g0: to_rows(&s.g0),
                    lag_matrices: s.lag_mats.iter().map(to_rows).collect(),
                },
                noise_doc(&s.noise),
            ),
            Model::MarEmbedding { embedding, noise } => (
                ModelBody::MarEmbedding {
                    lags: embedding.lags.len(),
                    term_counts: embedding.lag_term_counts(),
                    g0_terms: terms_doc(&embedding.g0),
                    coefficients: embedding.lags.iter().map(terms_doc).collect(),
                },
                noise_doc(noise),
            ),
        };
        ModelDocument {
            schema_version: MODEL_SCHEMA.to_string(),
            body,
            dims: DimsDoc { m: dims.m, n: dims.n },
            noise,
            labels,
            provenance,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            ModelBody::Mar { .. } => "mar",
            ModelBody::Var { .. } => "var",
            ModelBody::Gvar { .. } => "gvar",
            ModelBody::Structural { .. } => "structural",
            ModelBody::MarEmbedding { .. } => "mar_embedding",
        }
    }

    /// Validates shapes and invariants and builds the in-memory model.
    pub fn to_model(&self) -> CliResult<Model> {
        let dims = Dims::new(self.dims.m, self.dims.n).map_err(|e| CliError::Input(e.to_string()))?;
        let (m, n, mn) = (dims.m, dims.n, dims.mn());
        let noise = noise_from_doc(&self.noise, dims)?;
        let check_lags = |declared: usize, found: usize| -> CliResult<()> {
            if declared != found || declared == 0 {
                Err(CliError::Input(format!("document declares {declared} lags but holds {found}")))
            } else {
                Ok(())
            }
        };
        Ok(match &self.body {
            ModelBody::Mar { lags, coefficients } => {
                check_lags(*lags, coefficients.len())?;
                let coeffs = coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, t)| terms_from_doc(t, dims, &format!("lag {} coefficient", i + 1)))
                    .collect::<CliResult<Vec<_>>>()?;
                Model::Mar(MarModel::from_normalized(dims, coeffs, noise).map_err(CliError::from_model)?)
            }
            ModelBody::Var { lags, coefficients } => {
                check_lags(*lags, coefficients.len())?;
                let mats = coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, c)| from_rows(c, mn, mn, &format!("lag {} coefficient", i + 1)))
                    .collect::<CliResult<Vec<_>>>()?;
                let NoiseSpec::General { sigma } = noise else {
                    return Err(CliError::Input("var documents need general noise".into()));
                };
                Model::Var(VarModel::new(dims, mats, sigma).map_err(CliError::from_model)?)
            }
            ModelBody::Gvar { p, q, triangular, weights, a_blocks, b_blocks } => {
                let w = from_rows(weights, n, n, "weights")?;
                if a_blocks.len() != n || b_blocks.len() != n {
                    return Err(CliError::Input(format!("gvar documents need blocks for {n} regions")));
                }
                let mut a = Vec::with_capacity(n);
                let mut b = Vec::with_capacity(n);
                for i in 0..n {
                    if a_blocks[i].len() != *p || b_blocks[i].len() != q + 1 {
                        return Err(CliError::Input(format!(
                            "region {i} needs {p} domestic and {} star blocks",
                            q + 1
                        )));
                    }
                    a.push(
                        a_blocks[i]
                            .iter()
                            .enumerate()
                            .map(|(j, r)| from_rows(r, m, m, &format!("region {i} A block {}", j + 1)))
                            .collect::<CliResult<Vec<_>>>()?,
                    );
                    b.push(
                        b_blocks[i]
                            .iter()
                            .enumerate()
                            .map(|(j, r)| from_rows(r, m, m, &format!("region {i} B block {j}")))
                            .collect::<CliResult<Vec<_>>>()?,
                    );
                }
                Model::Gvar(GvarModel::new(dims, a, b, w, *triangular, noise).map_err(CliError::from_model)?)
            }
            ModelBody::Structural { lags, g0, lag_matrices } => {
                check_lags(*lags, lag_matrices.len())?;
                Model::Structural(StructuralGvar {
                    dims,
                    g0: from_rows(g0, mn, mn, "g0")?,
                    lag_mats: lag_matrices
                        .iter()
                        .enumerate()
                        .map(|(i, r)| from_rows(r, mn, mn, &format!("lag matrix {}", i + 1)))
                        .collect::<CliResult<_>>()?,
                    noise,
                })
            }
            ModelBody::MarEmbedding { lags, term_counts, g0_terms, coefficients } => {
                check_lags(*lags, coefficients.len())?;
                let embedding = GvarEmbedding {
                    g0: terms_from_doc(g0_terms, dims, "g0")?,
                    lags: coefficients
                        .iter()
                        .enumerate()
                        .map(|(i, t)| terms_from_doc(t, dims, &format!("lag {} coefficient", i + 1)))
                        .collect::<CliResult<_>>()?,
                };
                if &embedding.lag_term_counts() != term_counts {
                    return Err(CliError::Input("term_counts disagree with the stored terms".into()));
                }
                Model::MarEmbedding { embedding, noise }
            }
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents hold only finite numbers");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("model document: {e}")))?;
        match value.get("schema_version").and_then(|v| v.as_str()) {
            Some(MODEL_SCHEMA) => {}
            Some(other) => {
                return Err(CliError::Input(format!(
                    "unsupported schema_version `{other}`, expected `{MODEL_SCHEMA}`"
                )))
            }
            None => return Err(CliError::Input("model document lacks schema_version".into())),
        }
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("model document: {e}")))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }
}

/// A model document read from disk with its SHA-256 digest.
pub struct LoadedDocument {
    pub document: ModelDocument,
    pub model: Model,
    pub sha256: String,
}

pub fn load_model(path: &Path) -> CliResult<LoadedDocument> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::Input(format!("{}: model document is not UTF-8", path.display())))?;
    let document = ModelDocument::from_json(text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    let model = document.to_model()?;
    Ok(LoadedDocument { document, model, sha256: hex::encode(Sha256::digest(&bytes)) })
}
