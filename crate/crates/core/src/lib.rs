//! Multi-term matrix autoregressions (MAR), global VARs (GVAR) and the
//! Kronecker-sum algebra connecting them.
//!
//! The crate is organised bottom-up:
//!
//! - [`kron`]: Kronecker products, the rearrangement operator and nearest
//!   Kronecker-sum decomposition with an identifiable normalization;
//! - [`models`]: MAR, VAR and GVAR model types, parameter counts, stability;
//! - [`transforms`]: conversions between the representations, including the
//!   structural/reduced GVAR forms and Cholesky identification;
//! - [`simulate`]: matrix series and simulation with reproducible seeds;
//! - [`estimate`]: least-squares, projection, alternating and structural estimators.

pub mod error;
pub mod estimate;
pub mod kron;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod simulate;
pub mod transforms;

pub use error::{KronError, Result};
pub use kron::{Dims, FactorStacks, KronTerm, KroneckerSum};
pub use models::{GvarModel, MarModel, NoiseSpec, VarModel};
pub use simulate::MatrixSeries;
