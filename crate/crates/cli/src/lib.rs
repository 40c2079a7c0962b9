//! Command-line front end of kronvar: long-format panel files, JSON model
//! documents, the `simulate`, `fit`, `convert` and `decompose` subcommands
//! and the Monte Carlo benchmark harness.
//!
//! Exit codes: 0 success, 2 input or schema error, 3 numerical model defect
//! (instability, singular `G₀`), 4 estimation failure, 5 unsupported request.

pub mod benchmark;
pub mod commands;
pub mod document;
pub mod error;
pub mod panel;
