//! Hierarchical (HiLasso) and collaborative hierarchical (C-HiLasso) sparse
//! coding.
//!
//! - [`model`]: dictionaries, signals, regularizer specs and objectives.
//! - [`prox`]: closed-form scalar, vector and hierarchical thresholding.
//! - [`solver`]: SpaRSA proximal-gradient solver and a continuation solver
//!   for the equality-constrained problem.
//! - [`analysis`]: coherence measures and recovery certificates.
//! - [`harness`]: synthetic source-identification experiments.
//! - [`io`] and [`cli`]: file formats and the `hilasso` command line.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
pub use model::{CodeMatrix, Dictionary, GroupPartition, Mode, RegularizerSpec, SignalSet};
pub use prox::ProxWeights;
pub use solver::{sparsa_solve, NoiselessConfig, SolverConfig, SolverResult};
