//! Knockoff variable selection with false-discovery-rate control, made robust
//! to knockoff randomness and to the choice of a single nominal FDR level.
//!
//! The crate is organised by stage:
//!
//! - [`knockoffs`] builds second-order Gaussian (model-X) and group knockoffs.
//! - [`regression`] holds the coordinate-descent engine (lasso, elastic net,
//!   group lasso) and OLS with HC3 standard errors.
//! - [`filter`] turns fitted paths into antisymmetric feature statistics and
//!   applies the knockoff threshold.
//! - [`robust`] repeats the filter over subsamples and aggregates selection
//!   probabilities (or ranks) over a grid of nominal FDR levels.
//! - [`group_pca`] is the per-group PCA preprocessing step.
//! - [`evaluation`] covers forecast windows, error metrics and model
//!   confidence sets.
//! - [`diagnostics`] scores the quality of a knockoff copy.
//! - [`sim`], [`io`] and [`pipeline`] provide synthetic designs, CSV
//!   ingestion and the JSON-configured end-to-end runs used by the CLI.
//!
//! All stochastic operations take an explicit `u64` seed; derived streams are
//! keyed by [`rng::derive_seed`], so results do not depend on thread count.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod filter;
pub mod group_pca;
pub mod io;
pub mod knockoffs;
pub mod linalg;
pub mod pipeline;
pub mod regression;
pub mod rng;
pub mod robust;
pub mod sim;

pub use data::{DataMatrix, GroupSpec};
pub use error::{Error, Result};
