//! Data-dependent random projections.
//!
//! An oblivious random projection `R` estimates `<x, w>` by `<Rx, Rw>`. When `x`
//! and `w` come from different distributions, applying an invertible map `A` to
//! one side and `A^{-T}` to the other keeps the estimate unbiased while changing
//! its variance. This crate builds the variance-optimal map from the two second
//! moment matrices (a CCA balancing transform), the diagonal-only "quick"
//! approximation, and the `D_X^lambda` family used for projected regression, and
//! wires them into approximate matrix multiplication and learning experiments.
//!
//! Rows are vectors throughout: a data matrix is `n x d` with one sample per row.
//! Second moments are uncentered (`E[x x^T]`); nothing is ever mean-subtracted.

pub mod cli;
pub mod error;
pub mod fmm;
pub mod io;
pub mod learn;
pub mod linalg;
pub mod moments;
pub mod numeric;
pub mod preprocess;
pub mod rp;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{CsrMatrix, DataMatrix, DenseMatrix};
