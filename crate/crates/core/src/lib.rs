//! Pseudo-spectral simulation of the hyperbolic O(N) linear sigma model on
//! the two-dimensional torus, with its mean-field limit and Gibbs measure.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
mod fft;
pub mod gibbs;
pub mod grid;
pub mod noise;
pub mod propagator;
pub mod snapshot;
pub mod wick;

pub use error::{Result, SigmaError};
pub use grid::{ActiveSet, ComponentEnsemble, GridSpec, Mode, PairState, SpectralField};
