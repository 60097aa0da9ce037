//! Spectral convergence of Neumann Laplacians on fattened open books.
//!
//! The crate builds periodic flat open books (pages glued along one
//! binding), discretizes the limit operator on the surface and the Neumann
//! Laplacian on the ε-fattened domain with P1 finite elements, computes
//! their low spectra, compares against closed-form oracles and measures
//! transfer maps between the two function spaces.

pub mod eigensolve;
pub mod error;
pub mod femcore;
pub mod geometry;
pub mod harness;
pub mod meshing;
pub mod sparse;
pub mod spectra_oracle;
pub mod transfer;

pub use error::{Error, Result};
