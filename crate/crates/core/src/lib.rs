//! Numerical laboratory for random block Schrödinger operators on the
//! d-dimensional torus.
//!
//! The operators studied here take the form `H = λΨ + V`, where `V` is a
//! block-diagonal potential with i.i.d. GUE blocks of side `W^d` and `Ψ`
//! couples neighboring blocks (site Laplacian, block Laplacian, or random
//! Ginibre blocks). The crate provides:
//!
//! * torus/block geometry ([`lattice`]),
//! * reproducible sampling of the ensembles ([`models`]),
//! * the deterministic limit theory: self-consistent Stieltjes transforms,
//!   the matrix limit `M(z)`, variance matrices and diffusive kernels
//!   ([`mfield`]),
//! * per-realization resolvents, Ward identities, T-variables and a
//!   deterministic parallel Monte Carlo engine ([`greens`]),
//! * eigenvector statistics across the localization-delocalization
//!   transition ([`spectra`]),
//! * coupling-renormalization coefficients, loop sums at distinct indices,
//!   and expectation-level expansion identities ([`renorm`]).

pub mod error;
pub mod greens;
pub mod lattice;
pub mod mfield;
pub mod models;
pub mod renorm;
pub mod rng;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;
/// Dense real matrix (variance profiles, |M|^2 kernels).
pub type RMat = DMatrix<f64>;
