//! Computational toolkit for the fourth-moment central limit theorem on
//! Wiener chaos.
//!
//! The Gaussian space is realised over a finite orthonormal basis
//! `e_1, …, e_d` of `H = R^d`: the isonormal process is `X(h) = Σ_j ⟨h, e_j⟩ ξ_j`
//! with `ξ` standard normal, and the multiple integral of a symmetric kernel
//! is a polynomial in `ξ` built from Hermite polynomials.
//!
//! * [`symtensor`]: sparse symmetric kernels, contractions, symmetrization.
//! * [`chaos_eval`]: pathwise evaluation of `I_n(f)` and its Malliavin gradient,
//!   with reproducible Monte Carlo ([`rng`], [`mc`]).
//! * [`chaos_algebra`]: exact moments through the multiplication formula.
//! * [`clt`]: diagnostics for the equivalent conditions of the fourth-moment
//!   theorem in one and several dimensions and for general expansions.
//! * [`fbm`]: power variations of fractional Brownian motion.

pub mod chaos_algebra;
pub mod chaos_eval;
pub mod clt;
pub mod combinatorics;
pub mod error;
pub mod fbm;
pub mod hermite;
pub mod ks;
pub mod mc;
pub mod rng;
pub mod symtensor;

pub use chaos_algebra::ChaosExpansion;
pub use chaos_eval::GaussianPoint;
pub use error::{ChaosError, Result};
pub use mc::McEstimate;
pub use rng::RandomStream;
pub use symtensor::{BlockKernel, MultiIndex, SymKernel};

/// Largest chaos order (and Hermite degree) handled anywhere in the crate.
pub const ORDER_CAP: usize = 64;

/// Largest number of stored entries a kernel may grow to.
pub const SUPPORT_CAP: usize = 1_000_000;
