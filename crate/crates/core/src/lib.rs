//! Numerical laboratory for the isotropic diffusion source approximation
//! (IDSA) of monochromatic, spherically symmetric radiative transfer.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: cell-centered radial meshes, fields on them, the problem
//!   definition and the shell-weighted error norms.
//! - [`oracle`]: the exact stationary homogeneous-sphere solution, its
//!   angular moments, the infinite-opacity limits and flux factors.
//! - [`original`]: the IDSA coupled through the min-max diffusion source,
//!   together with the spurious-trapped and instability experiments.
//! - [`reformed`]: the Old and New IDSA systems that split the domain
//!   explicitly at the sphere radius, the closed-form New IDSA state and
//!   moment reconstruction from flux-factor closures.
//! - [`diagnostics`]: convergence sweeps over the opacity, power-law fits
//!   and the error-at-origin curve.

pub mod diagnostics;
mod error;
pub mod grid;
pub mod oracle;
pub mod original;
pub mod quadrature;
pub mod reformed;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{ProblemSpec, RadialField, RadialGrid};
