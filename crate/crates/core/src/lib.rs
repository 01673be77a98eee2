//! Forward and inverse solvers for the time-fractional Schrödinger equation
//!
//! ```text
//! i ∂_t^α y + 𝓛y = f   on (0,T) × (0,L),   y = 0 on the boundary,   y(0) = y₀
//! ```
//!
//! with a Caputo derivative of order `α ∈ (0,1)` and a symmetric uniformly
//! elliptic operator `𝓛 = ∂ₓ(a ∂ₓ) − p`. Solutions are built from the
//! Dirichlet eigen-system of `−𝓛` and Mittag-Leffler kernels; the inverse
//! module recovers initial data, separable source factors and the fractional
//! order from observations on a positive-measure subset of the interval.
//!
//! Module map:
//!
//! - [`gamma`]: Lanczos Gamma and reciprocal Gamma.
//! - [`mlf`]: two-parameter Mittag-Leffler function, solver kernels, sector geometry.
//! - [`spectral`]: Dirichlet eigen-systems, closed form and finite difference.
//! - [`forward`]: modal solver and discrete fractional calculus.
//! - [`observe`]: observation masks and noisy restriction.
//! - [`inverse`]: Tikhonov recovery, order search, Laplace/contour/convolution checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forward;
pub mod gamma;
pub mod inverse;
pub mod linalg;
pub mod mlf;
pub mod observe;
pub mod order;
pub mod par;
pub mod quad;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use order::{FractionalOrder, Phase};
