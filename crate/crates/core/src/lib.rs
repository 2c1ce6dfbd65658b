//! A numerical laboratory for the nonlocal convection-diffusion equation
//!
//! ```text
//! u_t = J * u - u + G * (|u|^{q-1} u) - |u|^{q-1} u
//! ```
//!
//! and its parabolic rescalings `u_λ(t, x) = λ^d u(λ² t, λ x)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: periodic boxes standing in for ℝ^d, sampled fields, quadrature and norms.
//! * [`kernels`]: analytic kernel families, their mass-one discretisations and convolution.
//! * [`solver`]: explicit time integration of the nonlocal equation and of the local
//!   viscous limit equation.
//! * [`profiles`]: heat-kernel and viscous-Burgers self-similar profiles.
//! * [`diagnostics`]: evaluators for the energies, compactness functionals, decay fits
//!   and limit checks that the experiments report on.
//! * [`experiments`]: configuration, drivers and CSV output behind the `nla` binary.

// `!(x > 0.0)` style comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kernels;
pub mod profiles;
pub mod solver;
pub mod spectral;

mod sum;

pub use error::{LabError, Result};
pub use grid::{Field, Grid};
pub use kernels::{DiscreteKernel, KernelFamily, KernelSpec};
