//! Data informativity for identification and stabilization of discrete-time
//! linear systems `x(k+1) = A x(k) + B u(k)`, including truncations of
//! infinite-dimensional systems such as a sampled heat equation in cascade
//! with a finite-dimensional plant.
//!
//! Data are handled through synthesis operators: the matrix whose `k`-th
//! column is the `k`-th sample. Informativity for stabilization is decided by
//! the data-based LMI
//!
//! ```text
//! [ γ² Ξ₀Λ − I   Ξ₁Λ ]
//! [ (Ξ₁Λ)ᵀ       Ξ₀Λ ]  ⪰ 0,   Ξ₀Λ symmetric,
//! ```
//!
//! and a feasible `Λ` yields the gain `K = Υ₀ Λ (Ξ₀Λ)⁻¹`.
//!
//! Modules:
//! - [`operators`]: synthesis operators, frame bounds, pseudoinverses,
//!   Douglas factorization and power-stability certificates.
//! - [`systems`]: linear systems, the heat/ODE cascade, simulation and data
//!   batches.
//! - [`lmi`]: the small dense feasibility solver.
//! - [`informativity`]: noise-free informativity tests and gain synthesis.
//! - [`noise`]: noise classes and robust decay rates.
//! - [`finitedata`]: finite-length data with a known stable/unstable split.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod finitedata;
pub mod informativity;
pub mod lmi;
pub mod noise;
pub mod operators;
pub mod systems;

mod rng;

pub use error::{Error, Result};
pub use operators::{
    build_synthesis, construct_certificate, douglas_minimal_constant, frame_bounds, pseudo_inverse, spectral_norm,
    spectral_radius, Certification, DouglasFactor, Factorization, FrameBounds, PowerStabilityCertificate,
    SynthesisOperator,
};
pub use systems::{DataBatch, HeatCascadeParams, LinearSystem};

/// Relative singular-value threshold used for rank decisions.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Absolute eigenvalue floor for PSD checks after symmetrization.
pub const PSD_FLOOR: f64 = 1e-9;
