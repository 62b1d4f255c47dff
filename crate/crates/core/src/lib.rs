//! Numerical laboratory for weighted multipolar Hardy inequalities.
//!
//! The crate evaluates a family of weights `μ` with inverse-power singularities at a
//! finite set of poles, audits the structural hypotheses those weights must satisfy,
//! and checks the inequality
//!
//! ```text
//! c ∫ Σ_i φ² / |x - a_i|² dμ  ≤  ∫ |∇φ|² dμ + K ∫ φ² dμ
//! ```
//!
//! by quadrature, by discrete spectral estimates of the bottom of the spectrum, and by
//! time integration of the associated parabolic problem.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: pole configurations, the IMS partition of unity, the `k0` constant.
//! - [`weights`]: the weight family, its log-gradient, hypothesis audits.
//! - [`quadrature`]: pole-graded integration against `dμ` and a Monte Carlo oracle.
//! - [`hardy`]: closed-form constants, the quadratic form, inequality checks.
//! - [`spectrum`]: finite element forms, `λ₁`, the optimality witness.
//! - [`evolution`]: implicit Euler for the heat flow with inverse-square potential.

pub mod error;
pub mod evolution;
pub mod geometry;
pub mod hardy;
pub mod linalg;
pub mod quadrature;
pub mod sampling;
pub mod spectrum;
pub mod testfn;
pub mod vecmath;
pub mod weights;

pub use error::{Error, Result};
pub use geometry::{PartitionOfUnity, PoleConfiguration};
pub use quadrature::QuadratureRule;
pub use weights::{Weight, WeightSpec};
