//! Numerical laboratory for equiaffine (Blaschke) hypersurface geometry.
//!
//! Given a parametrized locally strongly convex hypersurface immersion
//! `F: U ⊂ R^n -> R^{n+1}`, this crate computes the full equiaffine structure
//! on a jet of `F` at a point — affine metric, affine normal, shape operator,
//! induced and Levi-Civita connections, difference tensor and cubic form —
//! then the curvature of the affine metric and the covariant derivatives of
//! the cubic form, and finally classifies the surface among the known models
//! with a conformally flat affine metric and semi-parallel cubic form.

pub mod blaschke;
pub mod classify;
pub mod curvature;
pub mod dsl;
pub mod error;
pub mod families;
pub mod jet;
pub mod linalg;
pub mod report;
pub mod sample;
pub mod scalar;
pub mod tensor;
pub mod tolerance;

pub use classify::{Classifier, Verdict};
pub use error::{Error, Result};
pub use jet::{jet_space, Jet, JetSpace};
pub use scalar::Real;

/// Default jet truncation order for the full pipeline: enough that the
/// commutator route to the second covariant derivative of the cubic form is
/// available (each covariant-derivative stage costs one order).
pub const DEFAULT_ORDER: usize = 5;

/// Double-precision jet (the workhorse type).
pub type Jet64 = Jet<f64>;
/// Single-precision jet (for quick, low-accuracy experiments).
pub type Jet32 = Jet<f32>;
