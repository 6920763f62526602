//! Centralized tolerance ladder.
//!
//! Three regimes, ordered by how much error the computation stack can have
//! accumulated by the time a number is inspected:
//!
//! * identity residuals (structure equations evaluated on jet output) sit at
//!   machine noise amplified by a few contractions — budget `1e-7`;
//! * decisions that a derived quantity *is zero* (cubic form vanishing, Weyl
//!   vanishing, semi-parallelism) get a slightly looser `1e-6`;
//! * decisions that a quantity is *nonzero* require clear separation, `1e-3`,
//!   so that a noisy near-zero value is never promoted to a structural feature.

/// Residual budget for exact structure identities (Gauss/Codazzi/apolarity...).
pub const IDENTITY_RESIDUAL: f64 = 1e-7;

/// Threshold below which a derived tensor norm counts as zero.
pub const ZERO_DECISION: f64 = 1e-6;

/// Threshold above which a derived quantity counts as definitely nonzero.
pub const NONZERO_DECISION: f64 = 1e-3;

/// Relative tolerance for scalar identities between derived quantities
/// (eigenvalue relations, trace identities).
pub const RELATIVE_IDENTITY: f64 = 1e-5;

/// Residual budget for profile ODE solutions.
pub const ODE_RESIDUAL: f64 = 1e-9;

/// Target accuracy of Chebyshev profile proxies.
pub const PROFILE_PROXY: f64 = 1e-10;

/// Finite-difference residual budget for derivative identities checked by a
/// 5-point stencil along the t-line.
pub const FINITE_DIFFERENCE: f64 = 1e-4;

/// Step for the 5-point stencil.
pub const FD_STEP: f64 = 1e-3;

/// Eigenvalue clustering: two clusters are distinct when the gap between them
/// exceeds `CLUSTER_GAP_FACTOR` times the largest intra-cluster spread.
pub const CLUSTER_GAP_FACTOR: f64 = 10.0;

/// Absolute floor below which eigenvalue differences are treated as ties.
pub const CLUSTER_ABS_FLOOR: f64 = 1e-8;

/// Relative tolerance for quantities that must be constant across the sample
/// set (mean curvature of a sphere, the recovered warped-family constant).
pub const CONSTANCY_RELATIVE: f64 = 1e-6;

/// The full ladder as a value, so callers can override entries selectively.
#[derive(Debug, Clone)]
pub struct Tolerances {
    /// Budget for exact structure identities.
    pub identity: f64,
    /// Below this a derived norm counts as zero.
    pub zero: f64,
    /// Above this a derived quantity counts as definitely nonzero.
    pub nonzero: f64,
    /// Relative tolerance for scalar identities.
    pub relative: f64,
    /// Relative constancy tolerance across sample points.
    pub constancy: f64,
    /// Budget for finite-difference derivative identities.
    pub finite_difference: f64,
    /// Step of the 5-point stencil.
    pub fd_step: f64,
    /// Required ratio between inter- and intra-cluster eigenvalue gaps.
    pub gap_factor: f64,
    /// Absolute eigenvalue-tie floor.
    pub abs_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: IDENTITY_RESIDUAL,
            zero: ZERO_DECISION,
            nonzero: NONZERO_DECISION,
            relative: RELATIVE_IDENTITY,
            constancy: CONSTANCY_RELATIVE,
            finite_difference: FINITE_DIFFERENCE,
            fd_step: FD_STEP,
            gap_factor: CLUSTER_GAP_FACTOR,
            abs_floor: CLUSTER_ABS_FLOOR,
        }
    }
}

impl Tolerances {
    /// Scale the verdict-ladder thresholds by `factor`; the cross-validation
    /// baseline `relative`, the stencil step and the clustering controls
    /// stay fixed.
    pub fn scaled(&self, factor: f64) -> Self {
        Tolerances {
            identity: self.identity * factor,
            zero: self.zero * factor,
            nonzero: self.nonzero * factor,
            constancy: self.constancy * factor,
            finite_difference: self.finite_difference * factor,
            ..self.clone()
        }
    }
}
