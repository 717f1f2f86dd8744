//! Learned data fidelity terms: scaled ℓ², spline Fréchet metric and spline
//! generalized divergence, with derivatives, proximal maps and constraint
//! projections.

mod project;
mod spline;
mod term;

pub use project::{isotonic, project_bounded_increments, project_monotone_nonneg};
pub use spline::{cubic_bspline, spline_basis, SplineCoeffs1D, SplineCoeffs2D};
pub use term::{DataTerm, DataTermKind, MIN_L2_SCALE};

/// Default knot count of the Fréchet spline.
pub const DEFAULT_KNOTS: usize = 31;
/// Default half-width of the divergence spline grid.
pub const DEFAULT_HALF_WIDTH: usize = 15;
/// Default domain bound `Q`.
pub const DEFAULT_Q: f64 = 2.0;
