//! Floating-point abstraction shared by the raster, prior, model and solver code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
///
/// Solver tolerances are part of the trait because the sensible values depend
/// on the machine epsilon of the type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Primal feasibility tolerance of the simplex method.
    fn feasibility_tol() -> Self;
    /// Distance from 0 or 1 below which an LP value counts as integral.
    fn integrality_tol() -> Self;
    /// Absolute slack used when comparing an LP bound against the incumbent.
    fn prune_tol() -> Self;
    /// Smallest admissible pivot magnitude.
    fn pivot_tol() -> Self;

    /// Lossless for `f64`, rounding for `f32`.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn feasibility_tol() -> Self {
        1e-7
    }
    fn integrality_tol() -> Self {
        1e-6
    }
    fn prune_tol() -> Self {
        1e-9
    }
    fn pivot_tol() -> Self {
        1e-7
    }
}

impl Scalar for f32 {
    fn feasibility_tol() -> Self {
        1e-4
    }
    fn integrality_tol() -> Self {
        1e-3
    }
    fn prune_tol() -> Self {
        1e-5
    }
    fn pivot_tol() -> Self {
        1e-4
    }
}
