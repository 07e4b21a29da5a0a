use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point scalar the numerical code is generic over.
///
/// The associated constants carry the precision-dependent tolerances used by
/// validation checks; everything else comes from nalgebra's `RealField`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Absolute tolerance for the symmetry check on SPD construction.
    const SYMMETRY_TOL: f64;
    /// Relative tolerance under which two distances or scores count as tied.
    const TIE_TOL: f64;

    /// Converts an `f64` literal. Every finite `f64` is representable
    /// (possibly rounded) in the implementing types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f64 {
    const SYMMETRY_TOL: f64 = 1e-10;
    const TIE_TOL: f64 = 1e-12;
}

impl Real for f32 {
    const SYMMETRY_TOL: f64 = 1e-4;
    const TIE_TOL: f64 = 1e-6;
}
