//! Scalar abstraction for the numeric core.
//!
//! Everything deterministic in this crate (waveform algebra, geometry,
//! Fisher-information assembly, EFI reductions) is generic over a real
//! scalar so the same code runs in `f32` or `f64`. Concrete aliases for
//! the common `f64` instantiation live at the crate root.

use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the core is generic over: `f32` or `f64`.
pub trait RealScalar:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + 'static
{
    /// Conversion from an `f64` constant (physical constants, literals).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant")
    }

    /// Lossy conversion to `f64` for diagnostics and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar converts to f64")
    }
}

impl RealScalar for f32 {}
impl RealScalar for f64 {}

/// Propagation speed of the signal in meters per second (SI constant).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Speed of light as the working scalar.
pub(crate) fn light_speed<S: RealScalar>() -> S {
    S::of(SPEED_OF_LIGHT)
}
