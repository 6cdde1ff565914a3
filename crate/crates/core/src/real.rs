//! Scalar abstraction for the numerical kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the solvers are written against (`f32` or `f64`).
///
/// Everything the kernels need beyond `num_traits::Float`: conversion from
/// `f64` constants and grid counts, compound assignment, summation, and
/// thread-safety bounds so sweeps can fan rows out across threads.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Convert an `f64` constant (rounds to nearest for `f32`).
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant must be representable")
    }

    /// Convert a grid index or count.
    #[inline]
    fn of_count(n: usize) -> Self {
        Self::from_usize(n).expect("count must be representable")
    }

    /// View as `f64` for diagnostics and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
