//! Scalar abstraction: the whole crate is generic over the floating-point
//! type through [`Real`], with `f64` aliases exported at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable everywhere in the crate: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Display + Debug + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` literal (tolerances, Padé coefficients, ...) into `T`.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 literal must convert")
}

/// Convert a `usize` count into `T`.
#[inline]
pub fn real_of_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize must convert to scalar")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion_roundtrips() {
        let x: f64 = real::<f64>(1e-12);
        assert_eq!(x, 1e-12);
        let y: f32 = real::<f32>(0.25);
        assert_eq!(y, 0.25f32);
        assert_eq!(real_of_usize::<f64>(6), 6.0);
    }
}
