//! Scalar abstraction shared by every numerical routine in the crate.

use crate::linalg::LuScalar;
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar the solver is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + LuScalar<Magnitude = Self>
    + Send
    + Sync
    + 'static
{
    /// Complex counterpart used by the Radau complex stage solve.
    type Complex: LuScalar<Magnitude = Self> + From<Self>;

    fn complex(re: Self, im: Self) -> Self::Complex;

    fn complex_parts(z: Self::Complex) -> (Self, Self);

    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal must be representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("index must be representable")
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            type Complex = Complex<$t>;

            #[inline]
            fn complex(re: $t, im: $t) -> Complex<$t> {
                Complex::new(re, im)
            }

            #[inline]
            fn complex_parts(z: Complex<$t>) -> ($t, $t) {
                (z.re, z.im)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
