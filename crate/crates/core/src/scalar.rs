//! Scalar abstraction: every numerical routine in this crate is generic over a
//! floating-point scalar so the same code runs in `f32` or `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating-point scalar the solvers are generic over.
///
/// Implemented for `f32` and `f64`. Concrete aliases for the main public
/// types live at the crate root.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not
    /// representable, which cannot happen for finite literals.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Uniform draw in the half-open interval (0, 1] from 64 random bits.
    /// The top 53 bits are used so `f64` and `f32` streams agree on the
    /// underlying uniform sequence.
    #[inline]
    fn unit_open_closed(bits: u64) -> Self {
        Self::lit(((bits >> 11) as f64 + 1.0) * (1.0 / 9007199254740992.0))
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {}
impl Scalar for f32 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_bounds() {
        let lo: f64 = Scalar::unit_open_closed(0);
        let hi: f64 = Scalar::unit_open_closed(u64::MAX);
        assert!(lo > 0.0 && lo < 1e-15);
        assert!(hi <= 1.0);
        let mid: f32 = Scalar::unit_open_closed(1 << 63);
        assert!(mid > 0.49 && mid < 0.51);
    }
}
