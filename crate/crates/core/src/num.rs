//! Scalar abstraction: the whole library is generic over the floating-point
//! type through this trait, with `f32` and `f64` as the two implementors.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable everywhere in the library: real linear
/// algebra (nalgebra), FFTs (rustfft) and plain float math.
pub trait Scalar:
    nalgebra::RealField
    + Float
    + FloatConst
    + rustfft::FftNum
    + FromPrimitive
    + ToPrimitive
    + Default
    + Copy
{
    /// Converts an `f64` literal/constant into this scalar type.
    fn fro(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 literal")
    }

    /// Converts into `f64` (for reporting and serialization).
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex number over the library scalar.
pub type C<T> = Complex<T>;

/// `e^{i theta}` as a complex scalar.
pub fn cis<T: Scalar>(theta: T) -> C<T> {
    C::from_polar(T::one(), theta)
}

/// Absolute value, disambiguated between `Float`, `Signed` and `ComplexField`.
pub fn fabs<T: Scalar>(x: T) -> T {
    Float::abs(x)
}

/// Binary maximum via `Float`.
pub fn fmax<T: Scalar>(a: T, b: T) -> T {
    Float::max(a, b)
}

/// Binary minimum via `Float`.
pub fn fmin<T: Scalar>(a: T, b: T) -> T {
    Float::min(a, b)
}

/// Unimodular constant `c` best aligning `b` with `a` (estimated from the
/// normalized inner product); `1` when the overlap vanishes.
pub fn align_phase<T: Scalar>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    let mut acc = C::new(T::zero(), T::zero());
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y.conj();
    }
    let n = acc.norm();
    if n == T::zero() {
        C::new(T::one(), T::zero())
    } else {
        acc / n
    }
}

/// Max-norm deviation `max_k |a_k - c b_k|` after one global phase
/// alignment of `b` against `a`.
pub fn aligned_max_diff<T: Scalar>(a: &[C<T>], b: &[C<T>]) -> T {
    let c = align_phase(a, b);
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |m, (x, y)| fmax(m, (x - c * y).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(f64::fro(1.5), 1.5);
        assert_eq!(f32::fro(0.25), 0.25f32);
        assert_eq!(1.5f64.as_f64(), 1.5);
    }

    #[test]
    fn cis_is_unimodular() {
        let z = cis(0.7f64);
        assert!((z.norm() - 1.0).abs() < 1e-15);
    }
}
