//! Scalar abstraction shared by the floating-point sampling paths and the
//! exact-rational enumeration oracles.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

/// Arithmetic required of a probability value.
///
/// `f64` (and `f32`) back the Monte-Carlo paths; [`BigRational`] backs the
/// brute-force oracles, where every identity is checked with zero tolerance.
pub trait Scalar:
    Clone + PartialEq + PartialOrd + std::fmt::Debug + Num + Signed + FromPrimitive + 'static
{
    /// Conversion from an exact rational (rounded for floats, lossless for rationals).
    fn from_ratio(r: &BigRational) -> Self;

    /// The scalar `n / d`.
    fn int_ratio(n: i64, d: i64) -> Self;

    /// Sum of probability entries. Compensated for floats so that domain
    /// sizes up to ~1e7 stay within the pmf construction tolerance.
    fn sum_probs(entries: &[Self]) -> Self;

    /// Whether a pmf whose entries sum to `total` passes construction.
    fn sum_is_one(total: &Self) -> bool;

    /// Finiteness of a table value (rationals always are).
    fn is_finite_value(&self) -> bool;
}

impl Scalar for f64 {
    fn from_ratio(r: &BigRational) -> Self {
        // Ratio's conversion rescales internally, so huge numerators and
        // denominators do not overflow on the way to a modest quotient.
        r.to_f64().unwrap_or(f64::NAN)
    }

    fn int_ratio(n: i64, d: i64) -> Self {
        n as f64 / d as f64
    }

    fn sum_probs(entries: &[Self]) -> Self {
        // Neumaier summation.
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &x in entries {
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    fn sum_is_one(total: &Self) -> bool {
        (total - 1.0).abs() <= 1e-12
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    fn from_ratio(r: &BigRational) -> Self {
        f64::from_ratio(r) as f32
    }

    fn int_ratio(n: i64, d: i64) -> Self {
        n as f32 / d as f32
    }

    fn sum_probs(entries: &[Self]) -> Self {
        let mut sum = 0.0f64;
        for &x in entries {
            sum += x as f64;
        }
        sum as f32
    }

    fn sum_is_one(total: &Self) -> bool {
        (total - 1.0).abs() <= 1e-5
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for BigRational {
    fn from_ratio(r: &BigRational) -> Self {
        r.clone()
    }

    fn int_ratio(n: i64, d: i64) -> Self {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn sum_probs(entries: &[Self]) -> Self {
        entries.iter().fold(Self::zero(), |acc, x| acc + x)
    }

    fn sum_is_one(total: &Self) -> bool {
        total.is_one()
    }

    fn is_finite_value(&self) -> bool {
        true
    }
}
