//! Exact rational helpers shared across the crate.
//!
//! Measures of cell sets are dyadic rationals `count / 2^(n*k)`; they fit
//! comfortably in `Ratio<i128>` at desk scales (k <= 12). The branching /
//! multi-scale machinery wants arbitrary-precision rationals, so it uses
//! `BigRational`.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Fixed-size exact rational for measures and small exponent arithmetic.
pub type Q = Ratio<i128>;

/// Arbitrary-precision rational for the scale-analysis toolkit.
pub type BQ = BigRational;

pub fn q(n: i128) -> Q {
    Ratio::from_integer(n)
}

pub fn q_frac(n: i128, d: i128) -> Q {
    Ratio::new(n, d)
}

/// `2^(-e)` as an exact rational.
pub fn q_pow2_neg(e: u32) -> Q {
    Ratio::new(1, 1i128 << e)
}

/// Exact measure of `count` cells of side `2^-k` in dimension `n`.
pub fn measure(count: u64, n: u8, k: u32) -> Q {
    Ratio::new(count as i128, 1i128 << (n as u32 * k))
}

pub fn bq(n: i64) -> BQ {
    BigRational::from_integer(BigInt::from(n))
}

pub fn bq_frac(n: i64, d: i64) -> BQ {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact conversion: every finite f64 is a dyadic rational.
pub fn bq_from_f64(x: f64) -> BQ {
    BigRational::from_float(x).expect("finite float")
}

pub fn bq_to_f64(x: &BQ) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Deterministic rational approximation of `log2(m)` with denominator 2^40.
///
/// The quantization error (~1e-12) is absorbed by the eta-sized slack of every
/// consumer; what matters is that the value is exact rational afterwards.
pub fn bq_log2(m: u64) -> BQ {
    assert!(m > 0, "log2 of zero");
    let scaled = ((m as f64).log2() * (1u64 << 40) as f64).round() as i128;
    BigRational::new(BigInt::from(scaled), BigInt::from(1i128 << 40))
}

/// max of two rationals by reference.
pub fn bq_max(a: &BQ, b: &BQ) -> BQ {
    if a >= b {
        a.clone()
    } else {
        b.clone()
    }
}

pub fn bq_abs(a: &BQ) -> BQ {
    a.abs()
}

pub fn bq_is_one(a: &BQ) -> bool {
    a.is_one()
}

pub fn bq_zero() -> BQ {
    BigRational::zero()
}

pub fn q_to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_is_exact() {
        assert_eq!(measure(4, 2, 2), q_frac(4, 16));
        assert_eq!(measure(1, 3, 4), q_frac(1, 4096));
    }

    #[test]
    fn log2_of_powers_is_exact() {
        assert_eq!(bq_log2(8), bq(3));
        assert_eq!(bq_log2(1), bq(0));
    }
}
