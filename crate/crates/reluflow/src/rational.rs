//! Helpers for exact rational arithmetic at the binary64 boundary.
//!
//! Every finite `f64` is a dyadic rational, so conversion into `BigRational`
//! is lossless; conversion back rounds once at the very end of a computation.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RationalParseError {
    #[error("invalid rational literal `{0}`: expected `p` or `p/q` with integer p, q")]
    Malformed(String),
    #[error("invalid rational literal `{0}`: zero denominator")]
    ZeroDenominator(String),
}

/// Exact conversion of a finite `f64` into a rational.
///
/// Panics on NaN or infinity; callers validate finiteness first.
pub fn rat_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite f64 required")
}

/// Round a rational to the nearest `f64`.
///
/// `num`'s `ToPrimitive` overflows to `inf/inf = NaN` for ratios of huge
/// integers, so the magnitude is rescaled by a power of two first.
pub fn rat_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let negative = r.is_negative();
    let numer = r.numer().abs();
    let denom = r.denom().clone();
    let nbits = numer.bits() as i64;
    let dbits = denom.bits() as i64;
    // Shift so the integer quotient carries ~80 significant bits; the final
    // f64 rounding then happens once, with at most one ulp of double-rounding.
    let shift = 80 - (nbits - dbits);
    let (q, exp) = if shift >= 0 {
        ((numer << shift as u64) / denom, -shift)
    } else {
        (numer / (denom << (-shift) as u64), -shift)
    };
    let qf = q.to_f64().unwrap_or(f64::INFINITY);
    let val = ldexp_chunked(qf, exp);
    if negative {
        -val
    } else {
        val
    }
}

/// `x * 2^e` without intermediate over/underflow (x is O(2^80) here).
fn ldexp_chunked(x: f64, mut e: i64) -> f64 {
    let mut r = x;
    while e > 600 {
        r *= 2f64.powi(600);
        e -= 600;
    }
    while e < -600 {
        r *= 2f64.powi(-600);
        e += 600;
    }
    r * 2f64.powi(e as i32)
}

/// Parse an exact rational from `p` or `p/q` (optionally signed, ASCII or
/// U+2212 minus).
pub fn rat_from_str(s: &str) -> Result<BigRational, RationalParseError> {
    let norm = s.trim().replace('\u{2212}', "-");
    let mut parts = norm.splitn(2, '/');
    let p = parts.next().unwrap_or("");
    let numer: BigInt = p
        .parse()
        .map_err(|_| RationalParseError::Malformed(s.to_string()))?;
    let denom: BigInt = match parts.next() {
        Some(q) => q
            .trim()
            .parse()
            .map_err(|_| RationalParseError::Malformed(s.to_string()))?,
        None => BigInt::from(1),
    };
    if denom.is_zero() {
        return Err(RationalParseError::ZeroDenominator(s.to_string()));
    }
    Ok(BigRational::new(numer, denom))
}

/// Canonical `p/q` rendering (reduced, sign on the numerator, `p` when q=1).
pub fn rat_to_string(r: &BigRational) -> String {
    if r.denom() == &BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rat_i64(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> BigRational {
    BigRational::from(BigInt::from(n))
}

impl From<RationalParseError> for String {
    fn from(e: RationalParseError) -> String {
        e.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trips_exactly() {
        for &x in &[0.0, 1.0, -0.5, 0.1, 1e-300, -3.7e200, f64::MIN_POSITIVE] {
            assert_eq!(rat_to_f64(&rat_from_f64(x)), x, "round trip of {x}");
        }
    }

    #[test]
    fn huge_ratio_converts_without_overflow() {
        let big = BigInt::from(10).pow(400);
        let r = BigRational::new(big.clone() * 2, big);
        assert_eq!(rat_to_f64(&r), 2.0);
        let tiny = BigRational::new(BigInt::from(1), BigInt::from(10).pow(400));
        assert_eq!(rat_to_f64(&tiny), 0.0);
    }

    #[test]
    fn thirds_round_to_nearest() {
        let third = rat_i64(1, 3);
        assert_eq!(rat_to_f64(&third), 1.0 / 3.0);
        assert_eq!(rat_to_f64(&rat_i64(2, 3)), 2.0 / 3.0);
        assert_eq!(rat_to_f64(&rat_i64(-7, 3)), -7.0 / 3.0);
    }

    #[test]
    fn parse_accepts_signs_and_unicode_minus() {
        assert_eq!(rat_from_str("3").unwrap(), rat_int(3));
        assert_eq!(rat_from_str("-1/3").unwrap(), rat_i64(-1, 3));
        assert_eq!(rat_from_str("\u{2212}1/3").unwrap(), rat_i64(-1, 3));
        assert_eq!(rat_from_str("4/6").unwrap(), rat_i64(2, 3));
        assert!(rat_from_str("1/0").is_err());
        assert!(rat_from_str("x").is_err());
    }

    #[test]
    fn canonical_string_form() {
        assert_eq!(rat_to_string(&rat_i64(4, 6)), "2/3");
        assert_eq!(rat_to_string(&rat_i64(-4, 6)), "-2/3");
        assert_eq!(rat_to_string(&rat_int(5)), "5");
    }
}
