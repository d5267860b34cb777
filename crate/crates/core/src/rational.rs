//! Exact rational scalars.
//!
//! Everything on the symbolic side of the crate is computed over `BigRational`
//! so brackets, evaluations at rational points and ranks are exact.

use num::bigint::BigInt;
use num::{BigRational, One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Parse `"p/q"`, `"p"` or a finite decimal such as `"-1.25"` / `"2e-3"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let t = s.trim();
    let err = || Error::Rational(s.to_string());
    if t.is_empty() {
        return Err(err());
    }
    if let Some((p, q)) = t.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| err())?;
        let q: BigInt = q.trim().parse().map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(p, q));
    }
    if let Ok(p) = t.parse::<BigInt>() {
        return Ok(Rational::from_integer(p));
    }
    parse_decimal(t).ok_or_else(err)
}

fn parse_decimal(t: &str) -> Option<Rational> {
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}0").parse().ok()?;
    let ten = BigInt::from(10);
    let scale = exp - frac_part.len() as i32 - 1;
    let mut r = Rational::from_integer(digits);
    if scale >= 0 {
        r *= Rational::from_integer(num::pow(ten, scale as usize));
    } else {
        r /= Rational::from_integer(num::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact binary value of a finite float.
pub fn from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| Error::Rational(x.to_string()))
}

pub fn from_i64(x: i64) -> Rational {
    Rational::from_integer(BigInt::from(x))
}

pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Uniform draw from the grid `{k / denom : |k| <= numer_bound}`.
pub fn random_rational<R: Rng + ?Sized>(rng: &mut R, numer_bound: i64, denom: i64) -> Rational {
    let k = rng.random_range(-numer_bound..=numer_bound);
    ratio(k, denom)
}

/// Rational with a large random denominator, used for generic-point probes.
pub fn random_fine_rational<R: Rng + ?Sized>(rng: &mut R) -> Rational {
    let denom: i64 = 1 << 30;
    let k = rng.random_range(-(2 * denom)..=(2 * denom));
    let mut r = ratio(k, denom);
    if r.is_zero() {
        r = Rational::one() / from_i64(3);
    }
    r
}

pub fn format_rational(r: &Rational) -> String {
    r.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(parse_rational("3/6").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational("-7").unwrap(), from_i64(-7));
        assert_eq!(parse_rational(" 1.25 ").unwrap(), ratio(5, 4));
        assert_eq!(parse_rational("-0.5").unwrap(), ratio(-1, 2));
        assert_eq!(parse_rational("2e-3").unwrap(), ratio(1, 500));
        assert_eq!(parse_rational("1.5E2").unwrap(), from_i64(150));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "1/0", "abc", "1/2/3", "1.2.3", "-", "."] {
            assert!(parse_rational(s).is_err(), "{s}");
        }
    }

    #[test]
    fn float_round_trip_is_exact() {
        let x = 0.1_f64;
        assert_eq!(to_f64(&from_f64(x).unwrap()), x);
        assert!(from_f64(f64::NAN).is_err());
    }

    #[test]
    fn format_is_p_over_q() {
        assert_eq!(format_rational(&ratio(-6, 4)), "-3/2");
        assert_eq!(format_rational(&from_i64(5)), "5");
    }
}
