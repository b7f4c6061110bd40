//! Scalar fields for dense matrices: exact rationals and doubles.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::Neg;

pub type Rational = BigRational;

pub trait Scalar: Clone + PartialEq + Debug + Num + Neg<Output = Self> + Send + Sync {
    const EXACT: bool;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Pivot magnitude used by elimination.
    fn magnitude(&self) -> f64;
    /// `p/q` for rationals, shortest round-trip form for doubles.
    fn render(&self) -> String;
}

impl Scalar for f64 {
    const EXACT: bool = false;
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn magnitude(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            Scalar::to_f64(&self.abs()).max(f64::MIN_POSITIVE)
        }
    }
    fn render(&self) -> String {
        if self.denom() == &BigInt::from(1) {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
}

/// Exact rational `p/q`.
pub fn ratio(p: i64, q: i64) -> Rational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `p`, `p/q` or a decimal literal into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    if let Ok(p) = s.parse::<BigInt>() {
        return Some(BigRational::from_integer(p));
    }
    // decimal such as -1.25 or 3e-2
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (ip, fp) = mant.split_once('.').unwrap_or((mant, ""));
    if ip.is_empty() && fp.is_empty() {
        return None;
    }
    let digits: BigInt = format!("{ip}{fp}").parse().ok()?;
    let scale = exp - fp.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(digits);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_rendering() {
        assert_eq!(ratio(6, 4).render(), "3/2");
        assert_eq!(ratio(-4, 2).render(), "-2");
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("3/6"), Some(ratio(1, 2)));
        assert_eq!(parse_rational("-1.25"), Some(ratio(-5, 4)));
        assert_eq!(parse_rational("2.5e-1"), Some(ratio(1, 4)));
        assert_eq!(parse_rational("7"), Some(ratio(7, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
    }
}
