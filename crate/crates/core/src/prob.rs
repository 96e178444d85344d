//! Probability weights: exact rationals or binary64.
//!
//! Channel laws are always exact. Input distributions may be either kind;
//! routines that compare probabilities use exact equality for rationals and
//! an absolute tolerance for floats.

use std::fmt::Debug;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub trait Weight: Clone + Debug + Num + PartialOrd + Send + Sync + 'static {
    fn to_f64(&self) -> f64;
    fn from_rational(r: &Rational) -> Self;
    fn from_count(c: &BigUint) -> Self;

    /// Absolute difference as a float, used in violation reports.
    fn distance(&self, other: &Self) -> f64;

    /// `true` when the two weights agree: exactly for rationals, within
    /// `tol` for floats.
    fn agrees(&self, other: &Self, tol: f64) -> bool;

    fn is_exact() -> bool;
}

impl Weight for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_rational(r: &Rational) -> Self {
        rational_to_f64(r)
    }

    fn from_count(c: &BigUint) -> Self {
        c.to_f64().unwrap_or(f64::INFINITY)
    }

    fn distance(&self, other: &Self) -> f64 {
        (self - other).abs()
    }

    fn agrees(&self, other: &Self, tol: f64) -> bool {
        (self - other).abs() <= tol
    }

    fn is_exact() -> bool {
        false
    }
}

impl Weight for Rational {
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn from_count(c: &BigUint) -> Self {
        Rational::from_integer(BigInt::from(c.clone()))
    }

    fn distance(&self, other: &Self) -> f64 {
        rational_to_f64(&(self - other).abs())
    }

    fn agrees(&self, other: &Self, _tol: f64) -> bool {
        self == other
    }

    fn is_exact() -> bool {
        true
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    let num = r.numer().magnitude();
    let den = r.denom().magnitude();
    sign * (log2_big(num) - log2_big(den)).exp2()
}

/// Parses `"a/b"` or `"a"` into a rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let valid = |t: &str| {
        let digits = t.strip_prefix('-').unwrap_or(t);
        !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
    };
    if !valid(n) || !valid(d) {
        return None;
    }
    let n: BigInt = n.parse().ok()?;
    let d: BigInt = d.parse().ok()?;
    if d.is_zero() {
        return None;
    }
    Some(Rational::new(n, d))
}

/// Canonical `"num/den"` form used in every file this crate writes.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn rational(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

pub fn one() -> Rational {
    Rational::one()
}

/// Base-2 logarithm of a big unsigned integer; `-inf` for zero.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 1000 {
        return x.to_f64().expect("fits in f64").log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("64 bits fit");
    top.log2() + shift as f64
}

/// `log2(num / den)` for positive big integers.
pub fn log2_ratio(num: &BigUint, den: &BigUint) -> f64 {
    log2_big(num) - log2_big(den)
}

/// Shannon entropy term `-p log2 p` with `0 log 0 = 0`.
#[inline]
pub fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}
