//! Exact numeric types: fixed-point quality values and decimal rationals.
//!
//! Qualities are summed and compared exactly, so they are stored as integer
//! micro-units rather than floats. Timing parameters (frame rate, delays, slot
//! durations) are kept as rationals so that deadline flooring never suffers from
//! binary rounding (`0.1 / 0.001` must be exactly `100`).

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Decimal digits kept by [`Quality`].
pub const QUALITY_DECIMALS: u32 = 6;
const QUALITY_SCALE: u64 = 1_000_000;

/// Exact rational used for timing parameters.
pub type Rational = Ratio<i64>;

/// Non-negative quality value (or sum of them) with six decimal digits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quality(u64);

impl Quality {
    pub const ZERO: Quality = Quality(0);

    pub const fn from_micros(micros: u64) -> Self {
        Quality(micros)
    }

    pub const fn from_units(units: u64) -> Self {
        Quality(units * QUALITY_SCALE)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    /// `self / count` rendered as a decimal string with six fractional digits,
    /// rounded half-up.
    pub fn mean_string(self, count: usize) -> String {
        if count == 0 {
            return "0.000000".to_string();
        }
        let count = count as u128;
        let micros = (self.0 as u128 * 2 + count) / (2 * count);
        format!(
            "{}.{:06}",
            micros / QUALITY_SCALE as u128,
            micros % QUALITY_SCALE as u128
        )
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / QUALITY_SCALE as f64
    }
}

impl Add for Quality {
    type Output = Quality;
    fn add(self, rhs: Quality) -> Quality {
        Quality(self.0 + rhs.0)
    }
}

impl AddAssign for Quality {
    fn add_assign(&mut self, rhs: Quality) {
        self.0 += rhs.0;
    }
}

impl Sum for Quality {
    fn sum<I: Iterator<Item = Quality>>(iter: I) -> Quality {
        iter.fold(Quality::ZERO, Add::add)
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / QUALITY_SCALE;
        let frac = self.0 % QUALITY_SCALE;
        if frac == 0 {
            return write!(f, "{int}");
        }
        let digits = format!("{frac:06}");
        write!(f, "{int}.{}", digits.trim_end_matches('0'))
    }
}

impl FromStr for Quality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Number {
            value: s.to_string(),
            reason: reason.to_string(),
        };
        let (int, frac) = split_decimal(s).ok_or_else(|| bad("not a non-negative decimal"))?;
        if frac.len() > QUALITY_DECIMALS as usize {
            return Err(bad("more than 6 fractional digits"));
        }
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad("integer part out of range"))?
        };
        let mut frac_value: u64 = if frac.is_empty() { 0 } else { frac.parse().unwrap() };
        frac_value *= 10u64.pow(QUALITY_DECIMALS - frac.len() as u32);
        int.checked_mul(QUALITY_SCALE)
            .and_then(|v| v.checked_add(frac_value))
            .map(Quality)
            .ok_or_else(|| bad("out of range"))
    }
}

impl Serialize for Quality {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // f64 division is correctly rounded, so the shortest round-trip
        // representation printed by serde_json is exactly the decimal value.
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Quality {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = number_text(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Splits `"12.50"` into `("12", "50")`; rejects signs, exponents and junk.
fn split_decimal(s: &str) -> Option<(&str, &str)> {
    let s = s.trim();
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if (int.is_empty() && frac.is_empty()) || !digits(int) || !digits(frac) {
        return None;
    }
    Some((int, frac))
}

/// Parses a non-negative decimal such as `"0.1"` or `"30"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = |reason: &str| Error::Number {
        value: s.to_string(),
        reason: reason.to_string(),
    };
    if let Some((num, den)) = s.trim().split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| bad("bad numerator"))?;
        let den: i64 = den.trim().parse().map_err(|_| bad("bad denominator"))?;
        if den <= 0 || num < 0 {
            return Err(bad("expected a non-negative fraction"));
        }
        return Ok(Ratio::new(num, den));
    }
    let (int, frac) = split_decimal(s).ok_or_else(|| bad("not a non-negative decimal"))?;
    if frac.len() > 15 {
        return Err(bad("too many fractional digits"));
    }
    let den = 10i64.pow(frac.len() as u32);
    let joined = format!("{int}{frac}");
    let num: i64 = joined.parse().map_err(|_| bad("out of range"))?;
    Ok(Ratio::new(num, den))
}

/// Renders a rational as a terminating decimal when possible, else `num/den`.
pub fn format_rational(r: &Rational) -> String {
    let r = r.reduced();
    let mut den = *r.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let digits = twos.max(fives);
    let scale = 10i64.pow(digits);
    let scaled = r.numer() * (scale / r.denom());
    if digits == 0 {
        return scaled.to_string();
    }
    let int = scaled / scale;
    let frac = format!("{:0width$}", scaled % scale, width = digits as usize);
    format!("{int}.{frac}")
}

fn number_text<'de, D: Deserializer<'de>>(deserializer: D) -> std::result::Result<String, D::Error> {
    match serde_json::Value::deserialize(deserializer)? {
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::String(s) => Ok(s),
        other => Err(serde::de::Error::custom(format!("expected a number, got {other}"))),
    }
}

/// Serde adapter storing a [`Rational`] as a JSON number (or `"a/b"` string
/// when it has no terminating decimal form).
pub mod rational_serde {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let text = format_rational(r);
        if text.contains('/') {
            serializer.serialize_str(&text)
        } else {
            // terminating decimals with few digits survive the f64 round trip
            serializer.serialize_f64(text.parse::<f64>().unwrap())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Rational, D::Error> {
        let text = number_text(deserializer)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}

/// `⌈bits / capacity⌉`, never less than one slot.
pub fn slots_for(size_bits: u64, capacity: u64) -> u64 {
    size_bits.div_ceil(capacity).max(1)
}
