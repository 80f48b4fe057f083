//! Exact decimal comparison of displayed numbers against evidence values.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericStatus {
    ExactMatch,
    RoundingOk,
    NumberMismatch,
}

/// A finite decimal: `(-1)^neg * mantissa / 10^scale`.
#[derive(Debug, Clone)]
pub struct Dec {
    neg: bool,
    mantissa: BigUint,
    scale: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadNumber(pub String);

impl fmt::Display for BadNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not a finite decimal: `{}`", self.0)
    }
}

impl std::error::Error for BadNumber {}

fn pow10(n: u32) -> BigUint {
    BigUint::from(10u32).pow(n)
}

impl FromStr for Dec {
    type Err = BadNumber;

    /// Accepts `[+-]digits[.digits][e[+-]digits]`.
    fn from_str(s: &str) -> Result<Self, BadNumber> {
        let bad = || BadNumber(s.to_string());
        let t = s.trim();
        let (neg, t) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        let (num, exp) = match t.find(['e', 'E']) {
            Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (t, 0),
        };
        let (int, frac) = num.split_once('.').unwrap_or((num, ""));
        if (int.is_empty() && frac.is_empty()) || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        let mut mantissa = if digits.is_empty() {
            BigUint::from(0u32)
        } else {
            BigUint::parse_bytes(digits.as_bytes(), 10).ok_or_else(bad)?
        };
        let mut scale = frac.len() as i64 - exp as i64;
        if scale < 0 {
            mantissa *= pow10((-scale) as u32);
            scale = 0;
        }
        Ok(Dec {
            neg,
            mantissa,
            scale: u32::try_from(scale).map_err(|_| bad())?,
        })
    }
}

impl Dec {
    pub fn from_f64(v: f64) -> Result<Self, BadNumber> {
        if !v.is_finite() {
            return Err(BadNumber(v.to_string()));
        }
        // Display prints the shortest string that round-trips
        v.to_string().parse()
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == BigUint::from(0u32)
    }

    fn rescaled(&self, scale: u32) -> BigUint {
        debug_assert!(scale >= self.scale);
        &self.mantissa * pow10(scale - self.scale)
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn abs_at_most_one(&self) -> bool {
        self.mantissa <= pow10(self.scale)
    }

    /// Round half to even at `places` decimal places.
    pub fn round_half_even(&self, places: u32) -> Dec {
        if self.scale <= places {
            return Dec {
                neg: self.neg,
                mantissa: self.rescaled(places),
                scale: places,
            };
        }
        let div = pow10(self.scale - places);
        let mut q = &self.mantissa / &div;
        let r = &self.mantissa % &div;
        let twice = r * 2u32;
        let odd = &q % 2u32 == BigUint::from(1u32);
        match twice.cmp(&div) {
            Ordering::Greater => q += 1u32,
            Ordering::Equal if odd => q += 1u32,
            _ => {}
        }
        Dec {
            neg: self.neg,
            mantissa: q,
            scale: places,
        }
    }

    pub fn sub(&self, other: &Dec) -> Dec {
        let scale = self.scale.max(other.scale);
        let (a, b) = (self.rescaled(scale), other.rescaled(scale));
        let (neg, mantissa) = match (self.neg, other.neg) {
            (false, true) => (false, a + b),
            (true, false) => (true, a + b),
            (n, _) if a >= b => (n, a - b),
            (n, _) => (!n, b - a),
        };
        Dec { neg, mantissa, scale }
    }

    pub fn scaled_by_pow10(&self, n: u32) -> Dec {
        Dec {
            neg: self.neg,
            mantissa: &self.mantissa * pow10(n),
            scale: self.scale,
        }
    }
}

impl PartialEq for Dec {
    fn eq(&self, other: &Self) -> bool {
        if self.is_zero() && other.is_zero() {
            return true;
        }
        let scale = self.scale.max(other.scale);
        self.neg == other.neg && self.rescaled(scale) == other.rescaled(scale)
    }
}

impl fmt::Display for Dec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.mantissa.to_string();
        let s = self.scale as usize;
        let body = if s == 0 {
            digits
        } else if digits.len() > s {
            format!("{}.{}", &digits[..digits.len() - s], &digits[digits.len() - s..])
        } else {
            format!("0.{}{}", "0".repeat(s - digits.len()), digits)
        };
        if self.neg && !self.is_zero() {
            write!(f, "-{body}")
        } else {
            f.write_str(&body)
        }
    }
}

/// Compare a value shown at `precision` decimals against the evidence.
pub fn numeric_compare(display: &Dec, precision: u32, evidence: &Dec) -> NumericStatus {
    if display == evidence {
        NumericStatus::ExactMatch
    } else if &evidence.round_half_even(precision) == display {
        NumericStatus::RoundingOk
    } else {
        NumericStatus::NumberMismatch
    }
}

/// String front end; the display precision is read off the display text.
pub fn numeric_compare_str(display: &str, evidence: &str) -> Result<NumericStatus, BadNumber> {
    let d: Dec = display.parse()?;
    let e: Dec = evidence.parse()?;
    Ok(numeric_compare(&d, d.scale(), &e))
}

/// Check a reported difference against `a - b` recomputed from evidence.
pub fn delta_compare(display_delta: &Dec, precision: u32, a: &Dec, b: &Dec) -> NumericStatus {
    numeric_compare(display_delta, precision, &a.sub(b))
}
