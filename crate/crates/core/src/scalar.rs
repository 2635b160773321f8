//! Probability scalars.
//!
//! Every probability-valued computation in the crate is generic over
//! [`Probability`], which is implemented for `f32`, `f64` and the exact
//! [`Rational`] type. Path counts are always exact big naturals; only the
//! conversion of a count into a probability weight depends on the scalar.

use std::fmt::Debug;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Num, One, Pow, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub trait Probability: Clone + Debug + PartialOrd + Num + Send + Sync + 'static {
    /// True when arithmetic on this type is exact.
    const EXACT: bool;

    fn from_count(count: &BigUint) -> Self;

    fn from_rational(value: &Rational) -> Self;

    fn to_f64(&self) -> f64;

    /// Slack allowed when checking that probabilities sum to one.
    fn sum_tolerance() -> f64;

    fn powu(&self, exp: u32) -> Self;

    /// `count * p_1^{y_1} * ... * p_k^{y_k}`.
    fn path_weight(count: &BigUint, p: &[Self], y: &[u32]) -> Self {
        p.iter()
            .zip(y)
            .fold(Self::from_count(count), |acc, (pi, &yi)| acc * pi.powu(yi))
    }
}

impl Probability for Rational {
    const EXACT: bool = true;

    fn from_count(count: &BigUint) -> Self {
        Rational::from_integer(BigInt::from_biguint(Sign::Plus, count.clone()))
    }

    fn from_rational(value: &Rational) -> Self {
        value.clone()
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }

    fn sum_tolerance() -> f64 {
        0.0
    }

    fn powu(&self, exp: u32) -> Self {
        Pow::pow(self, exp)
    }
}

macro_rules! float_probability {
    ($t:ty, $tol:expr) => {
        impl Probability for $t {
            const EXACT: bool = false;

            fn from_count(count: &BigUint) -> Self {
                count.to_f64().unwrap_or(f64::INFINITY) as $t
            }

            fn from_rational(value: &Rational) -> Self {
                rational_to_f64(value) as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn sum_tolerance() -> f64 {
                $tol
            }

            fn powu(&self, exp: u32) -> Self {
                self.powi(exp as i32)
            }

            fn path_weight(count: &BigUint, p: &[Self], y: &[u32]) -> Self {
                // Direct product while the count is exactly representable;
                // log space beyond that to avoid overflow against underflow.
                if count.bits() <= 53 {
                    return p
                        .iter()
                        .zip(y)
                        .fold(Self::from_count(count), |acc, (pi, &yi)| acc * pi.powu(yi));
                }
                let mut log = ln_biguint(count);
                for (pi, &yi) in p.iter().zip(y) {
                    if yi == 0 {
                        continue;
                    }
                    if *pi <= 0.0 {
                        return 0.0;
                    }
                    log += yi as f64 * (*pi as f64).ln();
                }
                log.exp() as $t
            }
        }
    };
}

float_probability!(f64, 1e-12);
float_probability!(f32, 1e-6);

/// Natural logarithm of a (possibly huge) natural number.
pub fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn rational_to_f64(value: &Rational) -> f64 {
    if let Some(v) = ToPrimitive::to_f64(value) {
        if v.is_finite() {
            return v;
        }
    }
    // Fallback for numerators/denominators outside the f64 range.
    let sign = if value.is_negative() { -1.0 } else { 1.0 };
    let num = value.numer().magnitude();
    let den = value.denom().magnitude();
    if num.is_zero() {
        return 0.0;
    }
    sign * (ln_biguint(num) - ln_biguint(den)).exp()
}

pub fn ratio(num: &BigUint, den: &BigUint) -> Rational {
    Rational::new(
        BigInt::from_biguint(Sign::Plus, num.clone()),
        BigInt::from_biguint(Sign::Plus, den.clone()),
    )
}

pub fn rational_from_ints(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `"3"`, `"3/10"`, `"-1/2"` or a decimal such as `"0.15"` into an
/// exact rational. Decimals are converted digit by digit, not through f64.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::Parse(format!("not a rational number: {text:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if !int_digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int_digits}{frac}");
        let mut n = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| bad())?;
        if negative {
            n = -n;
        }
        let d = BigInt::from(10u32).pow(frac.len() as u32);
        return Ok(Rational::new(n, d));
    }
    BigInt::from_str(s).map(Rational::from_integer).map_err(|_| bad())
}

/// Renders a rational as `"n"` or `"n/d"`.
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Renders a rational with a fixed number of decimal places, rounding half
/// away from zero in exact arithmetic.
pub fn format_decimal(value: &Rational, digits: u32) -> String {
    let scale = BigInt::from(10u32).pow(digits);
    let scaled = value * Rational::from_integer(scale.clone());
    let two = BigInt::from(2);
    let num = scaled.numer().abs() * &two + scaled.denom();
    let rounded = num.div_floor(&(scaled.denom() * &two));
    let (int, frac) = rounded.div_rem(&scale);
    let sign = if value.is_negative() && !rounded.is_zero() { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{:0>width$}", frac.to_string(), width = digits as usize)
    }
}

pub fn rational_is_unit_interval(value: &Rational) -> bool {
    !value.is_negative() && *value <= Rational::one()
}
