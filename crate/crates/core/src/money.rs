//! Exact dollar amounts.
//!
//! Pay-outs such as `10000/110` have no finite decimal expansion, so every
//! amount is carried as an arbitrary-precision rational and only rounded when
//! rendered.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Money(BigRational);

impl Money {
    pub fn zero() -> Self {
        Money(BigRational::zero())
    }

    pub fn dollars(amount: i64) -> Self {
        Money(BigRational::from_integer(BigInt::from(amount)))
    }

    /// `numer / denom` dollars. Panics if `denom` is zero.
    pub fn ratio(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Money(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    /// Parses a plain decimal such as `-469.73` exactly.
    pub fn parse_decimal(s: &str) -> Option<Self> {
        let s = s.trim();
        let (negative, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return None;
        }
        let numer: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
        let denom = num_traits::pow(BigInt::from(10), frac_part.len());
        let value = BigRational::new(numer, denom);
        Some(Money(if negative { -value } else { value }))
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Money {
        Money(self.0.abs())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Scales by the exact ratio `numer / denom`.
    pub fn scale(&self, numer: &Money, denom: &Money) -> Money {
        Money(&self.0 * &numer.0 / &denom.0)
    }

    /// Rounded to whole cents, halves away from zero.
    pub fn round_cents(&self) -> BigInt {
        let cents = &self.0 * BigRational::from_integer(BigInt::from(100));
        cents.round().to_integer()
    }

    pub fn max(self, other: Money) -> Money {
        std::cmp::max(self, other)
    }

    pub fn min(self, other: Money) -> Money {
        std::cmp::min(self, other)
    }
}

impl From<BigRational> for Money {
    fn from(value: BigRational) -> Self {
        Money(value)
    }
}

/// Two decimals, halves rounded away from zero.
impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cents = self.round_cents();
        let sign = if cents.is_negative() { "-" } else { "" };
        let cents = cents.abs();
        let hundred = BigInt::from(100);
        let whole = &cents / &hundred;
        let frac = (&cents % &hundred).to_u32().unwrap_or(0);
        let text = format!("{sign}{whole}.{frac:02}");
        f.pad(&text)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Money> for &'a Money {
    type Output = Money;
    fn add(self, rhs: &Money) -> Money {
        Money(&self.0 + &rhs.0)
    }
}

impl AddAssign<&Money> for Money {
    fn add_assign(&mut self, rhs: &Money) {
        self.0 += &rhs.0;
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl<'a> Sub<&'a Money> for &'a Money {
    type Output = Money;
    fn sub(self, rhs: &Money) -> Money {
        Money(&self.0 - &rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Mul<i64> for &Money {
    type Output = Money;
    fn mul(self, rhs: i64) -> Money {
        Money(&self.0 * BigRational::from_integer(BigInt::from(rhs)))
    }
}

impl Mul<i64> for Money {
    type Output = Money;
    fn mul(self, rhs: i64) -> Money {
        &self * rhs
    }
}

impl Div<i64> for Money {
    type Output = Money;
    fn div(self, rhs: i64) -> Money {
        Money(self.0 / BigRational::from_integer(BigInt::from(rhs)))
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |acc, m| acc + m)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |mut acc, m| {
            acc += m;
            acc
        })
    }
}

impl PartialEq<i64> for Money {
    fn eq(&self, other: &i64) -> bool {
        self.0 == BigRational::from_integer(BigInt::from(*other))
    }
}

impl PartialOrd<i64> for Money {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        self.0.partial_cmp(&BigRational::from_integer(BigInt::from(*other)))
    }
}
