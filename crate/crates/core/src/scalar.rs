//! Exact rational scalars with arbitrary-precision integer parts.
//!
//! Every number in this crate is an element of `Q`, stored in the canonical
//! form `p/q` with `q > 0` and `gcd(|p|, q) = 1`.  Equality of [`Scalar`]s is
//! therefore literal equality of the mathematical values; there is no epsilon
//! anywhere.  Floats are deliberately not constructible from or convertible
//! into a [`Scalar`].
//!
//! The canonical *text* form is `"p/q"` with an optional leading sign and the
//! denominator always written out (`"5/1"`, `"-3/7"`).  Parsing additionally
//! accepts the integer shorthand `"5"`.  This form is used verbatim in all
//! JSON input and output.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::fmt;
use std::str::FromStr;

/// Errors arising from scalar construction and arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScalarError {
    /// A fraction with denominator zero was requested.
    #[error("zero denominator in {numerator}/0")]
    ZeroDenominator { numerator: BigInt },
    /// Division by an exact zero; both operands are carried for diagnostics.
    #[error("division by zero: ({lhs}) / ({rhs})")]
    DivisionByZero { lhs: String, rhs: String },
    /// `0^e` with `e < 0`.
    #[error("zero raised to negative power {exponent}")]
    ZeroToNegativePower { exponent: i64 },
    /// Text that is not a valid `p/q` or integer literal.
    #[error("malformed rational literal {text:?}")]
    Malformed { text: String },
}

/// An exact rational number in canonical form.
///
/// The wrapped [`BigRational`] maintains the canonical representation
/// (positive denominator, reduced fraction) as an invariant of every
/// constructor and operation, so canonicalisation is idempotent by
/// construction.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigRational);

impl Scalar {
    /// The additive identity `0/1`.
    pub fn zero() -> Self {
        Scalar(BigRational::zero())
    }

    /// The multiplicative identity `1/1`.
    pub fn one() -> Self {
        Scalar(BigRational::one())
    }

    /// Builds `numerator/denominator`, reducing to canonical form.
    ///
    /// `new(6, 4) == 3/2`, `new(0, 7) == 0/1`, `new(3, -9) == -1/3`.
    /// A zero denominator is a construction error, not a panic.
    pub fn new(numerator: i64, denominator: i64) -> Result<Self, ScalarError> {
        Self::from_parts(BigInt::from(numerator), BigInt::from(denominator))
    }

    /// As [`Scalar::new`] for arbitrary-precision parts.
    pub fn from_parts(numerator: BigInt, denominator: BigInt) -> Result<Self, ScalarError> {
        if denominator.is_zero() {
            return Err(ScalarError::ZeroDenominator { numerator });
        }
        Ok(Scalar(BigRational::new(numerator, denominator)))
    }

    /// The integer `n` as a scalar.
    pub fn from_int(n: i64) -> Self {
        Scalar(BigRational::from_integer(BigInt::from(n)))
    }

    /// Canonical numerator (carries the sign).
    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    /// Canonical denominator (always positive).
    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// Exact division; reports both operands on a zero divisor.
    pub fn div(&self, rhs: &Scalar) -> Result<Scalar, ScalarError> {
        if rhs.is_zero() {
            return Err(ScalarError::DivisionByZero {
                lhs: self.to_string(),
                rhs: rhs.to_string(),
            });
        }
        Ok(Scalar(&self.0 / &rhs.0))
    }

    /// Multiplicative inverse.
    pub fn inv(&self) -> Result<Scalar, ScalarError> {
        Scalar::one().div(self)
    }

    /// Integer power; negative exponents are allowed for nonzero base.
    pub fn pow(&self, exponent: i64) -> Result<Scalar, ScalarError> {
        if self.is_zero() && exponent < 0 {
            return Err(ScalarError::ZeroToNegativePower { exponent });
        }
        let e = exponent.unsigned_abs().try_into().unwrap_or(i32::MAX);
        let p = Scalar(self.0.pow(e));
        if exponent < 0 {
            p.inv()
        } else {
            Ok(p)
        }
    }

    /// `n!` as a scalar (`0! = 1`).
    pub fn factorial(n: usize) -> Scalar {
        let mut acc = BigInt::one();
        for k in 2..=n {
            acc *= BigInt::from(k);
        }
        Scalar(BigRational::from_integer(acc))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Scalar {
    type Err = ScalarError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let malformed = || ScalarError::Malformed {
            text: text.to_string(),
        };
        let (num_text, den_text) = match text.split_once('/') {
            Some((n, d)) => (n, Some(d)),
            None => (text, None),
        };
        let parse_int = |s: &str| -> Result<BigInt, ScalarError> {
            // `BigInt::from_str` accepts leading '+'; forbid empty and stray spaces.
            if s.is_empty() || s.chars().any(|c| c.is_whitespace()) {
                return Err(malformed());
            }
            BigInt::from_str(s).map_err(|_| malformed())
        };
        let numerator = parse_int(num_text)?;
        let denominator = match den_text {
            Some(d) => parse_int(d)?,
            None => BigInt::one(),
        };
        if denominator.is_zero() {
            return Err(ScalarError::ZeroDenominator { numerator });
        }
        Ok(Scalar(BigRational::new(numerator, denominator)))
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl std::ops::$trait for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar((&self.0).$method(&rhs.0))
            }
        }
        impl std::ops::$trait for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                (&self).$method(&rhs)
            }
        }
        impl std::ops::$trait<&Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                (&self).$method(rhs)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl std::ops::Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-&self.0)
    }
}

impl std::ops::Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl std::ops::AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, rhs: &Scalar) {
        self.0 += &rhs.0;
    }
}

impl std::ops::SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, rhs: &Scalar) {
        self.0 -= &rhs.0;
    }
}

impl std::ops::MulAssign<&Scalar> for Scalar {
    fn mul_assign(&mut self, rhs: &Scalar) {
        self.0 *= &rhs.0;
    }
}

impl serde::Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(n: i64, d: i64) -> Scalar {
        Scalar::new(n, d).unwrap()
    }

    #[test]
    fn construction_reduces_to_canonical_form() {
        assert_eq!(s(6, 4), s(3, 2));
        assert_eq!(s(0, 7).to_string(), "0/1");
        assert_eq!(s(3, -9).to_string(), "-1/3");
        assert_eq!(s(-3, -9), s(1, 3));
    }

    #[test]
    fn zero_denominator_is_an_error_not_a_panic() {
        assert!(matches!(
            Scalar::new(5, 0),
            Err(ScalarError::ZeroDenominator { .. })
        ));
    }

    #[test]
    fn division_by_zero_reports_both_operands() {
        let err = s(3, 7).div(&Scalar::zero()).unwrap_err();
        match err {
            ScalarError::DivisionByZero { lhs, rhs } => {
                assert_eq!(lhs, "3/7");
                assert_eq!(rhs, "0/1");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn integer_powers_including_negative_exponents() {
        assert_eq!(s(2, 3).pow(3).unwrap(), s(8, 27));
        assert_eq!(s(2, 3).pow(-2).unwrap(), s(9, 4));
        assert_eq!(s(-5, 1).pow(0).unwrap(), Scalar::one());
        assert!(matches!(
            Scalar::zero().pow(-1),
            Err(ScalarError::ZeroToNegativePower { exponent: -1 })
        ));
    }

    #[test]
    fn text_form_roundtrip_and_integer_shorthand() {
        assert_eq!("5".parse::<Scalar>().unwrap().to_string(), "5/1");
        assert_eq!("-3/7".parse::<Scalar>().unwrap(), s(-3, 7));
        assert_eq!("+4/6".parse::<Scalar>().unwrap(), s(2, 3));
        for bad in ["", "1/0", "a", "1/2/3", "1 /2", "2.5"] {
            assert!(bad.parse::<Scalar>().is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn factorials() {
        assert_eq!(Scalar::factorial(0), Scalar::one());
        assert_eq!(Scalar::factorial(5), Scalar::from_int(120));
    }

    fn arb_scalar() -> impl Strategy<Value = Scalar> {
        (-60i64..=60, 1i64..=60).prop_map(|(n, d)| s(n, d))
    }

    proptest! {
        #[test]
        fn field_axioms(a in arb_scalar(), b in arb_scalar(), c in arb_scalar()) {
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a + &Scalar::zero(), a.clone());
            prop_assert_eq!(&a * &Scalar::one(), a.clone());
            prop_assert_eq!(&a + &(-&a), Scalar::zero());
            if !a.is_zero() {
                prop_assert_eq!(&a * &a.inv().unwrap(), Scalar::one());
            }
        }

        #[test]
        fn subtraction_and_division_agree_with_inverses(a in arb_scalar(), b in arb_scalar()) {
            prop_assert_eq!(&a - &b, &a + &(-&b));
            if !b.is_zero() {
                prop_assert_eq!(a.div(&b).unwrap(), &a * &b.inv().unwrap());
            }
        }

        #[test]
        fn canonicalisation_is_idempotent(a in arb_scalar()) {
            let rebuilt = Scalar::from_parts(
                a.numerator().clone(),
                a.denominator().clone(),
            ).unwrap();
            prop_assert_eq!(&rebuilt, &a);
            prop_assert_eq!(rebuilt.to_string(), a.to_string());
        }

        #[test]
        fn display_parse_roundtrip(a in arb_scalar()) {
            let text = a.to_string();
            prop_assert_eq!(text.parse::<Scalar>().unwrap(), a);
        }
    }
}
