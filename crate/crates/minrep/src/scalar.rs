//! Exact scalar arithmetic: rationals, Gaussian rationals and the
//! combinatorial symbols (Pochhammer, double factorials) that every
//! coefficient sequence in the library is assembled from.
//!
//! All arithmetic is arbitrary precision; there is no floating point
//! anywhere in this crate. Gamma-function ratios are always expressed
//! through [`pochhammer`].

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Exact rational scalar, always stored in lowest terms with positive denominator.
pub type Rational = BigRational;

/// Build a rational from an integer pair.
pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Shorthand for an integer as a rational.
pub fn rint(n: i64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

/// Pochhammer symbol (a)_m = a (a+1) ... (a+m-1), with (a)_0 = 1.
pub fn pochhammer(a: &Rational, m: u32) -> Rational {
    let mut acc = Rational::one();
    let mut f = a.clone();
    for _ in 0..m {
        acc *= &f;
        f += Rational::one();
    }
    acc
}

/// Double factorial k!! with the conventions (-1)!! = 0!! = 1.
///
/// Rejects k < -1.
pub fn double_factorial(k: i64) -> Result<BigInt, ScalarError> {
    if k < -1 {
        return Err(ScalarError::DoubleFactorialRange(k));
    }
    let mut acc = BigInt::one();
    let mut j = k;
    while j > 1 {
        acc *= BigInt::from(j);
        j -= 2;
    }
    Ok(acc)
}

/// Factorial m! as a rational (convenient for coefficient formulas).
pub fn factorial(m: u32) -> Rational {
    let mut acc = BigInt::one();
    for j in 2..=m as i64 {
        acc *= BigInt::from(j);
    }
    BigRational::from_integer(acc)
}

/// Errors from scalar-level operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScalarError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("double factorial undefined for {0} < -1")]
    DoubleFactorialRange(i64),
    #[error("malformed rational literal: {0}")]
    ParseRational(String),
    #[error("malformed Gaussian rational literal: {0}")]
    ParseGaussian(String),
}

/// Element of Q(i): re + im*i with exact rational parts.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GaussianRational {
    pub re: Rational,
    pub im: Rational,
}

impl GaussianRational {
    pub fn new(re: Rational, im: Rational) -> Self {
        GaussianRational { re, im }
    }

    pub fn zero() -> Self {
        GaussianRational::new(Rational::zero(), Rational::zero())
    }

    pub fn one() -> Self {
        GaussianRational::new(Rational::one(), Rational::zero())
    }

    /// The imaginary unit.
    pub fn i() -> Self {
        GaussianRational::new(Rational::zero(), Rational::one())
    }

    pub fn from_rational(r: Rational) -> Self {
        GaussianRational::new(r, Rational::zero())
    }

    pub fn from_int(n: i64) -> Self {
        GaussianRational::from_rational(rint(n))
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    /// Complex conjugate.
    pub fn conj(&self) -> Self {
        GaussianRational::new(self.re.clone(), -self.im.clone())
    }

    /// |x|^2 = x * conj(x), a nonnegative rational.
    pub fn norm_sq(&self) -> Rational {
        &self.re * &self.re + &self.im * &self.im
    }

    /// Exact division; division by zero is an explicit error, never a panic.
    pub fn checked_div(&self, rhs: &Self) -> Result<Self, ScalarError> {
        if rhs.is_zero() {
            return Err(ScalarError::DivisionByZero);
        }
        let d = rhs.norm_sq();
        let num = self * &rhs.conj();
        Ok(GaussianRational::new(num.re / &d, num.im / &d))
    }

    /// Multiplicative inverse.
    pub fn inv(&self) -> Result<Self, ScalarError> {
        GaussianRational::one().checked_div(self)
    }

    pub fn scale(&self, r: &Rational) -> Self {
        GaussianRational::new(&self.re * r, &self.im * r)
    }

    /// Serialize as "re_num/re_den,im_num/im_den".
    pub fn to_text(&self) -> String {
        format!(
            "{}/{},{}/{}",
            self.re.numer(),
            self.re.denom(),
            self.im.numer(),
            self.im.denom()
        )
    }

    /// Parse the `to_text` format. Also accepts bare integers for either part.
    pub fn from_text(s: &str) -> Result<Self, ScalarError> {
        let (re, im) = s
            .split_once(',')
            .ok_or_else(|| ScalarError::ParseGaussian(s.to_string()))?;
        Ok(GaussianRational::new(parse_rational(re)?, parse_rational(im)?))
    }
}

/// Parse "num/den" (or a bare integer) into a rational.
pub fn parse_rational(s: &str) -> Result<Rational, ScalarError> {
    let s = s.trim();
    let bad = || ScalarError::ParseRational(s.to_string());
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => {
            let n: BigInt = s.parse().map_err(|_| bad())?;
            Ok(BigRational::from_integer(n))
        }
    }
}

/// Render a rational as "num/den".
pub fn rational_to_text(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

impl fmt::Display for GaussianRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            return write!(f, "{}", self.re);
        }
        if self.re.is_zero() {
            return write!(f, "{}*i", self.im);
        }
        if self.im.is_negative() {
            write!(f, "{}{}*i", self.re, self.im)
        } else {
            write!(f, "{}+{}*i", self.re, self.im)
        }
    }
}

impl fmt::Debug for GaussianRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, |$a:ident, $b:ident| $body:expr) => {
        impl<'a, 'b> $trait<&'b GaussianRational> for &'a GaussianRational {
            type Output = GaussianRational;
            fn $method(self, rhs: &'b GaussianRational) -> GaussianRational {
                let ($a, $b) = (self, rhs);
                $body
            }
        }
        impl $trait<GaussianRational> for GaussianRational {
            type Output = GaussianRational;
            fn $method(self, rhs: GaussianRational) -> GaussianRational {
                (&self).$method(&rhs)
            }
        }
        impl<'b> $trait<&'b GaussianRational> for GaussianRational {
            type Output = GaussianRational;
            fn $method(self, rhs: &'b GaussianRational) -> GaussianRational {
                (&self).$method(rhs)
            }
        }
    };
}

forward_binop!(Add, add, |a, b| GaussianRational::new(
    &a.re + &b.re,
    &a.im + &b.im
));
forward_binop!(Sub, sub, |a, b| GaussianRational::new(
    &a.re - &b.re,
    &a.im - &b.im
));
forward_binop!(Mul, mul, |a, b| GaussianRational::new(
    &a.re * &b.re - &a.im * &b.im,
    &a.re * &b.im + &a.im * &b.re
));

impl Div for GaussianRational {
    type Output = GaussianRational;
    fn div(self, rhs: GaussianRational) -> GaussianRational {
        self.checked_div(&rhs).expect("division by zero")
    }
}

impl Neg for GaussianRational {
    type Output = GaussianRational;
    fn neg(self) -> GaussianRational {
        GaussianRational::new(-self.re, -self.im)
    }
}

impl Neg for &GaussianRational {
    type Output = GaussianRational;
    fn neg(self) -> GaussianRational {
        GaussianRational::new(-self.re.clone(), -self.im.clone())
    }
}
