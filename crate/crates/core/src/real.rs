//! Scalar abstraction shared by the iteration maps and the symbolic engine.
//!
//! Band certification and orbit work run in `f64`. Itinerary refinement of
//! depth `n` multiplies the conditioning by the expansion of every branch it
//! passes through, which for the third-order map reaches `1e14` by period six,
//! so the certified constructions run in double-double ([`Extended`]).

use std::cmp::Ordering;
use std::fmt::{self, Debug};
use std::ops::{Add, Div, Mul, Neg, Sub};

use twofloat::TwoFloat;

pub trait Real:
    Copy
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;

    /// Nearest `f64`.
    fn to_f64_lossy(self) -> f64;

    fn abs(self) -> Self;

    fn is_finite(self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn nan() -> Self {
        Self::from_f64(f64::NAN)
    }

    /// Midpoint of `a` and `b` computed without overflow.
    fn midpoint(a: Self, b: Self) -> Self {
        a + (b - a) * Self::from_f64(0.5)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }

    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }

    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// Double-double scalar (about 106 significand bits).
///
/// Addition and multiplication are `twofloat`'s error-free algorithms.
/// Division is a three-term long division: `twofloat` 0.8 computes the
/// reciprocal residual without a fused multiply-add, which rounds it to zero
/// and leaves the quotient only `f64`-accurate.
#[derive(Clone, Copy, PartialEq)]
pub struct Extended(TwoFloat);

impl Extended {
    pub fn hi(&self) -> f64 {
        self.0.hi()
    }

    pub fn lo(&self) -> f64 {
        self.0.lo()
    }

    /// Low-order word, i.e. `x - x.to_f64_lossy()` rounded to `f64`.
    pub fn low_word(&self) -> f64 {
        if self.is_finite() {
            self.0.lo()
        } else {
            0.0
        }
    }
}

impl From<f64> for Extended {
    fn from(x: f64) -> Self {
        Extended(TwoFloat::from(x))
    }
}

impl Debug for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Extended({:e} + {:e})", self.0.hi(), self.0.lo())
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.0.hi().partial_cmp(&other.0.hi())? {
            Ordering::Equal => self.0.lo().partial_cmp(&other.0.lo()),
            ord => Some(ord),
        }
    }
}

impl Add for Extended {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Extended(self.0 + rhs.0)
    }
}

impl Sub for Extended {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Extended(self.0 - rhs.0)
    }
}

impl Mul for Extended {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Extended(self.0 * rhs.0)
    }
}

impl Div for Extended {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let d = rhs.0.hi();
        let q1 = self.0.hi() / d;
        if !q1.is_finite() || q1 == 0.0 {
            return Extended::from(q1);
        }
        let r1 = self.0 - rhs.0 * q1;
        let q2 = r1.hi() / d;
        let r2 = r1 - rhs.0 * q2;
        let q3 = r2.hi() / d;
        Extended(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl Neg for Extended {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Extended(-self.0)
    }
}

impl Real for Extended {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Extended::from(x)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        let hi = self.0.hi();
        if hi.is_finite() {
            hi + self.0.lo()
        } else {
            hi
        }
    }

    #[inline]
    fn abs(self) -> Self {
        if self.0.hi() < 0.0 {
            -self
        } else {
            self
        }
    }

    #[inline]
    fn is_finite(self) -> bool {
        self.0.hi().is_finite() && self.0.lo().is_finite()
    }
}
