//! Scalar types that model code can be written against.
//!
//! [`DoubleDouble`] carries roughly 32 significant digits and is used where
//! residuals must be resolved below `f64` rounding; [`Dual`] adds one forward
//! derivative direction on top of any scalar.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by plain numbers, extended precision numbers, dual
/// numbers and expression builders.
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const HALF_PI: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::FRAC_PI_2,
    lo: 6.123_233_995_736_766e-17,
};

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };

    pub fn new(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn abs_hi(self) -> f64 {
        self.hi.abs()
    }

    /// Series for `sin r`, `cos r` with `|r| <= pi/4`.
    fn sin_cos_reduced(r: Self) -> (Self, Self) {
        let r2 = r * r;
        let mut term = r;
        let mut sin = r;
        let mut k = 1.0;
        while term.abs_hi() > 1e-36 && k < 60.0 {
            term = -(term * r2) / Self::new((2.0 * k) * (2.0 * k + 1.0));
            sin = sin + term;
            k += 1.0;
        }
        let mut term = Self::new(1.0);
        let mut cos = term;
        let mut k = 1.0;
        while term.abs_hi() > 1e-36 && k < 60.0 {
            term = -(term * r2) / Self::new((2.0 * k - 1.0) * (2.0 * k));
            cos = cos + term;
            k += 1.0;
        }
        (sin, cos)
    }

    pub fn sin_cos(self) -> (Self, Self) {
        let q = (self.to_f64() / HALF_PI.hi).round();
        let r = self - HALF_PI * Self::new(q);
        let (s, c) = Self::sin_cos_reduced(r);
        match (q as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self::new(v)
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * Self::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Self::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::new(q3)
    }
}

impl Scalar for DoubleDouble {
    fn constant(v: f64) -> Self {
        Self::new(v)
    }
    fn sin(&self) -> Self {
        self.sin_cos().0
    }
    fn cos(&self) -> Self {
        self.sin_cos().1
    }
}

/// `value + deriv * eps` with `eps^2 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual<T> {
    pub value: T,
    pub deriv: T,
}

impl<T: Scalar> Dual<T> {
    pub fn constant_of(value: T) -> Self {
        Self {
            value,
            deriv: T::constant(0.0),
        }
    }

    pub fn seed(value: T) -> Self {
        Self {
            value,
            deriv: T::constant(1.0),
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            value: self.value + o.value,
            deriv: self.deriv + o.deriv,
        }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            value: self.value - o.value,
            deriv: self.deriv - o.deriv,
        }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            deriv: self.deriv * o.value.clone() + self.value.clone() * o.deriv,
            value: self.value * o.value,
        }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let value = self.value.clone() / o.value.clone();
        let deriv = (self.deriv - value.clone() * o.deriv) / o.value;
        Self { value, deriv }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            value: -self.value,
            deriv: -self.deriv,
        }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(v: f64) -> Self {
        Self::constant_of(T::constant(v))
    }
    fn sin(&self) -> Self {
        Self {
            value: self.value.sin(),
            deriv: self.value.cos() * self.deriv.clone(),
        }
    }
    fn cos(&self) -> Self {
        Self {
            value: self.value.cos(),
            deriv: -(self.value.sin() * self.deriv.clone()),
        }
    }
}
