use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numeric type an expression can be evaluated over.
pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Primal value, used for domain checks.
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, k: i32) -> Self;
    fn powf(&self, c: f64) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
    fn powf(&self, c: f64) -> Self {
        f64::powf(*self, c)
    }
}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
///
/// Nesting (`Dual<Dual<f64>>`) carries mixed second partials in `eps.eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    /// A variable seeded with unit tangent.
    pub fn variable(re: T) -> Self {
        Self {
            re,
            eps: T::from_f64(1.0),
        }
    }

    fn chain(&self, re: T, slope: T) -> Self {
        Self {
            re,
            eps: self.eps.clone() * slope,
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let eps = self.re.clone() * rhs.eps + self.eps * rhs.re.clone();
        Self::new(self.re * rhs.re, eps)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re.clone();
        let eps = (self.eps - q.clone() * rhs.eps) / rhs.re;
        Self::new(q, eps)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Self::new(T::from_f64(v), T::from_f64(0.0))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn sin(&self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tanh(&self) -> Self {
        let t = self.re.tanh();
        let slope = T::from_f64(1.0) - t.clone() * t.clone();
        self.chain(t, slope)
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        self.chain(e.clone(), e)
    }
    fn ln(&self) -> Self {
        Self::new(self.re.ln(), self.eps.clone() / self.re.clone())
    }
    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        let eps = self.eps.clone() / (T::from_f64(2.0) * s.clone());
        Self::new(s, eps)
    }
    fn powi(&self, k: i32) -> Self {
        if k == 0 {
            return Self::from_f64(1.0);
        }
        let slope = T::from_f64(k as f64) * self.re.powi(k - 1);
        self.chain(self.re.powi(k), slope)
    }
    fn powf(&self, c: f64) -> Self {
        let slope = T::from_f64(c) * self.re.powf(c - 1.0);
        self.chain(self.re.powf(c), slope)
    }
}
