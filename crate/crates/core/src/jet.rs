//! Second-order forward-mode differentiation in two variables.
//!
//! A [`Jet`] carries a value together with its gradient and Hessian with
//! respect to the chart parameters `(u, v)`. Charts written against the
//! [`Real`] trait get exact first and second derivatives for free, and the
//! Möbius maps of the conformal kernel compose with them transparently.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar operations shared by `f64` and [`Jet`].
pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

/// Value, gradient `d = [∂u, ∂v]` and Hessian `h = [∂uu, ∂uv, ∂vv]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; 2],
    pub h: [f64; 3],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet { v, d: [0.0; 2], h: [0.0; 3] }
    }

    /// The independent variable with index `i` (0 for `u`, 1 for `v`).
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; 2];
        d[i] = 1.0;
        Jet { v, d, h: [0.0; 3] }
    }

    /// Both chart variables at `(u, v)`.
    pub fn vars(u: f64, v: f64) -> (Jet, Jet) {
        (Jet::var(u, 0), Jet::var(v, 1))
    }

    /// Apply a scalar function given its value and first two derivatives at `self.v`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let d = self.d;
        Jet {
            v: f0,
            d: [f1 * d[0], f1 * d[1]],
            h: [
                f2 * d[0] * d[0] + f1 * self.h[0],
                f2 * d[0] * d[1] + f1 * self.h[1],
                f2 * d[1] * d[1] + f1 * self.h[2],
            ],
        }
    }

    /// Second derivative `∂_i ∂_j`.
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[i + j]
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powi(self, n: i32) -> Self {
        let nf = n as f64;
        self.chain(self.v.powi(n), nf * self.v.powi(n - 1), nf * (nf - 1.0) * self.v.powi(n - 2))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d: [-self.d[0], -self.d[1]], h: [-self.h[0], -self.h[1], -self.h[2]] }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self, o);
        Jet {
            v: a.v * b.v,
            d: [a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1]],
            h: [
                a.h[0] * b.v + 2.0 * a.d[0] * b.d[0] + a.v * b.h[0],
                a.h[1] * b.v + a.d[0] * b.d[1] + a.d[1] * b.d[0] + a.v * b.h[1],
                a.h[2] * b.v + 2.0 * a.d[1] * b.d[1] + a.v * b.h[2],
            ],
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Real for Jet {
    fn cst(x: f64) -> Self {
        Jet::constant(x)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v))
    }
    fn scale(self, k: f64) -> Self {
        Jet { v: self.v * k, d: [self.d[0] * k, self.d[1] * k], h: [self.h[0] * k, self.h[1] * k, self.h[2] * k] }
    }
}

/// Euclidean inner product of two equally sized slices.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::cst(0.0), |acc, (&x, &y)| acc + x * y)
}
