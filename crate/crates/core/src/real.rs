//! Real scalars with forward-mode derivatives.
//!
//! Geometry routines are generic over [`Real`]. Evaluating them at [`Dual`] numbers seeded with
//! the coordinate directions yields exact partial derivatives; nesting duals gives higher orders.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    /// Value part with all derivative parts dropped.
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }
    fn recip(self) -> Self {
        Self::one() / self
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// Value plus the N first-order partials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub re: T,
    pub eps: [T; N],
}

impl<T: Real, const N: usize> Dual<T, N> {
    pub fn constant(re: T) -> Self {
        Dual { re, eps: [T::zero(); N] }
    }

    /// Independent variable number `k` at value `re`.
    pub fn var(re: T, k: usize) -> Self {
        let mut eps = [T::zero(); N];
        eps[k] = T::one();
        Dual { re, eps }
    }

    /// Chain rule with outer value `f` and outer derivative `df` at `self.re`.
    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = *e * df;
        }
        Dual { re: f, eps }
    }
}

/// Seeds each coordinate as an independent variable.
pub fn seed<T: Real, const D: usize>(x: &[T; D]) -> [Dual<T, D>; D] {
    std::array::from_fn(|k| Dual::var(x[k], k))
}

impl<T: Real, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: std::array::from_fn(|i| self.eps[i] + o.eps[i]) }
    }
}

impl<T: Real, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: std::array::from_fn(|i| self.eps[i] - o.eps[i]) }
    }
}

impl<T: Real, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: std::array::from_fn(|i| self.re * o.eps[i] + self.eps[i] * o.re) }
    }
}

impl<T: Real, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        let q = self.re * inv;
        Dual { re: q, eps: std::array::from_fn(|i| (self.eps[i] - q * o.eps[i]) * inv) }
    }
}

impl<T: Real, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: std::array::from_fn(|i| -self.eps[i]) }
    }
}

impl<T: Real, const N: usize> AddAssign for Dual<T, N> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real, const N: usize> SubAssign for Dual<T, N> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real, const N: usize> MulAssign for Dual<T, N> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real, const N: usize> Real for Dual<T, N> {
    fn cst(v: f64) -> Self {
        Dual::constant(T::cst(v))
    }
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, T::one() + t * t)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, (s + s).recip())
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let p = self.re.powi(n - 1);
        self.chain(p * self.re, p.scale(n as f64))
    }
    fn scale(self, s: f64) -> Self {
        Dual { re: self.re.scale(s), eps: std::array::from_fn(|i| self.eps[i].scale(s)) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D1 = Dual<f64, 1>;
    type D2 = Dual<D1, 1>;

    #[test]
    fn first_derivatives_match_calculus() {
        let x = D1::var(0.7, 0);
        let cases: [(D1, f64, f64); 6] = [
            (x.sin(), 0.7f64.sin(), 0.7f64.cos()),
            (x.exp(), 0.7f64.exp(), 0.7f64.exp()),
            (x.ln(), 0.7f64.ln(), 1.0 / 0.7),
            (x.sqrt(), 0.7f64.sqrt(), 0.5 / 0.7f64.sqrt()),
            (x.powi(3), 0.343, 3.0 * 0.49),
            (x.tan(), 0.7f64.tan(), 1.0 / 0.7f64.cos().powi(2)),
        ];
        for (d, v, dv) in cases {
            assert!((d.re - v).abs() < 1e-14);
            assert!((d.eps[0] - dv).abs() < 1e-13);
        }
    }

    #[test]
    fn nested_duals_give_second_derivative() {
        // f(x) = x^2 sin x, f'' = 2 sin x + 4x cos x - x^2 sin x
        let x0 = 1.3f64;
        let x = D2::var(D1::var(x0, 0), 0);
        let f = x * x * x.sin();
        let f2 = f.eps[0].eps[0];
        let exact = 2.0 * x0.sin() + 4.0 * x0 * x0.cos() - x0 * x0 * x0.sin();
        assert!((f2 - exact).abs() < 1e-12);
    }

    #[test]
    fn quotient_rule() {
        let x = D1::var(2.0, 0);
        let f = D1::cst(1.0) / (x * x);
        assert!((f.eps[0] + 0.25).abs() < 1e-15);
        assert_eq!(D1::var(2.0, 0).powi(-2).eps[0], -0.25);
    }
}
