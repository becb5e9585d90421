//! Forward-mode differentiation over a fixed number of local unknowns.
//!
//! Residual kernels are written once against [`Ad`]; instantiated with the
//! plain scalar they give residual values, with [`Jet`] they also give the
//! exact derivative with respect to every seeded coefficient.

use std::ops::{Add, Mul, Neg, Sub};

use crate::physics::Dual;
use crate::scalar::Real;

pub(crate) trait Ad<T: Real>:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn cst(v: T) -> Self;
    fn val(&self) -> T;
    fn scale(self, a: T) -> Self;
    /// Composes with a scalar function given its value and derivative at `val()`.
    fn chain(self, f: Dual<T>) -> Self;
}

impl<T: Real> Ad<T> for T {
    #[inline]
    fn cst(v: T) -> Self {
        v
    }
    #[inline]
    fn val(&self) -> T {
        *self
    }
    #[inline]
    fn scale(self, a: T) -> Self {
        self * a
    }
    #[inline]
    fn chain(self, f: Dual<T>) -> Self {
        f.v
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Jet<T, const N: usize> {
    pub v: T,
    pub d: [T; N],
}

impl<T: Real, const N: usize> Jet<T, N> {
    /// The `i`-th independent variable with value `v`.
    #[inline]
    pub fn var(v: T, i: usize) -> Self {
        let mut d = [T::zero(); N];
        d[i] = T::one();
        Self { v, d }
    }
}

impl<T: Real, const N: usize> Add for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for (a, b) in self.d.iter_mut().zip(o.d) {
            *a += b;
        }
        self
    }
}

impl<T: Real, const N: usize> Sub for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for (a, b) in self.d.iter_mut().zip(o.d) {
            *a -= b;
        }
        self
    }
}

impl<T: Real, const N: usize> Mul for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [T::zero(); N];
        for i in 0..N {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Self { v: self.v * o.v, d }
    }
}

impl<T: Real, const N: usize> Neg for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            d: self.d.map(|x| -x),
        }
    }
}

impl<T: Real, const N: usize> Ad<T> for Jet<T, N> {
    #[inline]
    fn cst(v: T) -> Self {
        Self { v, d: [T::zero(); N] }
    }
    #[inline]
    fn val(&self) -> T {
        self.v
    }
    #[inline]
    fn scale(self, a: T) -> Self {
        Self {
            v: self.v * a,
            d: self.d.map(|x| x * a),
        }
    }
    #[inline]
    fn chain(self, f: Dual<T>) -> Self {
        Self {
            v: f.v,
            d: self.d.map(|x| x * f.d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_chain_rules() {
        let x = Jet::<f64, 2>::var(3.0, 0);
        let y = Jet::<f64, 2>::var(5.0, 1);
        let f = x * y - x.scale(2.0) + Jet::cst(1.0);
        assert_eq!(f.v, 10.0);
        assert_eq!(f.d, [3.0, 3.0]);
        let g = (x * x).chain(Dual { v: 81.0, d: 18.0 });
        assert_eq!(g.d, [108.0, 0.0]);
        assert_eq!((-y).d, [0.0, -1.0]);
    }
}
