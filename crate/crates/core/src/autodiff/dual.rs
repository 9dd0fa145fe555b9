//! Forward-mode dual numbers.

use std::ops::{Add, Mul, Neg, Sub};

use super::scalar::Scalar;

/// `re + eps·ε` with ε² = 0, over any [`Scalar`]. Nesting `Dual<Var>` gives a
/// directional derivative whose entries are still tape nodes.
#[derive(Clone, Debug)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Self { re, eps }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let eps = self.re.clone() * o.eps + self.eps * o.re.clone();
        Dual::new(self.re * o.re, eps)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<S: Scalar> Add<f64> for Dual<S> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        Dual::new(self.re + c, self.eps)
    }
}

impl<S: Scalar> Sub<f64> for Dual<S> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        Dual::new(self.re - c, self.eps)
    }
}

impl<S: Scalar> Mul<f64> for Dual<S> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Dual::new(self.re * c, self.eps * c)
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn lift(&self, c: f64) -> Self {
        Dual::new(self.re.lift(c), self.re.lift(0.0))
    }
    fn square(&self) -> Self {
        let eps = self.re.clone() * self.eps.clone() * 2.0;
        Dual::new(self.re.square(), eps)
    }
    fn tanh(&self) -> Self {
        let t = self.re.tanh();
        let d = (t.square() * -1.0) + 1.0;
        Dual::new(t, d * self.eps.clone())
    }
    fn sin(&self) -> Self {
        Dual::new(self.re.sin(), self.re.cos() * self.eps.clone())
    }
    fn cos(&self) -> Self {
        Dual::new(self.re.cos(), -(self.re.sin() * self.eps.clone()))
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        Dual::new(e.clone(), e * self.eps.clone())
    }
    fn recip(&self) -> Self {
        let r = self.re.recip();
        let eps = -(r.square() * self.eps.clone());
        Dual::new(r, eps)
    }
}

/// Value plus a fixed-width gradient, all on the stack. Used where a handful
/// of partials are needed per evaluation and a tape would be overhead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiDual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> MultiDual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// Seeds coordinate `k` of the gradient.
    pub fn variable(v: f64, k: usize) -> Self {
        let mut d = [0.0; N];
        d[k] = 1.0;
        Self { v, d }
    }

    fn chain(&self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x *= dv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Add for MultiDual<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for k in 0..N {
            self.d[k] += o.d[k];
        }
        self
    }
}

impl<const N: usize> Sub for MultiDual<N> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for k in 0..N {
            self.d[k] -= o.d[k];
        }
        self
    }
}

impl<const N: usize> Mul for MultiDual<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        #[allow(clippy::suspicious_arithmetic_impl)]
        let d = std::array::from_fn(|k| self.d[k] * o.v + self.v * o.d[k]);
        Self { v: self.v * o.v, d }
    }
}

impl<const N: usize> Neg for MultiDual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl<const N: usize> Add<f64> for MultiDual<N> {
    type Output = Self;
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl<const N: usize> Sub<f64> for MultiDual<N> {
    type Output = Self;
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl<const N: usize> Mul<f64> for MultiDual<N> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.chain(self.v * c, c)
    }
}

impl<const N: usize> Scalar for MultiDual<N> {
    fn value(&self) -> f64 {
        self.v
    }
    fn lift(&self, c: f64) -> Self {
        Self::constant(c)
    }
    fn square(&self) -> Self {
        self.chain(self.v * self.v, 2.0 * self.v)
    }
    fn tanh(&self) -> Self {
        let t = super::scalar::tanh(self.v);
        self.chain(t, 1.0 - t * t)
    }
    fn sin(&self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn recip(&self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_tanh_derivative_at_zero() {
        let x = Dual::new(0.0_f64, 1.0);
        let y = x.tanh();
        assert_eq!(y.re, 0.0);
        assert_eq!(y.eps, 1.0);
    }

    #[test]
    fn multidual_matches_dual() {
        let f = |x: MultiDual<2>, y: MultiDual<2>| (x * y).sin() + x.exp().recip() * 3.0 - y.square();
        let r = f(MultiDual::variable(0.4, 0), MultiDual::variable(-1.3, 1));
        let fd = |x: Dual<f64>, y: Dual<f64>| (x.clone() * y.clone()).sin() + x.exp().recip() * 3.0 - y.square();
        let dx = fd(Dual::new(0.4, 1.0), Dual::new(-1.3, 0.0));
        let dy = fd(Dual::new(0.4, 0.0), Dual::new(-1.3, 1.0));
        assert_eq!(r.v, dx.re);
        assert!((r.d[0] - dx.eps).abs() < 1e-15);
        assert!((r.d[1] - dy.eps).abs() < 1e-15);
    }
}
