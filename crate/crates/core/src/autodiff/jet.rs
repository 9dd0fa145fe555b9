//! Truncated Taylor jets over the network input.
//!
//! A [`Jet2`] carries a value, its gradient and the upper triangle of its
//! Hessian with respect to the `n` input coordinates. Every entry is a
//! [`Scalar`], so with `S = Var` each derivative is itself a tape node and can
//! be differentiated with respect to the parameters by ordinary reverse mode.

use super::scalar::Scalar;
use super::tape::Op;
use crate::error::{Error, Result};

/// Position of the unordered pair `(j, k)` in row-major upper-triangle storage.
pub fn pair_index(j: usize, k: usize, n: usize) -> usize {
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    debug_assert!(k < n);
    // rows 0..j hold n, n-1, ..., n-j+1 entries
    j * n - j * j.saturating_sub(1) / 2 + (k - j)
}

/// Number of unordered pairs over `n` coordinates.
pub fn pair_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Operations shared by every jet order, enough to push a jet through an MLP.
pub trait JetOps<S: Scalar>: Clone + Sized {
    fn constant(c: S, n: usize) -> Self;
    fn variable(v: S, j: usize, n: usize) -> Self;
    fn value(&self) -> &S;
    fn add(&self, o: &Self) -> Self;
    fn mul_scalar(&self, w: &S) -> Self;
    fn add_scalar(&self, b: &S) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, k: f64) -> Self;
    fn neg(&self) -> Self {
        self.scale(-1.0)
    }
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    fn square(&self) -> Self {
        self.mul(self)
    }
    fn tanh(&self) -> Self;
    fn sin(&self) -> Self;
    fn exp(&self) -> Self;
    fn recip(&self) -> Self;
}

#[derive(Clone, Debug)]
pub struct Jet2<S> {
    pub value: S,
    pub grad: Vec<S>,
    /// Upper triangle, see [`pair_index`].
    pub hess: Vec<S>,
}

impl<S: Scalar> Jet2<S> {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn hess_at(&self, j: usize, k: usize) -> &S {
        &self.hess[pair_index(j, k, self.dim())]
    }

    /// Applies a scalar function with derivatives `d1 = f'(u)`, `d2 = f''(u)`.
    pub fn unary(&self, f: S, d1: S, d2: S) -> Self {
        let n = self.dim();
        let grad: Vec<S> = self.grad.iter().map(|g| d1.clone() * g.clone()).collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        for j in 0..n {
            for k in j..n {
                let first = self.grad[j].clone() * self.grad[k].clone();
                hess.push(d2.clone() * first + d1.clone() * self.hess_at(j, k).clone());
            }
        }
        Jet2 { value: f, grad, hess }
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Jet2<T> {
        Jet2 {
            value: f(&self.value),
            grad: self.grad.iter().map(&f).collect(),
            hess: self.hess.iter().map(&f).collect(),
        }
    }
}

impl<S: Scalar> JetOps<S> for Jet2<S> {
    fn constant(c: S, n: usize) -> Self {
        let z = c.lift(0.0);
        Jet2 {
            grad: vec![z.clone(); n],
            hess: vec![z; pair_count(n)],
            value: c,
        }
    }

    fn variable(v: S, j: usize, n: usize) -> Self {
        let mut jet = Self::constant(v, n);
        jet.grad[j] = jet.value.lift(1.0);
        jet
    }

    fn value(&self) -> &S {
        &self.value
    }

    fn add(&self, o: &Self) -> Self {
        Jet2 {
            value: self.value.clone() + o.value.clone(),
            grad: zip_with(&self.grad, &o.grad, |a, b| a + b),
            hess: zip_with(&self.hess, &o.hess, |a, b| a + b),
        }
    }

    fn mul_scalar(&self, w: &S) -> Self {
        self.map_scalar(|x| x.clone() * w.clone())
    }

    fn add_scalar(&self, b: &S) -> Self {
        let mut out = self.clone();
        out.value = out.value + b.clone();
        out
    }

    fn mul(&self, o: &Self) -> Self {
        let n = self.dim();
        let (u, v) = (&self.value, &o.value);
        let grad = (0..n)
            .map(|j| self.grad[j].clone() * v.clone() + u.clone() * o.grad[j].clone())
            .collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        for j in 0..n {
            for k in j..n {
                let p = pair_index(j, k, n);
                hess.push(
                    self.hess[p].clone() * v.clone()
                        + self.grad[j].clone() * o.grad[k].clone()
                        + self.grad[k].clone() * o.grad[j].clone()
                        + u.clone() * o.hess[p].clone(),
                );
            }
        }
        Jet2 {
            value: u.clone() * v.clone(),
            grad,
            hess,
        }
    }

    fn scale(&self, k: f64) -> Self {
        self.map_scalar(|x| x.clone() * k)
    }

    fn square(&self) -> Self {
        let u = &self.value;
        self.unary(u.square(), u.clone() * 2.0, u.lift(2.0))
    }

    fn tanh(&self) -> Self {
        let t = self.value.tanh();
        let d1 = (t.square() * -1.0) + 1.0;
        let d2 = t.clone() * d1.clone() * -2.0;
        self.unary(t, d1, d2)
    }

    fn sin(&self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.unary(s.clone(), c, -s)
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.unary(e.clone(), e.clone(), e)
    }

    fn recip(&self) -> Self {
        let r = self.value.recip();
        let r2 = r.square();
        let d2 = r2.clone() * r.clone() * 2.0;
        self.unary(r, -r2, d2)
    }
}

fn zip_with<S: Scalar>(a: &[S], b: &[S], f: impl Fn(S, S) -> S) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| f(x.clone(), y.clone())).collect()
}

fn arity(op: Op, got: usize) -> Result<()> {
    let want = match op {
        Op::Add | Op::Sub | Op::Mul => 2,
        Op::Sum | Op::Mean => return if got > 0 { Ok(()) } else { Err(Error::Dimension { what: "jet operands", expected: 1, got }) },
        _ => 1,
    };
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: "jet operands",
            expected: want,
            got,
        })
    }
}

fn compose_with<S: Scalar, J: JetOps<S>>(op: Op, inputs: &[J]) -> Result<J> {
    if matches!(op, Op::Constant | Op::Parameter | Op::Input) {
        return Err(Error::UnsupportedJetOp(op.name()));
    }
    arity(op, inputs.len())?;
    let a = &inputs[0];
    Ok(match op {
        Op::Add => a.add(&inputs[1]),
        Op::Sub => a.sub(&inputs[1]),
        Op::Mul => a.mul(&inputs[1]),
        Op::Scale(k) => a.scale(k),
        Op::Neg => a.neg(),
        Op::Square => a.square(),
        Op::Tanh => a.tanh(),
        Op::Sin => a.sin(),
        Op::Exp => a.exp(),
        Op::Reciprocal => a.recip(),
        Op::Sum | Op::Mean => {
            let mut acc = a.clone();
            for j in &inputs[1..] {
                acc = acc.add(j);
            }
            if op == Op::Mean {
                acc = acc.scale(1.0 / inputs.len() as f64);
            }
            acc
        }
        Op::Constant | Op::Parameter | Op::Input => unreachable!(),
    })
}

/// Applies a tape primitive to second-order jets using exact first- and
/// second-order chain rules.
pub fn jet_compose<S: Scalar>(op: Op, inputs: &[Jet2<S>]) -> Result<Jet2<S>> {
    compose_with(op, inputs)
}

/// Third-order jet: [`Jet2`] plus the symmetric third-derivative tensor,
/// stored once per sorted index triple.
#[derive(Clone, Debug)]
pub struct Jet3<S> {
    pub value: S,
    pub grad: Vec<S>,
    pub hess: Vec<S>,
    pub third: Vec<S>,
}

/// Position of the sorted triple in lexicographic storage over `n` coordinates.
pub fn triple_index(i: usize, j: usize, k: usize, n: usize) -> usize {
    let mut t = [i, j, k];
    t.sort_unstable();
    let mut idx = 0;
    for a in 0..n {
        for b in a..n {
            for c in b..n {
                if [a, b, c] == t {
                    return idx;
                }
                idx += 1;
            }
        }
    }
    panic!("triple ({i},{j},{k}) out of range for n={n}")
}

pub fn triple_count(n: usize) -> usize {
    n * (n + 1) * (n + 2) / 6
}

impl<S: Scalar> Jet3<S> {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn hess_at(&self, j: usize, k: usize) -> &S {
        &self.hess[pair_index(j, k, self.dim())]
    }

    pub fn third_at(&self, i: usize, j: usize, k: usize) -> &S {
        &self.third[triple_index(i, j, k, self.dim())]
    }

    /// Drops the third-order part.
    pub fn truncate(&self) -> Jet2<S> {
        Jet2 {
            value: self.value.clone(),
            grad: self.grad.clone(),
            hess: self.hess.clone(),
        }
    }

    pub fn unary(&self, f: S, d1: S, d2: S, d3: S) -> Self {
        let n = self.dim();
        let low = self.truncate().unary(f, d1.clone(), d2.clone());
        let g = &self.grad;
        let mut third = Vec::with_capacity(self.third.len());
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let cubic = g[i].clone() * g[j].clone() * g[k].clone();
                    let mixed = self.hess_at(i, j).clone() * g[k].clone()
                        + self.hess_at(i, k).clone() * g[j].clone()
                        + self.hess_at(j, k).clone() * g[i].clone();
                    third.push(d3.clone() * cubic + d2.clone() * mixed + d1.clone() * self.third_at(i, j, k).clone());
                }
            }
        }
        Jet3 {
            value: low.value,
            grad: low.grad,
            hess: low.hess,
            third,
        }
    }

    fn map_scalar(&self, f: impl Fn(&S) -> S) -> Self {
        Jet3 {
            value: f(&self.value),
            grad: self.grad.iter().map(&f).collect(),
            hess: self.hess.iter().map(&f).collect(),
            third: self.third.iter().map(&f).collect(),
        }
    }
}

impl<S: Scalar> JetOps<S> for Jet3<S> {
    fn constant(c: S, n: usize) -> Self {
        let z = c.lift(0.0);
        Jet3 {
            grad: vec![z.clone(); n],
            hess: vec![z.clone(); pair_count(n)],
            third: vec![z; triple_count(n)],
            value: c,
        }
    }

    fn variable(v: S, j: usize, n: usize) -> Self {
        let mut jet = Self::constant(v, n);
        jet.grad[j] = jet.value.lift(1.0);
        jet
    }

    fn value(&self) -> &S {
        &self.value
    }

    fn add(&self, o: &Self) -> Self {
        Jet3 {
            value: self.value.clone() + o.value.clone(),
            grad: zip_with(&self.grad, &o.grad, |a, b| a + b),
            hess: zip_with(&self.hess, &o.hess, |a, b| a + b),
            third: zip_with(&self.third, &o.third, |a, b| a + b),
        }
    }

    fn mul_scalar(&self, w: &S) -> Self {
        self.map_scalar(|x| x.clone() * w.clone())
    }

    fn add_scalar(&self, b: &S) -> Self {
        let mut out = self.clone();
        out.value = out.value + b.clone();
        out
    }

    fn mul(&self, o: &Self) -> Self {
        let n = self.dim();
        let low = self.truncate().mul(&o.truncate());
        let (u, v) = (&self.value, &o.value);
        let mut third = Vec::with_capacity(self.third.len());
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let t = self.third_at(i, j, k).clone() * v.clone()
                        + self.hess_at(i, j).clone() * o.grad[k].clone()
                        + self.hess_at(i, k).clone() * o.grad[j].clone()
                        + self.hess_at(j, k).clone() * o.grad[i].clone()
                        + self.grad[i].clone() * o.hess_at(j, k).clone()
                        + self.grad[j].clone() * o.hess_at(i, k).clone()
                        + self.grad[k].clone() * o.hess_at(i, j).clone()
                        + u.clone() * o.third_at(i, j, k).clone();
                    third.push(t);
                }
            }
        }
        Jet3 {
            value: low.value,
            grad: low.grad,
            hess: low.hess,
            third,
        }
    }

    fn scale(&self, k: f64) -> Self {
        self.map_scalar(|x| x.clone() * k)
    }

    fn tanh(&self) -> Self {
        let t = self.value.tanh();
        let s = (t.square() * -1.0) + 1.0;
        let d2 = t.clone() * s.clone() * -2.0;
        let d3 = s.clone() * (s.clone() - t.square() * 2.0) * -2.0;
        self.unary(t, s, d2, d3)
    }

    fn sin(&self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.unary(s.clone(), c.clone(), -s, -c)
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.unary(e.clone(), e.clone(), e.clone(), e)
    }

    fn recip(&self) -> Self {
        let r = self.value.recip();
        let r2 = r.square();
        let r3 = r2.clone() * r.clone();
        let r4 = r2.square();
        self.unary(r, -r2, r3 * 2.0, r4 * -6.0)
    }
}

/// Third-order counterpart of [`jet_compose`]. Only available when the crate
/// is built with the `jet3` feature.
pub fn jet3_compose<S: Scalar>(op: Op, inputs: &[Jet3<S>]) -> Result<Jet3<S>> {
    if !cfg!(feature = "jet3") {
        return Err(Error::Capability("third-order jets (enable the `jet3` feature)".into()));
    }
    compose_with(op, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::Tape;

    #[test]
    fn pair_layout_for_two_inputs() {
        assert_eq!(pair_index(0, 0, 2), 0);
        assert_eq!(pair_index(0, 1, 2), 1);
        assert_eq!(pair_index(1, 0, 2), 1);
        assert_eq!(pair_index(1, 1, 2), 2);
        assert_eq!(pair_count(2), 3);
        let j = Jet2::variable(0.0_f64, 0, 2);
        assert_eq!((j.grad.len(), j.hess.len()), (2, 3));
    }

    #[test]
    fn pair_layout_is_a_bijection() {
        for n in 1..6 {
            let mut seen = vec![false; pair_count(n)];
            for j in 0..n {
                for k in j..n {
                    let p = pair_index(j, k, n);
                    assert!(!seen[p]);
                    seen[p] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn sin_at_zero() {
        let x = Jet2::variable(0.0_f64, 0, 2);
        let y = jet_compose(Op::Sin, &[x]).unwrap();
        assert_eq!(y.value, 0.0);
        assert_eq!(y.grad, vec![1.0, 0.0]);
        assert_eq!(*y.hess_at(0, 0), 0.0);
    }

    #[test]
    fn tanh_of_affine_at_zero_on_tape() {
        let tape = Tape::new();
        let w = tape.parameter(1.0, 0);
        let b = tape.parameter(0.0, 1);
        let x = Jet2::variable(tape.input(0.0), 0, 2);
        let z = x.mul_scalar(&w).add_scalar(&b);
        let y = jet_compose(Op::Tanh, &[z]).unwrap();
        assert_eq!(y.value.value(), 0.0);
        assert_eq!(y.grad[0].value(), 1.0);
        assert_eq!(y.hess_at(0, 0).value(), 0.0);
        // ∂(∂y/∂x)/∂w = 1 at the origin
        let g = y.grad[0].backward().unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
    }

    #[test]
    fn leaves_have_no_jet_rule() {
        let x = Jet2::variable(1.0_f64, 0, 1);
        assert!(matches!(jet_compose(Op::Constant, &[x]), Err(Error::UnsupportedJetOp("constant"))));
    }

    #[test]
    fn third_order_rules() {
        let x = Jet3::variable(0.0_f64, 0, 1);
        assert_eq!(*x.sin().third_at(0, 0, 0), -1.0);
        let x = Jet3::variable(1.7_f64, 0, 1);
        let cube = x.mul(&x).mul(&x);
        assert!((cube.third_at(0, 0, 0) - 6.0).abs() < 1e-14);
        assert!((cube.hess_at(0, 0) - 6.0 * 1.7).abs() < 1e-13);
    }

    #[test]
    fn jet3_compose_respects_capability() {
        let x = Jet3::variable(0.0_f64, 0, 1);
        let r = jet3_compose(Op::Sin, &[x]);
        if cfg!(feature = "jet3") {
            assert_eq!(*r.unwrap().third_at(0, 0, 0), -1.0);
        } else {
            assert!(matches!(r, Err(Error::Capability(_))));
        }
    }

    #[test]
    fn tanh_third_derivative_matches_finite_difference() {
        let f2 = |x: f64| *Jet2::variable(x, 0, 1).scale(1.3).tanh().hess_at(0, 0);
        let x0 = 0.37;
        let h = 1e-5;
        let fd = (f2(x0 + h) - f2(x0 - h)) / (2.0 * h);
        let exact = *Jet3::variable(x0, 0, 1).scale(1.3).tanh().third_at(0, 0, 0);
        assert!(((fd - exact) / exact).abs() < 1e-6);
    }
}
