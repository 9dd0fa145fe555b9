//! First-order and quasi-Newton optimizers over flat parameter vectors.

use std::collections::VecDeque;

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        check_len("adam parameters", self.m.len(), params.len())?;
        check_len("adam gradient", self.m.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                what: "gradient",
                iteration: self.t as usize,
            });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let (mh, vh) = (*m / c1, *v / c2);
            *p -= lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Outcome of one L-BFGS iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsStep {
    pub f: f64,
    pub grad: Vec<f64>,
    pub step: f64,
    pub evals: usize,
    /// The line search found no strong-Wolfe point and a fallback was taken.
    pub fell_back: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lbfgs {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
    history: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    pub fallbacks: usize,
}

struct Probe {
    a: f64,
    f: f64,
    d: f64,
    g: Vec<f64>,
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Self {
            memory: memory.max(1),
            c1: 1e-4,
            c2: 0.9,
            max_evals: 20,
            history: VecDeque::new(),
            fallbacks: 0,
        }
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// `−H g` by the two-loop recursion.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alpha = Vec::with_capacity(self.history.len());
        for (s, y, rho) in self.history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
            alpha.push(a);
        }
        if let Some((s, y, _)) = self.history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|q| *q *= gamma);
        }
        for ((s, y, rho), a) in self.history.iter().zip(alpha.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(q, s)| *q += (a - b) * s);
        }
        q.iter_mut().for_each(|q| *q = -*q);
        q
    }

    /// Moves `x` along the quasi-Newton direction with a strong-Wolfe line
    /// search. `f0` and `g0` are the value and gradient at `x`; `fg` must be
    /// a fixed function for the whole call.
    pub fn step<F>(&mut self, x: &mut [f64], f0: f64, g0: &[f64], mut fg: F) -> Result<LbfgsStep>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        check_len("l-bfgs gradient", x.len(), g0.len())?;
        let gnorm = norm(g0);
        if gnorm == 0.0 {
            return Ok(LbfgsStep {
                f: f0,
                grad: g0.to_vec(),
                step: 0.0,
                evals: 0,
                fell_back: false,
            });
        }
        let mut d = self.direction(g0);
        let mut d0 = dot(&d, g0);
        if !(d0 < 0.0) {
            self.history.clear();
            d = g0.iter().map(|g| -g).collect();
            d0 = -gnorm * gnorm;
        }
        let a_init = if self.history.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };

        let x0 = x.to_vec();
        let mut evals = 0;
        let mut best: Option<Probe> = None;
        let mut probe = |a: f64, evals: &mut usize, best: &mut Option<Probe>| -> Result<Probe> {
            let xa: Vec<f64> = x0.iter().zip(&d).map(|(x, d)| x + a * d).collect();
            let (f, g) = fg(&xa)?;
            *evals += 1;
            let p = Probe { a, f, d: dot(&g, &d), g };
            if p.f.is_finite() && best.as_ref().is_none_or(|b| p.f < b.f) {
                *best = Some(Probe { g: p.g.clone(), ..p });
            }
            Ok(p)
        };

        let wolfe = |p: &Probe| p.f <= f0 + self.c1 * p.a * d0 && p.d.abs() <= -self.c2 * d0;
        let armijo_fails = |p: &Probe, f_ref: f64| !(p.f <= f0 + self.c1 * p.a * d0) || p.f >= f_ref;

        let mut found: Option<Probe> = None;
        let mut prev = Probe {
            a: 0.0,
            f: f0,
            d: d0,
            g: g0.to_vec(),
        };
        let mut a = a_init;
        let mut bracket: Option<(Probe, Probe)> = None;
        while evals < self.max_evals {
            let p = probe(a, &mut evals, &mut best)?;
            if armijo_fails(&p, if prev.a == 0.0 { f64::INFINITY } else { prev.f }) {
                bracket = Some((prev, p));
                break;
            }
            if wolfe(&p) {
                found = Some(p);
                break;
            }
            if p.d >= 0.0 {
                bracket = Some((p, prev));
                break;
            }
            a = 2.0 * p.a;
            prev = p;
        }

        if let Some((mut lo, mut hi)) = bracket {
            while found.is_none() && evals < self.max_evals {
                let a_j = interpolate(&lo, &hi);
                let p = probe(a_j, &mut evals, &mut best)?;
                if armijo_fails(&p, lo.f) {
                    hi = p;
                } else {
                    if wolfe(&p) {
                        found = Some(p);
                        break;
                    }
                    if p.d * (hi.a - lo.a) >= 0.0 {
                        hi = lo;
                    }
                    lo = p;
                }
                if (hi.a - lo.a).abs() <= 1e-16 * lo.a.abs().max(1.0) {
                    break;
                }
            }
        }

        let mut fell_back = false;
        let accepted = match found {
            Some(p) => p,
            None => {
                fell_back = true;
                self.fallbacks += 1;
                match best.filter(|b| b.f < f0) {
                    Some(b) => b,
                    None => {
                        // scaled gradient step
                        self.history.clear();
                        let a = 1e-3 * (1.0 / gnorm).min(1.0);
                        d = g0.iter().map(|g| -g).collect();
                        let xa: Vec<f64> = x0.iter().zip(&d).map(|(x, d)| x + a * d).collect();
                        let (f, g) = fg(&xa)?;
                        evals += 1;
                        Probe { a, f, d: dot(&g, &d), g }
                    }
                }
            }
        };

        if !accepted.f.is_finite() || accepted.g.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                what: "line search value",
                iteration: 0,
            });
        }
        let s: Vec<f64> = d.iter().map(|d| accepted.a * d).collect();
        for (xi, (x0, si)) in x.iter_mut().zip(x0.iter().zip(&s)) {
            *xi = x0 + si;
        }
        let y: Vec<f64> = accepted.g.iter().zip(g0).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            if self.history.len() == self.memory {
                self.history.pop_front();
            }
            self.history.push_back((s, y, 1.0 / sy));
        }
        Ok(LbfgsStep {
            f: accepted.f,
            grad: accepted.g,
            step: accepted.a,
            evals,
            fell_back,
        })
    }
}

/// Minimiser of the cubic through both probes, kept inside the middle 80%
/// of the bracket; bisection when the cubic is unusable.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.a, hi.a);
    let mid = 0.5 * (a + b);
    let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.d * hi.d;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let c = b - (b - a) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2);
    let (l, r) = (a.min(b), a.max(b));
    let margin = 0.1 * (r - l);
    if c.is_finite() && c >= l + margin && c <= r - margin {
        c
    } else {
        mid
    }
}
