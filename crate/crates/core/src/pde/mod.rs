//! Benchmark problems: reaction, wave and convection on a space-time box.
//!
//! Coordinates are ordered `(x, t)`; derivative index 0 is `x`, 1 is `t`.

pub mod mesh;
pub mod metrics;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual, Jet2, Scalar};
use crate::error::{Error, Result};
use crate::models::batched::JetLayout;

pub use mesh::{test_mesh, uniform_mesh, BoundarySet, CollocationSet, Manifold};
pub use metrics::{evaluate_metrics, relative_errors, LossTerms, MetricsReport};

pub type Point = [f64; 2];

pub const X: usize = 0;
pub const T: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub x_lo: f64,
    pub x_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl DomainBox {
    pub fn new(x_lo: f64, x_hi: f64, t_lo: f64, t_hi: f64) -> Result<Self> {
        if !(x_lo < x_hi && t_lo < t_hi) {
            return Err(Error::Config(format!(
                "empty domain box x=[{x_lo},{x_hi}] t=[{t_lo},{t_hi}]"
            )));
        }
        Ok(Self { x_lo, x_hi, t_lo, t_hi })
    }

    pub fn lo(&self, dim: usize) -> f64 {
        if dim == X {
            self.x_lo
        } else {
            self.t_lo
        }
    }

    pub fn hi(&self, dim: usize) -> f64 {
        if dim == X {
            self.x_hi
        } else {
            self.t_hi
        }
    }

    pub fn side(&self, dim: usize) -> f64 {
        self.hi(dim) - self.lo(dim)
    }

    pub fn min_side(&self) -> f64 {
        self.side(X).min(self.side(T))
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.x_lo..=self.x_hi).contains(&p[X]) && (self.t_lo..=self.t_hi).contains(&p[T])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Reaction,
    Wave,
    Convection,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::Reaction, ProblemKind::Wave, ProblemKind::Convection];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Reaction => "reaction",
            ProblemKind::Wave => "wave",
            ProblemKind::Convection => "convection",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reaction" | "reaction1d" => Ok(ProblemKind::Reaction),
            "wave" | "wave1d" => Ok(ProblemKind::Wave),
            "convection" => Ok(ProblemKind::Convection),
            _ => Err(Error::UnknownProblem(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Periodic,
    DirichletZero,
}

/// Solution derivatives up to second order at one point. Entries a problem
/// does not use may hold zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivs<S> {
    pub u: S,
    pub ux: S,
    pub ut: S,
    pub uxx: S,
    pub uxt: S,
    pub utt: S,
}

impl<S: Scalar> Derivs<S> {
    pub fn from_jet(jet: &Jet2<S>) -> Self {
        Self {
            u: jet.value.clone(),
            ux: jet.grad[X].clone(),
            ut: jet.grad[T].clone(),
            uxx: jet.hess_at(X, X).clone(),
            uxt: jet.hess_at(X, T).clone(),
            utt: jet.hess_at(T, T).clone(),
        }
    }

    /// Lifts value and first derivatives into duals along input direction
    /// `dir`, so a first-order residual evaluated on the result carries
    /// `∂F/∂x_dir` in its `eps` part. Second derivatives get a zero tangent
    /// and must not enter the residual.
    pub fn lift_first_order(&self, dir: usize) -> Derivs<Dual<S>> {
        let (u_d, ux_d, ut_d) = if dir == X {
            (&self.ux, &self.uxx, &self.uxt)
        } else {
            (&self.ut, &self.uxt, &self.utt)
        };
        let zero = self.u.zero_like();
        Derivs {
            u: Dual::new(self.u.clone(), u_d.clone()),
            ux: Dual::new(self.ux.clone(), ux_d.clone()),
            ut: Dual::new(self.ut.clone(), ut_d.clone()),
            uxx: Dual::new(self.uxx.clone(), zero.clone()),
            uxt: Dual::new(self.uxt.clone(), zero.clone()),
            utt: Dual::new(self.utt.clone(), zero),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    /// ρ for reaction, β for wave and convection.
    pub coefficient: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub kind: ProblemKind,
    pub domain: DomainBox,
    pub coefficient: f64,
}

pub fn make_problem(name: &str, overrides: Overrides) -> Result<PdeProblem> {
    let kind: ProblemKind = name.parse()?;
    Ok(PdeProblem::new(kind, overrides))
}

const REACTION_WIDTH: f64 = PI / 4.0;
const WAVE_SPEED_SQ: f64 = 4.0;

fn gaussian_bump(x: f64) -> (f64, f64, f64) {
    let s2 = REACTION_WIDTH * REACTION_WIDTH;
    let d = x - PI;
    let h = (-d * d / (2.0 * s2)).exp();
    let h1 = -d / s2 * h;
    let h2 = (d * d / (s2 * s2) - 1.0 / s2) * h;
    (h, h1, h2)
}

impl PdeProblem {
    pub fn new(kind: ProblemKind, overrides: Overrides) -> Self {
        let (domain, default) = match kind {
            ProblemKind::Reaction => (DomainBox::new(0.0, 2.0 * PI, 0.0, 1.0), 5.0),
            ProblemKind::Wave => (DomainBox::new(0.0, 1.0, 0.0, 1.0), 3.0),
            ProblemKind::Convection => (DomainBox::new(0.0, 2.0 * PI, 0.0, 1.0), 50.0),
        };
        Self {
            kind,
            domain: domain.expect("built-in domains are valid"),
            coefficient: overrides.coefficient.unwrap_or(default),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn boundary_kind(&self) -> BoundaryKind {
        match self.kind {
            ProblemKind::Wave => BoundaryKind::DirichletZero,
            _ => BoundaryKind::Periodic,
        }
    }

    pub fn periodic_x(&self) -> bool {
        self.boundary_kind() == BoundaryKind::Periodic
    }

    /// Highest input-derivative order appearing in the residual.
    pub fn residual_order(&self) -> usize {
        match self.kind {
            ProblemKind::Wave => 2,
            _ => 1,
        }
    }

    pub fn has_velocity_ic(&self) -> bool {
        self.kind == ProblemKind::Wave
    }

    pub fn residual_of<S: Scalar>(&self, d: &Derivs<S>) -> S {
        let c = self.coefficient;
        match self.kind {
            ProblemKind::Reaction => d.ut.clone() - d.u.clone() * c + d.u.square() * c,
            ProblemKind::Wave => d.utt.clone() - d.uxx.clone() * WAVE_SPEED_SQ,
            ProblemKind::Convection => d.ut.clone() + d.ux.clone() * c,
        }
    }

    pub fn residual<S: Scalar>(&self, jet: &Jet2<S>) -> S {
        self.residual_of(&Derivs::from_jet(jet))
    }

    /// `(∂F/∂x, ∂F/∂t)` for first-order residuals via a dual lift of the
    /// jet. Second-order residuals need third input derivatives.
    pub fn residual_gradient<S: Scalar>(&self, d: &Derivs<S>) -> Result<[S; 2]> {
        self.check_gradient_terms()?;
        let fx = self.residual_of(&d.lift_first_order(X)).eps;
        let ft = self.residual_of(&d.lift_first_order(T)).eps;
        Ok([fx, ft])
    }

    pub fn check_gradient_terms(&self) -> Result<()> {
        if self.residual_order() > 1 {
            return Err(Error::Capability(format!(
                "residual derivatives of `{}` need third-order jets",
                self.name()
            )));
        }
        Ok(())
    }

    pub fn ic_target(&self, x: f64) -> f64 {
        match self.kind {
            ProblemKind::Reaction => gaussian_bump(x).0,
            ProblemKind::Wave => (PI * x).sin() + 0.5 * (self.coefficient * PI * x).sin(),
            ProblemKind::Convection => x.sin(),
        }
    }

    pub fn analytic(&self, x: f64, t: f64) -> f64 {
        self.analytic_derivs(x, t).u
    }

    /// Closed-form solution and derivatives, written out by hand.
    pub fn analytic_derivs(&self, x: f64, t: f64) -> Derivs<f64> {
        let c = self.coefficient;
        match self.kind {
            ProblemKind::Reaction => {
                let (h, h1, h2) = gaussian_bump(x);
                let e = (c * t).exp();
                let d = 1.0 + h * (e - 1.0);
                let d2 = d * d;
                let d3 = d2 * d;
                Derivs {
                    u: h * e / d,
                    ux: h1 * e / d2,
                    ut: h * c * e * (1.0 - h) / d2,
                    uxx: e * h2 / d2 - 2.0 * e * (e - 1.0) * h1 * h1 / d3,
                    uxt: h1 * c * e * (d - 2.0 * h * e) / d3,
                    utt: h * c * c * (1.0 - h) * e * (d - 2.0 * h * e) / d3,
                }
            }
            ProblemKind::Wave => {
                let (a, b) = (PI * x, c * PI * x);
                let (p, q) = (2.0 * PI * t, 2.0 * c * PI * t);
                let cp2 = c * c * PI * PI;
                Derivs {
                    u: a.sin() * p.cos() + 0.5 * b.sin() * q.cos(),
                    ux: PI * a.cos() * p.cos() + 0.5 * c * PI * b.cos() * q.cos(),
                    ut: -2.0 * PI * a.sin() * p.sin() - c * PI * b.sin() * q.sin(),
                    uxx: -PI * PI * a.sin() * p.cos() - 0.5 * cp2 * b.sin() * q.cos(),
                    uxt: -2.0 * PI * PI * a.cos() * p.sin() - cp2 * b.cos() * q.sin(),
                    utt: -4.0 * PI * PI * a.sin() * p.cos() - 2.0 * cp2 * b.sin() * q.cos(),
                }
            }
            ProblemKind::Convection => {
                let z = x - c * t;
                let (s, co) = (z.sin(), z.cos());
                Derivs {
                    u: s,
                    ux: co,
                    ut: -c * co,
                    uxx: -s,
                    uxt: c * s,
                    utt: -c * c * s,
                }
            }
        }
    }

    pub fn analytic_jet(&self, x: f64, t: f64) -> Jet2<f64> {
        let d = self.analytic_derivs(x, t);
        Jet2 {
            value: d.u,
            grad: vec![d.ux, d.ut],
            hess: vec![d.uxx, d.uxt, d.utt],
        }
    }

    /// Jet components the interior loss reads, optionally with what the
    /// residual-gradient regularizer needs.
    pub fn interior_layout(&self, gradient_terms: bool) -> Result<JetLayout> {
        if gradient_terms {
            return match self.kind {
                ProblemKind::Reaction => JetLayout::new(2, &[X, T], &[(X, T), (T, T)]),
                ProblemKind::Convection => JetLayout::new(2, &[X, T], &[(X, X), (X, T), (T, T)]),
                ProblemKind::Wave => self.check_gradient_terms().map(|_| JetLayout::full(2)),
            };
        }
        match self.kind {
            ProblemKind::Reaction => JetLayout::new(2, &[T], &[]),
            ProblemKind::Convection => JetLayout::new(2, &[X, T], &[]),
            ProblemKind::Wave => JetLayout::new(2, &[X, T], &[(X, X), (T, T)]),
        }
    }

    pub fn initial_layout(&self) -> JetLayout {
        if self.has_velocity_ic() {
            JetLayout::new(2, &[T], &[]).expect("valid layout")
        } else {
            JetLayout::value_only(2)
        }
    }
}

impl Derivs<f64> {
    pub fn zero() -> Self {
        Self {
            u: 0.0,
            ux: 0.0,
            ut: 0.0,
            uxx: 0.0,
            uxt: 0.0,
            utt: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(p: &PdeProblem, n: usize) -> Vec<Point> {
        let d = p.domain;
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let x = d.x_lo + d.side(X) * i as f64 / (n - 1) as f64;
                let t = d.t_lo + d.side(T) * j as f64 / (n - 1) as f64;
                out.push([x, t]);
            }
        }
        out
    }

    #[test]
    fn named_values() {
        let r = make_problem("reaction", Overrides::default()).unwrap();
        assert!((r.analytic(PI, 0.0) - 1.0).abs() < 1e-15);
        let c = make_problem("convection", Overrides::default()).unwrap();
        assert_eq!(c.analytic(0.0, 0.0), 0.0);
        let w = make_problem("wave1d", Overrides::default()).unwrap();
        assert!((w.analytic(0.5, 0.0) - 0.5).abs() < 1e-15);
        assert!(make_problem("heat", Overrides::default()).is_err());
    }

    #[test]
    fn analytic_solutions_satisfy_their_equations() {
        for kind in ProblemKind::ALL {
            let p = PdeProblem::new(kind, Overrides::default());
            for [x, t] in grid(&p, 21) {
                let r = p.residual(&p.analytic_jet(x, t));
                assert!(r.abs() <= 1e-9, "{kind} at ({x},{t}): {r}");
            }
        }
    }

    #[test]
    fn closed_form_derivatives_match_finite_differences() {
        // central differences of the closed-form value, for every entry
        let h = 1e-4;
        for kind in ProblemKind::ALL {
            let p = PdeProblem::new(kind, Overrides { coefficient: Some(2.0) });
            for [x, t] in [[0.37, 0.21], [0.81, 0.66]] {
                let u = |x: f64, t: f64| p.analytic(x, t);
                let d = p.analytic_derivs(x, t);
                let fx = (u(x + h, t) - u(x - h, t)) / (2.0 * h);
                let ft = (u(x, t + h) - u(x, t - h)) / (2.0 * h);
                let fxx = (u(x + h, t) - 2.0 * u(x, t) + u(x - h, t)) / (h * h);
                let ftt = (u(x, t + h) - 2.0 * u(x, t) + u(x, t - h)) / (h * h);
                let fxt = (u(x + h, t + h) - u(x + h, t - h) - u(x - h, t + h) + u(x - h, t - h)) / (4.0 * h * h);
                for (a, b) in [(d.ux, fx), (d.ut, ft), (d.uxx, fxx), (d.utt, ftt), (d.uxt, fxt)] {
                    assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "{kind}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn initial_condition_is_the_solution_at_t0() {
        for kind in ProblemKind::ALL {
            let p = PdeProblem::new(kind, Overrides::default());
            for i in 0..=20 {
                let x = p.domain.x_lo + p.domain.side(X) * i as f64 / 20.0;
                assert!((p.ic_target(x) - p.analytic(x, p.domain.t_lo)).abs() <= 1e-15);
            }
        }
        let w = PdeProblem::new(ProblemKind::Wave, Overrides::default());
        assert_eq!(w.analytic_derivs(0.3, 0.0).ut, 0.0);
    }

    #[test]
    fn periodic_solutions_match_across_faces() {
        for kind in [ProblemKind::Reaction, ProblemKind::Convection] {
            let p = PdeProblem::new(kind, Overrides::default());
            for j in 0..=50 {
                let t = j as f64 / 50.0;
                let gap = (p.analytic(p.domain.x_lo, t) - p.analytic(p.domain.x_hi, t)).abs();
                assert!(gap <= 1e-12, "{kind} t={t}: {gap}");
            }
        }
    }

    #[test]
    fn residual_gradient_by_dual_lift() {
        // convection with u = a·x + b·t has constant residual
        let p = PdeProblem::new(ProblemKind::Convection, Overrides::default());
        let d = Derivs {
            u: 0.3,
            ux: 1.5,
            ut: -2.0,
            uxx: 0.0,
            uxt: 0.0,
            utt: 0.0,
        };
        assert_eq!(p.residual_gradient(&d).unwrap(), [0.0, 0.0]);
        // reaction: ∂F/∂x = u_xt − ρ u_x + 2ρ u u_x
        let r = PdeProblem::new(ProblemKind::Reaction, Overrides::default());
        let d = Derivs {
            u: 0.4,
            ux: 0.7,
            ut: 0.2,
            uxx: 1.1,
            uxt: -0.3,
            utt: 0.9,
        };
        let [fx, ft] = r.residual_gradient(&d).unwrap();
        assert!((fx - (-0.3 - 5.0 * 0.7 + 10.0 * 0.4 * 0.7)).abs() < 1e-15);
        assert!((ft - (0.9 - 5.0 * 0.2 + 10.0 * 0.4 * 0.2)).abs() < 1e-15);
        let w = PdeProblem::new(ProblemKind::Wave, Overrides::default());
        assert!(matches!(w.residual_gradient(&d), Err(Error::Capability(_))));
        assert!(w.interior_layout(true).is_err());
    }
}
