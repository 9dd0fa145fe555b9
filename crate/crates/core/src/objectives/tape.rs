//! Reference loss graphs built on a [`Tape`].

use rand::Rng;

use super::{check_term, sample_region, ObjectiveKind, ObjectiveSpec, PerturbedSet};
#[cfg(feature = "jet3")]
use crate::autodiff::Scalar;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::models::{FlatParams, ModelConfig, TapeModel};
use crate::pde::{BoundarySet, CollocationSet, Derivs, LossTerms, PdeProblem, Point};

/// Loss nodes of one evaluation; `total` is the sum of the weighted terms.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes<'t> {
    pub total: Var<'t>,
    pub eq: Var<'t>,
    pub ic: Var<'t>,
    pub bc: Var<'t>,
    pub reg: Var<'t>,
}

impl LossNodes<'_> {
    pub fn terms(&self) -> LossTerms {
        LossTerms {
            eq: self.eq.value(),
            ic: self.ic.value(),
            bc: self.bc.value(),
            reg: self.reg.value(),
        }
    }
}

fn weighted_mean<'t>(tape: &'t Tape, terms: &[Var<'t>], w: f64) -> Var<'t> {
    if w == 0.0 || terms.is_empty() {
        return tape.constant(0.0);
    }
    tape.mean(terms).scale(w)
}

/// `(∂F/∂x, ∂F/∂t)` at `x` as tape nodes.
fn residual_gradient_nodes<'t>(model: &TapeModel<'t>, problem: &PdeProblem, x: &[f64]) -> Result<[Var<'t>; 2]> {
    #[cfg(feature = "jet3")]
    if problem.residual_order() > 1 {
        let jet = model.forward_jet3(x)?;
        return Ok([0, 1].map(|dir| problem.residual_of(&lift_jet3(&jet, dir)).eps));
    }
    let jet = model.forward_jet(x)?;
    problem.residual_gradient(&Derivs::from_jet(&jet))
}

#[cfg(feature = "jet3")]
fn lift_jet3<S: Scalar>(jet: &crate::autodiff::Jet3<S>, dir: usize) -> Derivs<crate::autodiff::Dual<S>> {
    use crate::autodiff::Dual;
    use crate::pde::{T, X};
    let d = |v: &S, t: &S| Dual::new(v.clone(), t.clone());
    Derivs {
        u: d(&jet.value, &jet.grad[dir]),
        ux: d(&jet.grad[X], jet.hess_at(X, dir)),
        ut: d(&jet.grad[T], jet.hess_at(T, dir)),
        uxx: d(jet.hess_at(X, X), jet.third_at(X, X, dir)),
        uxt: d(jet.hess_at(X, T), jet.third_at(X, T, dir)),
        utt: d(jet.hess_at(T, T), jet.third_at(T, T, dir)),
    }
}

fn build_loss<'t>(
    model: &TapeModel<'t>,
    problem: &PdeProblem,
    set: &CollocationSet,
    spec: &ObjectiveSpec,
    gradient_terms: bool,
) -> Result<LossNodes<'t>> {
    spec.validate()?;
    check_term("equation", spec.lambda_eq, set.interior.len())?;
    check_term("initial", spec.lambda_ic, set.initial.len())?;
    check_term("boundary", spec.lambda_bc, set.boundary.len())?;
    #[cfg(not(feature = "jet3"))]
    if gradient_terms {
        problem.check_gradient_terms()?;
    }
    let tape = model.tape();

    let mut eq = Vec::with_capacity(set.interior.len());
    let mut reg = [Vec::new(), Vec::new()];
    for p in &set.interior {
        let jet = model.forward_jet(p)?;
        eq.push(problem.residual(&jet).square());
        if gradient_terms {
            let g = residual_gradient_nodes(model, problem, p)?;
            reg[0].push(g[0].square());
            reg[1].push(g[1].square());
        }
    }

    let mut ic = Vec::with_capacity(set.initial.len());
    let mut ic_velocity = Vec::new();
    for p in &set.initial {
        let jet = model.forward_jet(p)?;
        ic.push((jet.value - problem.ic_target(p[0])).square());
        if problem.has_velocity_ic() {
            ic_velocity.push(jet.grad[1].square());
        }
    }

    let mut bc = Vec::with_capacity(set.boundary.len());
    match &set.boundary {
        BoundarySet::Periodic(pairs) => {
            for [a, b] in pairs {
                let ua = model.forward_jet(a)?.value;
                let ub = model.forward_jet(b)?.value;
                bc.push((ua - ub).square());
            }
        }
        BoundarySet::Dirichlet(points) => {
            for p in points {
                bc.push(model.forward_jet(p)?.value.square());
            }
        }
    }

    let eq = weighted_mean(tape, &eq, spec.lambda_eq);
    let ic = weighted_mean(tape, &ic, spec.lambda_ic) + weighted_mean(tape, &ic_velocity, spec.lambda_ic);
    let bc = weighted_mean(tape, &bc, spec.lambda_bc);
    let reg = if gradient_terms {
        weighted_mean(tape, &reg[0], spec.gpinn_lambda[0]) + weighted_mean(tape, &reg[1], spec.gpinn_lambda[1])
    } else {
        tape.constant(0.0)
    };
    let total = eq + ic + bc + reg;
    Ok(LossNodes { total, eq, ic, bc, reg })
}

/// Weighted means of squared residual, initial and boundary mismatches.
pub fn point_loss<'t>(
    model: &TapeModel<'t>,
    problem: &PdeProblem,
    set: &CollocationSet,
    spec: &ObjectiveSpec,
) -> Result<LossNodes<'t>> {
    build_loss(model, problem, set, spec, false)
}

/// [`point_loss`] plus weighted means of `(∂F/∂x)²` and `(∂F/∂t)²` over the
/// interior points.
pub fn gpinn_loss<'t>(
    model: &TapeModel<'t>,
    problem: &PdeProblem,
    set: &CollocationSet,
    spec: &ObjectiveSpec,
) -> Result<LossNodes<'t>> {
    build_loss(model, problem, set, spec, true)
}

/// Point loss averaged over `spec.samples` sets drawn around `set` with
/// width `h`.
pub fn region_loss<'t, R: Rng + ?Sized>(
    model: &TapeModel<'t>,
    problem: &PdeProblem,
    set: &CollocationSet,
    spec: &ObjectiveSpec,
    h: f64,
    rng: &mut R,
) -> Result<(LossNodes<'t>, Vec<PerturbedSet>)> {
    spec.validate()?;
    let mut draws = Vec::with_capacity(spec.samples);
    let mut losses = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let s = sample_region(problem, set, h, spec, rng)?;
        losses.push(build_loss(model, problem, &s.set, spec, false)?);
        draws.push(s);
    }
    let tape = model.tape();
    let avg = |f: fn(&LossNodes<'t>) -> Var<'t>| tape.mean(&losses.iter().map(f).collect::<Vec<_>>());
    let nodes = LossNodes {
        total: avg(|l| l.total),
        eq: avg(|l| l.eq),
        ic: avg(|l| l.ic),
        bc: avg(|l| l.bc),
        reg: avg(|l| l.reg),
    };
    Ok((nodes, draws))
}

/// Loss terms and parameter gradient on a fixed set, on a fresh tape.
pub fn tape_loss_and_grad(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    set: &CollocationSet,
    spec: &ObjectiveSpec,
) -> Result<(LossTerms, Vec<f64>)> {
    let tape = Tape::new();
    let model = TapeModel::bind(&tape, config, params)?;
    let nodes = build_loss(&model, problem, set, spec, spec.kind == ObjectiveKind::Gpinn)?;
    let grad = nodes.total.backward()?;
    Ok((nodes.terms(), grad))
}

/// Equation-term loss at one point: `λ_eq·F²` plus the weighted residual
/// gradient terms for `gpinn`.
pub fn interior_point_loss<'t>(
    model: &TapeModel<'t>,
    problem: &PdeProblem,
    x: Point,
    spec: &ObjectiveSpec,
) -> Result<Var<'t>> {
    let jet = model.forward_jet(&x)?;
    let mut loss = problem.residual(&jet).square().scale(spec.lambda_eq);
    if spec.kind == ObjectiveKind::Gpinn {
        let g = residual_gradient_nodes(model, problem, &x)?;
        loss = loss + g[0].square().scale(spec.gpinn_lambda[0]) + g[1].square().scale(spec.gpinn_lambda[1]);
    }
    Ok(loss)
}
