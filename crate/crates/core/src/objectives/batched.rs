//! Losses and parameter gradients over whole point sets.
//!
//! Points are cut into fixed-size chunks. Each chunk runs one batched jet
//! pass, a per-point head that maps jet components to weighted loss
//! contributions and their cotangents (forward mode over at most six
//! components), and one batched reverse pass. Chunk results are reduced in
//! chunk order, so the outcome does not depend on how chunks are scheduled.

use super::{check_term, ObjectiveKind, ObjectiveSpec};
use crate::autodiff::{MultiDual, Scalar};
use crate::error::{Error, Result};
use crate::models::batched::{forward, JetLayout};
use crate::models::{FlatParams, ModelConfig};
use crate::par::{self, Parallelism};
use crate::pde::{mesh::flatten, BoundarySet, CollocationSet, Derivs, LossTerms, PdeProblem, Point, T, X};

pub const CHUNK: usize = 256;

type Md = MultiDual<6>;

#[derive(Clone, Copy)]
enum Group {
    Interior,
    Initial,
    Periodic,
    Dirichlet,
}

struct Job<'a> {
    group: Group,
    points: &'a [Point],
    /// For periodic jobs, `points` holds pairs flattened as `a0, b0, a1, b1, ...`.
    weights: Weights,
}

#[derive(Clone, Copy)]
struct Weights {
    main: f64,
    reg: [f64; 2],
}

struct Slots([Option<usize>; 6]);

impl Slots {
    fn new(layout: &JetLayout) -> Self {
        Self([
            Some(0),
            layout.dir_slot(X),
            layout.dir_slot(T),
            layout.pair_slot(X, X),
            layout.pair_slot(X, T),
            layout.pair_slot(T, T),
        ])
    }

    fn derivs(&self, out: impl Fn(usize) -> f64) -> Derivs<Md> {
        let get = |k: usize| match self.0[k] {
            Some(s) => Md::variable(out(s), s),
            None => Md::constant(0.0),
        };
        Derivs {
            u: get(0),
            ux: get(1),
            ut: get(2),
            uxx: get(3),
            uxt: get(4),
            utt: get(5),
        }
    }
}

fn run_job(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    job: &Job,
    gradient_terms: bool,
) -> Result<(LossTerms, Vec<f64>)> {
    let layout = match job.group {
        Group::Interior => problem.interior_layout(gradient_terms)?,
        Group::Initial => problem.initial_layout(),
        Group::Periodic | Group::Dirichlet => JetLayout::value_only(2),
    };
    let coords = flatten(job.points);
    let pass = forward(config, params, &coords, &layout)?;
    let b = pass.batch();
    let c = layout.components();
    let mut cot = vec![0.0; c * b];
    let mut terms = LossTerms::default();
    let w = job.weights;
    match job.group {
        Group::Interior => {
            let slots = Slots::new(&layout);
            for i in 0..b {
                let d = slots.derivs(|s| pass.output(s, i));
                let mut eq = problem.residual_of(&d).square() * w.main;
                terms.eq += eq.v;
                if gradient_terms {
                    let [fx, ft] = problem.residual_gradient(&d)?;
                    let reg = fx.square() * w.reg[0] + ft.square() * w.reg[1];
                    terms.reg += reg.v;
                    eq = eq + reg;
                }
                for s in 0..c {
                    cot[s * b + i] = eq.d[s];
                }
            }
        }
        Group::Initial => {
            let slots = Slots::new(&layout);
            for (i, p) in job.points.iter().enumerate() {
                let d = slots.derivs(|s| pass.output(s, i));
                let mut l = (d.u - problem.ic_target(p[X])).square() * w.main;
                if problem.has_velocity_ic() {
                    l = l + d.ut.square() * w.main;
                }
                terms.ic += l.v;
                for s in 0..c {
                    cot[s * b + i] = l.d[s];
                }
            }
        }
        Group::Periodic => {
            for k in 0..b / 2 {
                let gap = pass.output(0, 2 * k) - pass.output(0, 2 * k + 1);
                terms.bc += w.main * gap * gap;
                cot[2 * k] = 2.0 * w.main * gap;
                cot[2 * k + 1] = -2.0 * w.main * gap;
            }
        }
        Group::Dirichlet => {
            for (i, g) in cot.iter_mut().enumerate() {
                let u = pass.output(0, i);
                terms.bc += w.main * u * u;
                *g = 2.0 * w.main * u;
            }
        }
    }
    let mut grad = vec![0.0; params.len()];
    pass.backward(&cot, &mut grad)?;
    Ok((terms, grad))
}

/// Loss terms and parameter gradient of the objective on `set`.
pub fn loss_and_grad(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    set: &CollocationSet,
    spec: &ObjectiveSpec,
    par: Parallelism,
) -> Result<(LossTerms, Vec<f64>)> {
    loss_and_grad_many(problem, config, params, std::slice::from_ref(set), spec, par)
}

/// Average of the objective over several sets (multi-sample regions).
pub fn loss_and_grad_many(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    sets: &[CollocationSet],
    spec: &ObjectiveSpec,
    par: Parallelism,
) -> Result<(LossTerms, Vec<f64>)> {
    spec.validate()?;
    params.check(config)?;
    if sets.is_empty() {
        return Err(Error::Config("no collocation sets to evaluate".into()));
    }
    let gradient_terms = spec.kind == ObjectiveKind::Gpinn;
    if gradient_terms {
        problem.check_gradient_terms()?;
    }
    let k = sets.len() as f64;
    let mut periodic_flat = Vec::with_capacity(sets.len());
    for set in sets {
        check_term("equation", spec.lambda_eq, set.interior.len())?;
        check_term("initial", spec.lambda_ic, set.initial.len())?;
        check_term("boundary", spec.lambda_bc, set.boundary.len())?;
        periodic_flat.push(match &set.boundary {
            BoundarySet::Periodic(pairs) => pairs.iter().flat_map(|p| p.iter().copied()).collect(),
            BoundarySet::Dirichlet(_) => Vec::new(),
        });
    }

    let mut jobs = Vec::new();
    for (set, periodic) in sets.iter().zip(&periodic_flat) {
        let per = |n: usize, lambda: f64| if n == 0 { 0.0 } else { lambda / (n as f64 * k) };
        let n_int = set.interior.len();
        let wants_interior = spec.lambda_eq > 0.0 || (gradient_terms && spec.gpinn_lambda.iter().any(|&w| w > 0.0));
        if wants_interior {
            let weights = Weights {
                main: per(n_int, spec.lambda_eq),
                reg: [per(n_int, spec.gpinn_lambda[0]), per(n_int, spec.gpinn_lambda[1])],
            };
            jobs.extend(set.interior.chunks(CHUNK).map(|points| Job {
                group: Group::Interior,
                points,
                weights,
            }));
        }
        if spec.lambda_ic > 0.0 {
            let weights = Weights {
                main: per(set.initial.len(), spec.lambda_ic),
                reg: [0.0; 2],
            };
            jobs.extend(set.initial.chunks(CHUNK).map(|points| Job {
                group: Group::Initial,
                points,
                weights,
            }));
        }
        if spec.lambda_bc > 0.0 {
            let weights = Weights {
                main: per(set.boundary.len(), spec.lambda_bc),
                reg: [0.0; 2],
            };
            match &set.boundary {
                BoundarySet::Periodic(_) => jobs.extend(periodic.chunks(CHUNK).map(|points| Job {
                    group: Group::Periodic,
                    points,
                    weights,
                })),
                BoundarySet::Dirichlet(points) => jobs.extend(points.chunks(CHUNK).map(|points| Job {
                    group: Group::Dirichlet,
                    points,
                    weights,
                })),
            }
        }
    }

    let results = par::map_slice(&jobs, par, |job| run_job(problem, config, params, job, gradient_terms));
    let mut terms = LossTerms::default();
    let mut grad = vec![0.0; params.len()];
    for r in results {
        let (t, g) = r?;
        terms.eq += t.eq;
        terms.ic += t.ic;
        terms.bc += t.bc;
        terms.reg += t.reg;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((terms, grad))
}
