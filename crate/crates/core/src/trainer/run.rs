//! The training loop. Point, region and gradient-enhanced runs share every
//! line of it; only the sampling width and the loss differ.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{OptimizerKind, RunConfig};
use super::optim::{Adam, Lbfgs};
use super::trace::TraceRow;
use super::trust::TrustRegion;
use super::Checkpoint;
use crate::error::{Error, Result};
use crate::models::{init, FlatParams};
use crate::objectives::{loss_and_grad_many, sample_region, ObjectiveKind};
use crate::pde::metrics::{evaluate_metrics, LossTerms, MetricsReport};
use crate::pde::{test_mesh, uniform_mesh, CollocationSet, PdeProblem, Point};

/// What one iteration did.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// Number of completed steps, starting at 1.
    pub iteration: usize,
    /// Sampling width used for this step.
    pub width: f64,
    /// Loss at the pre-step parameters on the sampled sets.
    pub losses: LossTerms,
    /// Gradient used for the step and pushed into the buffer.
    pub grad: Vec<f64>,
    /// σ after calibration with `grad`.
    pub sigma: f64,
    pub sets: Vec<CollocationSet>,
}

#[derive(Clone, Debug)]
enum Optimizer {
    Adam(Adam),
    Lbfgs(Lbfgs),
}

pub struct Trainer {
    config: RunConfig,
    problem: PdeProblem,
    base: CollocationSet,
    test_mesh: Vec<Point>,
    params: FlatParams,
    optimizer: Optimizer,
    trust: TrustRegion,
    rng: ChaCha8Rng,
    iteration: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub config: RunConfig,
    pub params: FlatParams,
    pub trace: Vec<TraceRow>,
    pub final_metrics: MetricsReport,
    pub sigma: f64,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        let params = init(&config.model)?;
        Self::with_params(config, params)
    }

    pub fn with_params(config: RunConfig, params: FlatParams) -> Result<Self> {
        config.validate()?;
        params.check(&config.model)?;
        let problem = config.problem();
        let m = config.mesh;
        let base = uniform_mesh(&problem, m.interior, m.initial, m.boundary)?;
        let test_mesh = test_mesh(&problem, m.test)?;
        let t = config.trust;
        let trust = TrustRegion::new(t.r0, t.t0, t.sigma_mode, t.width_floor, config.width_cap())?;
        let optimizer = match config.optimizer.kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(params.len())),
            OptimizerKind::Lbfgs => Optimizer::Lbfgs(Lbfgs::new(config.optimizer.lbfgs_history)),
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            problem,
            base,
            test_mesh,
            params,
            optimizer,
            trust,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn params(&self) -> &FlatParams {
        &self.params
    }

    pub fn trust(&self) -> &TrustRegion {
        &self.trust
    }

    pub fn collocation(&self) -> &CollocationSet {
        &self.base
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            run_config: serde_json::to_value(&self.config).unwrap_or(serde_json::Value::Null),
            params: self.params.clone(),
        }
    }

    fn numeric(&self, what: &'static str) -> Error {
        Error::Numeric {
            what,
            iteration: self.iteration,
        }
    }

    /// One iteration: sample, evaluate, step, calibrate. On error the
    /// parameters are left as they were before the call.
    pub fn step(&mut self) -> Result<StepRecord> {
        let spec = self.config.objective;
        let width = match spec.kind {
            ObjectiveKind::Region => self.trust.effective_width(),
            ObjectiveKind::Point | ObjectiveKind::Gpinn => 0.0,
        };
        let k = if width > 0.0 { spec.samples } else { 1 };
        let sets = (0..k)
            .map(|_| sample_region(&self.problem, &self.base, width, &spec, &mut self.rng).map(|p| p.set))
            .collect::<Result<Vec<_>>>()?;
        let (problem, model, par) = (&self.problem, &self.config.model, self.config.parallelism);
        let (losses, grad) = loss_and_grad_many(problem, model, &self.params, &sets, &spec, par)?;
        if !losses.is_finite() {
            return Err(self.numeric("loss"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(self.numeric("gradient"));
        }

        let mut next = self.params.values.clone();
        match &mut self.optimizer {
            Optimizer::Adam(adam) => adam.step(&mut next, &grad, self.config.optimizer.lr)?,
            Optimizer::Lbfgs(lbfgs) => {
                let fg = |x: &[f64]| {
                    let p = FlatParams::from_values(model, x.to_vec())?;
                    let (l, g) = loss_and_grad_many(problem, model, &p, &sets, &spec, par)?;
                    Ok((l.total(), g))
                };
                lbfgs.step(&mut next, losses.total(), &grad, fg)?;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(self.numeric("parameters"));
        }
        let sigma = self.trust.calibrate(&grad)?;
        self.params.values = next;
        self.iteration += 1;
        Ok(StepRecord {
            iteration: self.iteration,
            width,
            losses,
            grad,
            sigma,
            sets,
        })
    }

    pub fn evaluate(&self, losses: LossTerms) -> Result<MetricsReport> {
        evaluate_metrics(
            &self.problem,
            &self.config.model,
            &self.params,
            &self.test_mesh,
            losses,
            self.config.parallelism,
        )
    }

    fn abort(&self, e: Error) -> Error {
        match e {
            Error::Numeric { .. } | Error::NonFiniteNode { .. } => Error::Aborted {
                iteration: self.iteration,
                reason: e.to_string(),
                checkpoint: Box::new(self.checkpoint()),
            },
            other => other,
        }
    }

    /// Runs the remaining iterations, evaluating every `eval_every` steps
    /// and after the last one.
    pub fn train(self) -> Result<TrainOutcome> {
        self.train_observed(|_| {})
    }

    /// Like [`Trainer::train`], handing every trace row to `observe` as soon
    /// as it exists so callers keep partial traces of aborted runs.
    pub fn train_observed(mut self, mut observe: impl FnMut(&TraceRow)) -> Result<TrainOutcome> {
        let start = Instant::now();
        let (floor, cap) = self.trust.clamps();
        let total = self.config.iterations;
        let mut trace = Vec::new();
        let mut last = None;
        while self.iteration < total {
            let rec = self.step().map_err(|e| self.abort(e))?;
            if rec.width != 0.0 && !(floor..=cap).contains(&rec.width) {
                return Err(Error::Config(format!(
                    "width {} escaped its clamps [{floor}, {cap}] at iteration {}",
                    rec.width, rec.iteration
                )));
            }
            if rec.iteration % self.config.eval_every == 0 || rec.iteration == total {
                let m = self.evaluate(rec.losses).map_err(|e| self.abort(e))?;
                if !(m.rmse.is_finite() && m.rmae.is_finite()) {
                    return Err(self.abort(self.numeric("metrics")));
                }
                let row = TraceRow {
                    iter: rec.iteration,
                    loss_total: rec.losses.total(),
                    loss_eq: rec.losses.eq,
                    loss_ic: rec.losses.ic,
                    loss_bc: rec.losses.bc,
                    sigma: rec.sigma,
                    eff_width: rec.width,
                    rmae: m.rmae,
                    rmse: m.rmse,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                };
                observe(&row);
                trace.push(row);
                last = Some(m);
            }
        }
        let final_metrics = match last {
            Some(m) => m,
            None => self.evaluate(LossTerms::default())?,
        };
        Ok(TrainOutcome {
            sigma: self.trust.sigma(),
            config: self.config,
            params: self.params,
            trace,
            final_metrics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Arch, ModelConfig};
    use crate::par::Parallelism;
    use crate::pde::ProblemKind;
    use crate::trainer::trust::SIGMA_FLOOR;

    fn tiny(kind: ObjectiveKind, problem: ProblemKind) -> RunConfig {
        let mut c = RunConfig::desk(problem, 3);
        c.model = ModelConfig::new(Arch::MlpTanh, vec![2, 6, 6, 1], 3).unwrap();
        c.objective.kind = kind;
        c.iterations = 6;
        c.eval_every = 2;
        c.mesh.interior = 5;
        c.mesh.initial = 5;
        c.mesh.boundary = 5;
        c.mesh.test = 9;
        c.optimizer.lr = 1e-2;
        c
    }

    #[test]
    fn single_step_region_run_floors_sigma() {
        let mut c = tiny(ObjectiveKind::Region, ProblemKind::Reaction);
        c.iterations = 1;
        let out = Trainer::new(c).unwrap().train().unwrap();
        assert_eq!(out.sigma, SIGMA_FLOOR);
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].eff_width, 1e-4);
    }

    #[test]
    fn trace_rows_follow_eval_cadence() {
        let mut c = tiny(ObjectiveKind::Point, ProblemKind::Convection);
        c.iterations = 7;
        let out = Trainer::new(c).unwrap().train().unwrap();
        let iters: Vec<usize> = out.trace.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![2, 4, 6, 7]);
        assert_eq!(out.final_metrics.rmse, out.trace[3].rmse);
    }

    #[test]
    fn runs_are_deterministic() {
        let c = tiny(ObjectiveKind::Region, ProblemKind::Wave);
        let a = Trainer::new(c.clone()).unwrap().train().unwrap();
        let b = Trainer::new(c).unwrap().train().unwrap();
        assert_eq!(a.params, b.params);
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!((x.loss_total, x.sigma, x.rmse), (y.loss_total, y.sigma, y.rmse));
        }
    }

    #[test]
    fn scheduling_does_not_change_results() {
        let mut c = tiny(ObjectiveKind::Region, ProblemKind::Reaction);
        c.parallelism = Parallelism::Sequential;
        let a = Trainer::new(c.clone()).unwrap().train().unwrap();
        c.parallelism = Parallelism::Parallel;
        let b = Trainer::new(c).unwrap().train().unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn region_width_follows_sigma() {
        let c = tiny(ObjectiveKind::Region, ProblemKind::Reaction);
        let mut t = Trainer::new(c).unwrap();
        let r1 = t.step().unwrap();
        assert_eq!(r1.width, 1e-4);
        let r2 = t.step().unwrap();
        assert_eq!(r2.width, (1e-4 / r1.sigma).clamp(1e-10, 1.0));
    }

    #[test]
    fn point_run_never_perturbs() {
        let c = tiny(ObjectiveKind::Point, ProblemKind::Reaction);
        let mut t = Trainer::new(c).unwrap();
        let base = t.collocation().clone();
        for _ in 0..3 {
            let r = t.step().unwrap();
            assert_eq!(r.width, 0.0);
            assert_eq!(r.sets, vec![base.clone()]);
        }
    }

    #[test]
    fn lbfgs_run_reduces_loss() {
        let mut c = tiny(ObjectiveKind::Point, ProblemKind::Reaction);
        c.optimizer.kind = OptimizerKind::Lbfgs;
        let mut t = Trainer::new(c).unwrap();
        let first = t.step().unwrap().losses.total();
        let mut last = first;
        for _ in 0..10 {
            last = t.step().unwrap().losses.total();
        }
        assert!(last < first, "{last} vs {first}");
    }

    #[test]
    fn non_finite_start_aborts_with_checkpoint() {
        let c = tiny(ObjectiveKind::Point, ProblemKind::Reaction);
        let mut p = init(&c.model).unwrap();
        p.values[0] = f64::NAN;
        let err = Trainer::with_params(c, p.clone()).unwrap().train().unwrap_err();
        match err {
            Error::Aborted { iteration, checkpoint, .. } => {
                assert_eq!(iteration, 0);
                assert_eq!(checkpoint.iteration, 0);
                assert!(checkpoint.params.values[0].is_nan());
            }
            other => panic!("unexpected {other}"),
        }
    }
}
