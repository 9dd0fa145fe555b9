use serde::{Deserialize, Serialize};

use super::trust::{SigmaMode, WIDTH_FLOOR};
use crate::error::{Error, Result};
use crate::models::{Arch, ModelConfig, Preset};
use crate::objectives::ObjectiveSpec;
use crate::par::Parallelism;
use crate::pde::{Overrides, PdeProblem, ProblemKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Lbfgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Adam step size; ignored by L-BFGS.
    pub lr: f64,
    pub lbfgs_history: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            lbfgs_history: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustConfig {
    pub r0: f64,
    pub t0: usize,
    pub sigma_mode: SigmaMode,
    pub width_floor: f64,
    /// Defaults to the smallest side of the problem domain.
    pub width_cap: Option<f64>,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self {
            r0: 1e-4,
            t0: 10,
            sigma_mode: SigmaMode::Raw,
            width_floor: WIDTH_FLOOR,
            width_cap: None,
        }
    }
}

/// Collocation and evaluation mesh sizes. `interior` and `test` are points
/// per axis; `initial` and `boundary` are counts per constraint line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub interior: usize,
    pub initial: usize,
    pub boundary: usize,
    pub test: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            interior: 51,
            initial: 51,
            boundary: 51,
            test: 101,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub coefficient: Option<f64>,
    pub model: ModelConfig,
    pub objective: ObjectiveSpec,
    pub optimizer: OptimizerConfig,
    pub iterations: usize,
    pub trust: TrustConfig,
    pub seed: u64,
    pub mesh: MeshConfig,
    pub eval_every: usize,
    pub parallelism: Parallelism,
}

impl RunConfig {
    /// Desk-scale defaults for `problem` with the given seed.
    pub fn desk(problem: ProblemKind, seed: u64) -> Self {
        Self {
            problem,
            coefficient: None,
            model: ModelConfig::preset(Arch::MlpTanh, Preset::Desk, seed),
            objective: ObjectiveSpec::default(),
            optimizer: OptimizerConfig::default(),
            iterations: 5000,
            trust: TrustConfig::default(),
            seed,
            mesh: MeshConfig::default(),
            eval_every: 100,
            parallelism: Parallelism::default(),
        }
    }

    pub fn problem(&self) -> PdeProblem {
        PdeProblem::new(
            self.problem,
            Overrides {
                coefficient: self.coefficient,
            },
        )
    }

    pub fn width_cap(&self) -> f64 {
        self.trust.width_cap.unwrap_or_else(|| self.problem().domain.min_side())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.objective.validate()?;
        if self.model.input_dim() != 2 {
            return Err(Error::Config(format!(
                "problems take (x, t); model input width is {}",
                self.model.input_dim()
            )));
        }
        if let Some(c) = self.coefficient {
            if !c.is_finite() {
                return Err(Error::Config(format!("coefficient must be finite, got {c}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        let t = &self.trust;
        if !(t.r0 >= 0.0 && t.r0.is_finite()) {
            return Err(Error::Config(format!("r0 must be finite and non-negative, got {}", t.r0)));
        }
        if t.t0 == 0 {
            return Err(Error::Config("t0 must be at least 1".into()));
        }
        let cap = self.width_cap();
        if !(t.width_floor > 0.0 && cap >= t.width_floor && cap.is_finite()) {
            return Err(Error::Config(format!(
                "width clamps must satisfy 0 < floor <= cap, got [{}, {cap}]",
                t.width_floor
            )));
        }
        let o = &self.optimizer;
        if !(o.lr >= 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and non-negative, got {}", o.lr)));
        }
        if o.kind == OptimizerKind::Lbfgs && o.lbfgs_history == 0 {
            return Err(Error::Config("lbfgs_history must be at least 1".into()));
        }
        let m = &self.mesh;
        if m.interior < 2 || m.initial < 2 || m.boundary < 2 || m.test < 2 {
            return Err(Error::Config(format!("mesh sizes must be at least 2, got {m:?}")));
        }
        if self.objective.uses_gradient_terms() {
            self.problem().check_gradient_terms()?;
        }
        Ok(())
    }
}
