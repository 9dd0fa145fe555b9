//! Point, region and gradient-enhanced loss constructions.
//!
//! Two implementations compute the same losses: [`tape`] builds one scalar
//! graph per evaluation and is the reference; [`batched`] pushes whole point
//! sets through [`crate::models::batched`] and is what training uses.

pub mod batched;
pub mod oracle;
pub mod sample;
pub mod tape;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batched::{loss_and_grad, loss_and_grad_many};
pub use oracle::{
    gauss_legendre, quadrature_region_gradient, region_gradient_quadrature, sample_point_gradients,
};
pub use sample::{sample_region, PerturbedSet};
pub use tape::{gpinn_loss, interior_point_loss, point_loss, region_loss, tape_loss_and_grad, LossNodes};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    #[default]
    Point,
    Region,
    Gpinn,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Point => "point",
            ObjectiveKind::Region => "region",
            ObjectiveKind::Gpinn => "gpinn",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMode {
    /// Offsets in `[0, h]`.
    #[default]
    OneSided,
    /// Offsets in `[−h/2, h/2]`.
    Centered,
}

impl RegionMode {
    /// Maps a unit draw `u ∈ [0, 1)` to an offset for width `h`.
    pub fn offset(self, u: f64, h: f64) -> f64 {
        match self {
            RegionMode::OneSided => u * h,
            RegionMode::Centered => (u - 0.5) * h,
        }
    }

    /// Integration interval of the offset for width `h`.
    pub fn interval(self, h: f64) -> (f64, f64) {
        match self {
            RegionMode::OneSided => (0.0, h),
            RegionMode::Centered => (-0.5 * h, 0.5 * h),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub lambda_eq: f64,
    pub lambda_ic: f64,
    pub lambda_bc: f64,
    /// Weights of `(∂F/∂x)²` and `(∂F/∂t)²`; read only by `gpinn`.
    pub gpinn_lambda: [f64; 2],
    pub region_mode: RegionMode,
    /// Perturb initial and boundary points too (along their manifold).
    pub perturb_constraints: bool,
    /// Independent perturbed sets averaged per iteration.
    pub samples: usize,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::Point,
            lambda_eq: 1.0,
            lambda_ic: 1.0,
            lambda_bc: 1.0,
            gpinn_lambda: [1.0, 1.0],
            region_mode: RegionMode::OneSided,
            perturb_constraints: true,
            samples: 1,
        }
    }
}

impl ObjectiveSpec {
    pub fn of_kind(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Only the equation term, no initial or boundary terms.
    pub fn interior_only(mut self) -> Self {
        self.lambda_ic = 0.0;
        self.lambda_bc = 0.0;
        self
    }

    pub fn uses_gradient_terms(&self) -> bool {
        self.kind == ObjectiveKind::Gpinn && self.gpinn_lambda.iter().any(|&w| w != 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_eq", self.lambda_eq),
            ("lambda_ic", self.lambda_ic),
            ("lambda_bc", self.lambda_bc),
            ("gpinn_lambda[0]", self.gpinn_lambda[0]),
            ("gpinn_lambda[1]", self.gpinn_lambda[1]),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative weight, got {w}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("samples per region must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_term(name: &str, weight: f64, count: usize) -> Result<()> {
    if weight > 0.0 && count == 0 {
        return Err(Error::Config(format!("{name} term has positive weight but no points")));
    }
    Ok(())
}
