//! Relative error metrics and prediction dumps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PdeProblem, Point};
use crate::error::{Error, Result};
use crate::models::{batched, FlatParams, ModelConfig};
use crate::par::Parallelism;

pub const PREDICT_CHUNK: usize = 512;

/// Weighted loss terms of one evaluation. `reg` holds the residual-gradient
/// regularizer and is zero for the other objectives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub eq: f64,
    pub ic: f64,
    pub bc: f64,
    pub reg: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.eq + self.ic + self.bc + self.reg
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub train_loss: f64,
    pub loss_eq: f64,
    pub loss_ic: f64,
    pub loss_bc: f64,
    pub rmae: f64,
    pub rmse: f64,
}

/// `(rMAE, rMSE)`, both with the outer square root.
pub fn relative_errors(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            what: "prediction count",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let (mut ae, mut a, mut se, mut s) = (0.0, 0.0, 0.0, 0.0);
    for (p, u) in pred.iter().zip(truth) {
        let e = p - u;
        ae += e.abs();
        a += u.abs();
        se += e * e;
        s += u * u;
    }
    if a == 0.0 || truth.is_empty() {
        return Err(Error::DegenerateReference("rMAE"));
    }
    if s == 0.0 {
        return Err(Error::DegenerateReference("rMSE"));
    }
    Ok(((ae / a).sqrt(), (se / s).sqrt()))
}

pub struct Predictions {
    pub points: Vec<Point>,
    pub pred: Vec<f64>,
    pub truth: Vec<f64>,
}

pub fn predict_on(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    mesh: &[Point],
    par: Parallelism,
) -> Result<Predictions> {
    let pred = batched::predict(config, params, &super::mesh::flatten(mesh), PREDICT_CHUNK, par)?;
    let truth = mesh.iter().map(|p| problem.analytic(p[0], p[1])).collect();
    Ok(Predictions {
        points: mesh.to_vec(),
        pred,
        truth,
    })
}

pub fn evaluate_metrics(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    mesh: &[Point],
    losses: LossTerms,
    par: Parallelism,
) -> Result<MetricsReport> {
    if mesh.is_empty() {
        return Err(Error::Config("empty test mesh".into()));
    }
    let p = predict_on(problem, config, params, mesh, par)?;
    let (rmae, rmse) = relative_errors(&p.pred, &p.truth)?;
    Ok(MetricsReport {
        train_loss: losses.total(),
        loss_eq: losses.eq,
        loss_ic: losses.ic,
        loss_bc: losses.bc,
        rmae,
        rmse,
    })
}

pub fn write_predictions_csv(path: &Path, p: &Predictions) -> Result<()> {
    let err = |e: csv::Error| Error::Format {
        what: "predictions csv",
        detail: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["x", "t", "u_pred", "u_true"]).map_err(err)?;
    for ((pt, u), v) in p.points.iter().zip(&p.pred).zip(&p.truth) {
        w.write_record([pt[0], pt[1], *u, *v].map(|f| format!("{f:e}")))
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics_json(path: &Path, m: &MetricsReport) -> Result<()> {
    let text = serde_json::to_string_pretty(m)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{test_mesh, Overrides, ProblemKind};

    #[test]
    fn exact_and_zero_predictors() {
        let truth = [0.3, -1.2, 2.0, 0.0];
        assert_eq!(relative_errors(&truth, &truth).unwrap(), (0.0, 0.0));
        let (_, rmse) = relative_errors(&[0.0; 4], &truth).unwrap();
        assert!((rmse - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_offset_on_unit_field() {
        let truth = vec![1.0; 50];
        let pred = vec![1.1; 50];
        let (rmae, rmse) = relative_errors(&pred, &truth).unwrap();
        assert!((rmse - 0.1).abs() < 1e-12);
        assert!((rmae - 0.1_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_is_degenerate() {
        assert!(matches!(
            relative_errors(&[1.0, 2.0], &[0.0, 0.0]),
            Err(Error::DegenerateReference(_))
        ));
    }

    #[test]
    fn zero_network_has_unit_rmse_on_every_problem() {
        let cfg = ModelConfig::new(crate::models::Arch::MlpTanh, vec![2, 4, 1], 0).unwrap();
        let params = FlatParams::zeros(&cfg).unwrap();
        for kind in ProblemKind::ALL {
            let p = PdeProblem::new(kind, Overrides::default());
            let mesh = test_mesh(&p, 101).unwrap();
            let m = evaluate_metrics(&p, &cfg, &params, &mesh, LossTerms::default(), Parallelism::Parallel).unwrap();
            assert!((m.rmse - 1.0).abs() < 1e-12 && (m.rmae - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn predictions_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = Predictions {
            points: vec![[0.0, 0.5], [1.0, 0.25]],
            pred: vec![0.1, 0.2],
            truth: vec![0.0, 0.3],
        };
        write_predictions_csv(&path, &p).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,t,u_pred,u_true");
        assert_eq!(lines.len(), 3);
    }
}
