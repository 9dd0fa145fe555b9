//! Per-arm statistics across seeds, computed from trace rows only.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentSpec;
use crate::objectives::ObjectiveKind;
use crate::pde::ProblemKind;
use crate::trainer::{RunConfig, TraceRow};

/// rMSE above this marks a run as stuck in the failure regime.
pub const FAILURE_RMSE: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Aborted { iteration: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub rmae: Option<f64>,
    pub rmse: Option<f64>,
    pub failure_mode: bool,
}

impl RunSummary {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Median, mean and sample standard deviation (zero for a single value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        let median = if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) };
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { median, mean, std })
    }
}

/// Relative improvement over the point arm, `(point − arm)/point`, on
/// medians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Promotion {
    pub loss: Option<f64>,
    pub rmae: Option<f64>,
    pub rmse: Option<f64>,
}

pub fn promotion(point: f64, arm: f64) -> Option<f64> {
    (point > 0.0).then(|| (point - arm) / point)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub name: String,
    pub problem: ProblemKind,
    pub kind: ObjectiveKind,
    pub r0: f64,
    pub t0: usize,
    pub lr: f64,
    pub iterations: usize,
    pub runs: Vec<RunSummary>,
    pub loss: Option<Stats>,
    pub rmae: Option<Stats>,
    pub rmse: Option<Stats>,
    pub promotion: Option<Promotion>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub name: String,
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmSummary>,
}

/// Summary of one run from its configuration and trace.
pub fn summarize_run(config: &RunConfig, rows: &[TraceRow], abort: Option<(usize, String)>) -> RunSummary {
    let last = rows.last();
    let status = match abort {
        Some((iteration, reason)) => RunStatus::Aborted { iteration, reason },
        None if last.is_some_and(|r| r.iter == config.iterations) => RunStatus::Completed,
        None => RunStatus::Aborted {
            iteration: last.map_or(0, |r| r.iter),
            reason: "trace ends before the last iteration".into(),
        },
    };
    let done = status == RunStatus::Completed;
    let pick = |f: fn(&TraceRow) -> f64| last.filter(|_| done).map(f);
    let rmse = pick(|r| r.rmse);
    let flaggable = matches!(config.problem, ProblemKind::Reaction | ProblemKind::Convection);
    RunSummary {
        seed: config.seed,
        status,
        iterations: last.map_or(0, |r| r.iter),
        final_loss: pick(|r| r.loss_total),
        rmae: pick(|r| r.rmae),
        rmse,
        failure_mode: flaggable && rmse.is_some_and(|e| e > FAILURE_RMSE),
    }
}

impl SummaryTable {
    /// `runs[i]` holds the run summaries of `spec.arms[i]`.
    pub fn build(spec: &ExperimentSpec, runs: Vec<Vec<RunSummary>>) -> Self {
        let mut arms: Vec<ArmSummary> = spec
            .arms
            .iter()
            .zip(runs)
            .map(|(arm, runs)| {
                let c = &arm.config;
                let done: Vec<&RunSummary> = runs.iter().filter(|r| r.completed()).collect();
                let col = |f: fn(&RunSummary) -> Option<f64>| Stats::of(&done.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
                ArmSummary {
                    name: arm.name.clone(),
                    problem: c.problem,
                    kind: c.objective.kind,
                    r0: c.trust.r0,
                    t0: c.trust.t0,
                    lr: c.optimizer.lr,
                    iterations: c.iterations,
                    loss: col(|r| r.final_loss),
                    rmae: col(|r| r.rmae),
                    rmse: col(|r| r.rmse),
                    failures: runs.iter().filter(|r| r.failure_mode).count(),
                    promotion: None,
                    runs,
                }
            })
            .collect();
        let references: Vec<Option<ArmSummary>> = arms
            .iter()
            .map(|a| {
                arms.iter()
                    .find(|p| p.kind == ObjectiveKind::Point && p.problem == a.problem)
                    .cloned()
            })
            .collect();
        for (a, p) in arms.iter_mut().zip(references) {
            let Some(p) = p else { continue };
            let med = |s: Option<Stats>| s.map(|s| s.median);
            let pair = |x: Option<Stats>, y: Option<Stats>| match (med(x), med(y)) {
                (Some(x), Some(y)) => promotion(x, y),
                _ => None,
            };
            a.promotion = Some(Promotion {
                loss: pair(p.loss, a.loss),
                rmae: pair(p.rmae, a.rmae),
                rmse: pair(p.rmse, a.rmse),
            });
        }
        Self {
            name: spec.name.clone(),
            seeds: spec.seeds.clone(),
            arms,
        }
    }

    pub fn aborted(&self) -> usize {
        self.arms.iter().flat_map(|a| &a.runs).filter(|r| !r.completed()).count()
    }

    /// Plain-text table, one row per arm.
    pub fn render_text(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut out = format!("experiment {}  seeds [{}]\n\n", self.name, seeds.join(", "));
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:<7} {:>8} {:>3} {:>5} {:>11} {:>11} {:>11} {:>21} {:>9} {:>8}",
            "arm", "problem", "kind", "r0", "T0", "runs", "loss", "rMAE", "rMSE", "rMSE mean ± std", "promo", "failures"
        );
        let num = |v: Option<Stats>| v.map_or("-".to_string(), |s| format!("{:.3e}", s.median));
        for a in &self.arms {
            let done = a.runs.iter().filter(|r| r.completed()).count();
            let spread = a.rmse.map_or("-".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.std));
            let promo = a
                .promotion
                .and_then(|p| p.rmse)
                .map_or("-".into(), |p| format!("{:.1}%", 100.0 * p));
            let _ = writeln!(
                out,
                "{:<12} {:<10} {:<7} {:>8.1e} {:>3} {:>5} {:>11} {:>11} {:>11} {:>21} {:>9} {:>8}",
                a.name,
                a.problem.name(),
                a.kind.name(),
                a.r0,
                a.t0,
                format!("{done}/{}", a.runs.len()),
                num(a.loss),
                num(a.rmae),
                num(a.rmse),
                spread,
                promo,
                format!("{}/{}", a.failures, a.runs.len()),
            );
        }
        out.push_str("\nloss, rMAE and rMSE are medians over completed seeds; promo is the rMSE gain over the point arm.\n");
        for a in &self.arms {
            for r in &a.runs {
                if let RunStatus::Aborted { iteration, reason } = &r.status {
                    let _ = writeln!(out, "aborted: {} seed {} at iteration {iteration}: {reason}", a.name, r.seed);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::validate_config;

    fn row(iter: usize, rmse: f64) -> TraceRow {
        TraceRow {
            iter,
            loss_total: 2.0 * rmse,
            loss_eq: rmse,
            loss_ic: rmse,
            loss_bc: 0.0,
            sigma: 1.0,
            eff_width: 0.0,
            rmae: rmse,
            rmse,
            wall_ms: 1.0,
        }
    }

    #[test]
    fn stats_use_sample_std() {
        let s = Stats::of(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert!((s.mean - 7.0 / 3.0).abs() < 1e-15);
        assert!((s.std - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stats::of(&[3.0, 1.0]).unwrap().median, 2.0);
        assert_eq!(Stats::of(&[5.0]).unwrap().std, 0.0);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn identical_arms_have_zero_promotion() {
        let text = "problem = \"reaction\"\nseeds = [1, 2]\n[model]\npreset = \"desk\"\n\
                    [[arms]]\nname = \"a\"\n[[arms]]\nname = \"b\"\n";
        let spec = validate_config(text).unwrap();
        let runs: Vec<Vec<RunSummary>> = spec
            .arms
            .iter()
            .map(|arm| {
                spec.seeds
                    .iter()
                    .map(|&s| summarize_run(&arm.config_for(s), &[row(5000, 0.5 + s as f64 * 0.1)], None))
                    .collect()
            })
            .collect();
        let t = SummaryTable::build(&spec, runs);
        for a in &t.arms {
            let p = a.promotion.unwrap();
            assert_eq!((p.loss, p.rmae, p.rmse), (Some(0.0), Some(0.0), Some(0.0)));
        }
        assert!(t.render_text().contains("0.0%"));
    }

    #[test]
    fn failure_flag_needs_high_rmse_on_flaggable_problems() {
        let spec = validate_config("problem = \"reaction\"\n[model]\npreset = \"desk\"\n").unwrap();
        let c = spec.arms[0].config_for(0);
        assert!(summarize_run(&c, &[row(5000, 0.95)], None).failure_mode);
        assert!(!summarize_run(&c, &[row(5000, 0.5)], None).failure_mode);
        let mut w = c.clone();
        w.problem = ProblemKind::Wave;
        assert!(!summarize_run(&w, &[row(5000, 0.95)], None).failure_mode);
    }

    #[test]
    fn short_or_aborted_traces_are_not_completed() {
        let spec = validate_config("problem = \"reaction\"\n[model]\npreset = \"desk\"\n").unwrap();
        let c = spec.arms[0].config_for(0);
        let short = summarize_run(&c, &[row(100, 0.5)], None);
        assert!(!short.completed());
        assert_eq!(short.rmse, None);
        let aborted = summarize_run(&c, &[row(5000, 0.5)], Some((12, "nan".into())));
        assert!(matches!(aborted.status, RunStatus::Aborted { iteration: 12, .. }));
    }

    #[test]
    fn promotion_formula() {
        assert_eq!(promotion(0.981, 0.095).map(|p| (p * 100.0).round()), Some(90.0));
        assert_eq!(promotion(0.0, 0.1), None);
    }
}
