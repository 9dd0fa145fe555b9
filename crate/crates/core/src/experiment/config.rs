//! The experiment document: a versioned TOML file naming the shared run
//! settings, the seeds, and the arms that differ from them.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Arch, ModelConfig, Preset};
use crate::objectives::{ObjectiveKind, ObjectiveSpec, RegionMode};
use crate::par::Parallelism;
use crate::pde::ProblemKind;
use crate::trainer::{MeshConfig, OptimizerConfig, OptimizerKind, RunConfig, SigmaMode, TrustConfig};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Text,
    Json,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub name: String,
    /// Template; seeds are filled in by [`Arm::config_for`].
    pub config: RunConfig,
}

impl Arm {
    pub fn config_for(&self, seed: u64) -> RunConfig {
        let mut c = self.config.clone();
        c.seed = seed;
        c.model.init_seed = seed;
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    pub out_dir: Option<PathBuf>,
    pub report: ReportFormat,
}

impl ExperimentSpec {
    pub fn arm(&self, name: &str) -> Option<&Arm> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// Replaces every arm's widths with a named preset.
    pub fn apply_preset(&mut self, preset: Preset) {
        for a in &mut self.arms {
            a.config.model.layer_widths = preset.widths();
        }
    }
}

// Raw documents: every field optional so that missing values can be listed
// together instead of failing on the first one.

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(skip_serializing_if = "Option::is_none")]
    arch: Option<Arch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    widths: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    #[serde(skip_serializing_if = "Option::is_none")]
    interior: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<OptimizerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lbfgs_history: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrust {
    #[serde(skip_serializing_if = "Option::is_none")]
    r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_mode: Option<SigmaMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    width_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    width_cap: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<ObjectiveKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_eq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_ic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_bc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gpinn_lambda: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    region_mode: Option<RegionMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturb_constraints: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<ProblemKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eval_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parallelism: Option<Parallelism>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<RawModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mesh: Option<RawMesh>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimizer: Option<RawOptimizer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trust: Option<RawTrust>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<RawObjective>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    schema_version: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<ReportFormat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<ProblemKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eval_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parallelism: Option<Parallelism>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<RawModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mesh: Option<RawMesh>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimizer: Option<RawOptimizer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trust: Option<RawTrust>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<RawObjective>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arms: Option<Vec<RawRun>>,
}

/// Field-wise "take mine, else the base's".
trait Overlay: Sized {
    fn over(self, base: Self) -> Self;
}

impl<T: Overlay> Overlay for Option<T> {
    fn over(self, base: Self) -> Self {
        match (self, base) {
            (Some(a), Some(b)) => Some(a.over(b)),
            (a, b) => a.or(b),
        }
    }
}

macro_rules! overlay_leaves {
    ($($t:ty),*) => {$(
        impl Overlay for $t {
            fn over(self, _base: Self) -> Self {
                self
            }
        }
    )*};
}
overlay_leaves!(String, ProblemKind, f64, usize, bool, Parallelism, Arch, Preset, Vec<usize>, OptimizerKind, SigmaMode, ObjectiveKind, RegionMode, [f64; 2]);

macro_rules! overlay_struct {
    ($t:ident { $($f:ident),* }) => {
        impl Overlay for $t {
            fn over(self, base: Self) -> Self {
                $t { $($f: self.$f.over(base.$f)),* }
            }
        }
    };
}
overlay_struct!(RawModel { arch, preset, widths });
overlay_struct!(RawMesh { interior, initial, boundary, test });
overlay_struct!(RawOptimizer { kind, lr, lbfgs_history });
overlay_struct!(RawTrust { r0, t0, sigma_mode, width_floor, width_cap });
overlay_struct!(RawObjective { kind, lambda_eq, lambda_ic, lambda_bc, gpinn_lambda, region_mode, perturb_constraints, samples });
overlay_struct!(RawRun { name, problem, coefficient, iterations, eval_every, parallelism, model, mesh, optimizer, trust, objective });

impl RawDoc {
    fn base(&self) -> RawRun {
        RawRun {
            name: None,
            problem: self.problem,
            coefficient: self.coefficient,
            iterations: self.iterations,
            eval_every: self.eval_every,
            parallelism: self.parallelism,
            model: self.model.clone(),
            mesh: self.mesh.clone(),
            optimizer: self.optimizer.clone(),
            trust: self.trust.clone(),
            objective: self.objective.clone(),
        }
    }
}

fn default_arms() -> Vec<RawRun> {
    [ObjectiveKind::Point, ObjectiveKind::Region]
        .into_iter()
        .map(|kind| RawRun {
            name: Some(kind.name().to_string()),
            objective: Some(RawObjective {
                kind: Some(kind),
                ..RawObjective::default()
            }),
            ..RawRun::default()
        })
        .collect()
}

/// Resolves one merged arm, pushing `field: message` lines into `errs`.
fn resolve(raw: RawRun, at: &str, errs: &mut Vec<String>) -> Option<RunConfig> {
    let mut ok = true;
    let mut missing = |field: &str| {
        errs.push(format!("{at}{field}: required field missing"));
        ok = false;
    };
    let problem = raw.problem;
    if problem.is_none() {
        missing("problem");
    }
    if raw.model.is_none() {
        missing("model");
    }
    let name = raw.name.clone().unwrap_or_default();
    if name.is_empty() {
        missing("name");
    }
    let r0 = raw.trust.as_ref().and_then(|t| t.r0);
    if let Some(r0) = r0.filter(|r| !(*r >= 0.0)) {
        errs.push(format!("{at}trust.r0: must be non-negative, got {r0}"));
        ok = false;
    }
    let (problem, model) = (problem?, raw.model?);
    if !ok {
        return None;
    }

    let arch = model.arch.unwrap_or(Arch::MlpTanh);
    let widths = match (model.widths, model.preset) {
        (Some(w), None) => w,
        (None, p) => p.unwrap_or(Preset::Desk).widths(),
        (Some(_), Some(_)) => {
            errs.push(format!("{at}model: give either `widths` or `preset`, not both"));
            return None;
        }
    };
    let d = RunConfig::desk(problem, 0);
    let m = raw.mesh.unwrap_or_default();
    let o = raw.optimizer.unwrap_or_default();
    let t = raw.trust.unwrap_or_default();
    let j = raw.objective.unwrap_or_default();
    let dj = ObjectiveSpec::default();
    let config = RunConfig {
        problem,
        coefficient: raw.coefficient,
        model: ModelConfig {
            arch,
            layer_widths: widths,
            init_seed: 0,
        },
        objective: ObjectiveSpec {
            kind: j.kind.unwrap_or(dj.kind),
            lambda_eq: j.lambda_eq.unwrap_or(dj.lambda_eq),
            lambda_ic: j.lambda_ic.unwrap_or(dj.lambda_ic),
            lambda_bc: j.lambda_bc.unwrap_or(dj.lambda_bc),
            gpinn_lambda: j.gpinn_lambda.unwrap_or(dj.gpinn_lambda),
            region_mode: j.region_mode.unwrap_or(dj.region_mode),
            perturb_constraints: j.perturb_constraints.unwrap_or(dj.perturb_constraints),
            samples: j.samples.unwrap_or(dj.samples),
        },
        optimizer: OptimizerConfig {
            kind: o.kind.unwrap_or(d.optimizer.kind),
            lr: o.lr.unwrap_or(d.optimizer.lr),
            lbfgs_history: o.lbfgs_history.unwrap_or(d.optimizer.lbfgs_history),
        },
        iterations: raw.iterations.unwrap_or(d.iterations),
        trust: TrustConfig {
            r0: t.r0.unwrap_or(d.trust.r0),
            t0: t.t0.unwrap_or(d.trust.t0),
            sigma_mode: t.sigma_mode.unwrap_or(d.trust.sigma_mode),
            width_floor: t.width_floor.unwrap_or(d.trust.width_floor),
            width_cap: t.width_cap,
        },
        seed: 0,
        mesh: MeshConfig {
            interior: m.interior.unwrap_or(d.mesh.interior),
            initial: m.initial.unwrap_or(d.mesh.initial),
            boundary: m.boundary.unwrap_or(d.mesh.boundary),
            test: m.test.unwrap_or(d.mesh.test),
        },
        eval_every: raw.eval_every.unwrap_or(d.eval_every),
        parallelism: raw.parallelism.unwrap_or(d.parallelism),
    };
    if let Err(e) = config.validate() {
        errs.push(format!("{at}{e}"));
        return None;
    }
    Some(config)
}

/// Parses and validates an experiment document.
pub fn validate_config(text: &str) -> Result<ExperimentSpec> {
    let doc: RawDoc = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let mut errs = Vec::new();
    match doc.schema_version {
        None | Some(SCHEMA_VERSION) => {}
        Some(v) => errs.push(format!("schema_version: unsupported version {v}, expected {SCHEMA_VERSION}")),
    }
    let seeds = doc.seeds.clone().unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        errs.push("seeds: at least one seed is required".into());
    }
    let base = doc.base();
    let explicit_arms = doc.arms.is_some();
    let raw_arms = doc.arms.clone().unwrap_or_else(default_arms);
    if raw_arms.is_empty() {
        errs.push("arms: at least one arm is required".into());
    }
    let mut arms = Vec::new();
    let mut names = HashSet::new();
    for (i, raw) in raw_arms.into_iter().enumerate() {
        let label = raw.name.clone();
        let at = match (&label, explicit_arms) {
            (_, false) => String::new(),
            (Some(n), true) => format!("arms[{i}] ({n}): "),
            (None, true) => format!("arms[{i}]: "),
        };
        let mut local = Vec::new();
        let resolved = resolve(raw.over(base.clone()), &at, &mut local);
        for e in local {
            // the implicit arms share one base and would repeat its errors
            if !errs.contains(&e) {
                errs.push(e);
            }
        }
        if let Some(config) = resolved {
            let name = label.unwrap_or_default();
            if !names.insert(name.clone()) {
                errs.push(format!("{at}name: duplicate arm name `{name}`"));
            }
            arms.push(Arm { name, config });
        }
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs.join("\n")));
    }
    Ok(ExperimentSpec {
        name: doc.name.unwrap_or_else(|| "experiment".into()),
        seeds,
        arms,
        out_dir: doc.out_dir,
        report: doc.report.unwrap_or_default(),
    })
}

fn raw_of(arm: &Arm) -> RawRun {
    let c = &arm.config;
    let o = &c.objective;
    RawRun {
        name: Some(arm.name.clone()),
        problem: Some(c.problem),
        coefficient: c.coefficient,
        iterations: Some(c.iterations),
        eval_every: Some(c.eval_every),
        parallelism: Some(c.parallelism),
        model: Some(RawModel {
            arch: Some(c.model.arch),
            preset: None,
            widths: Some(c.model.layer_widths.clone()),
        }),
        mesh: Some(RawMesh {
            interior: Some(c.mesh.interior),
            initial: Some(c.mesh.initial),
            boundary: Some(c.mesh.boundary),
            test: Some(c.mesh.test),
        }),
        optimizer: Some(RawOptimizer {
            kind: Some(c.optimizer.kind),
            lr: Some(c.optimizer.lr),
            lbfgs_history: Some(c.optimizer.lbfgs_history),
        }),
        trust: Some(RawTrust {
            r0: Some(c.trust.r0),
            t0: Some(c.trust.t0),
            sigma_mode: Some(c.trust.sigma_mode),
            width_floor: Some(c.trust.width_floor),
            width_cap: c.trust.width_cap,
        }),
        objective: Some(RawObjective {
            kind: Some(o.kind),
            lambda_eq: Some(o.lambda_eq),
            lambda_ic: Some(o.lambda_ic),
            lambda_bc: Some(o.lambda_bc),
            gpinn_lambda: Some(o.gpinn_lambda),
            region_mode: Some(o.region_mode),
            perturb_constraints: Some(o.perturb_constraints),
            samples: Some(o.samples),
        }),
    }
}

/// Writes a fully explicit document that parses back to `spec`.
pub fn render(spec: &ExperimentSpec) -> String {
    let doc = RawDoc {
        schema_version: Some(SCHEMA_VERSION),
        name: Some(spec.name.clone()),
        seeds: Some(spec.seeds.clone()),
        out_dir: spec.out_dir.clone(),
        report: Some(spec.report),
        arms: Some(spec.arms.iter().map(raw_of).collect()),
        ..RawDoc::default()
    };
    toml::to_string(&doc).expect("experiment documents always serialize")
}
