use pinn_core::experiment::{report, run_dir, run_experiment, summary::promotion, validate_config, Stats};
use pinn_core::models::io::load_json;
use pinn_core::models::{Arch, ModelConfig};
use pinn_core::objectives::ObjectiveKind;
use pinn_core::par::Parallelism;
use pinn_core::pde::ProblemKind;
use pinn_core::trainer::{read_trace, Checkpoint, RunConfig, Trainer};
use pinn_core::Error;
use proptest::prelude::*;

fn small(problem: ProblemKind, kind: ObjectiveKind) -> RunConfig {
    let mut c = RunConfig::desk(problem, 5);
    c.model = ModelConfig::new(Arch::MlpTanh, vec![2, 10, 10, 1], 5).unwrap();
    c.objective.kind = kind;
    c.iterations = 60;
    c.eval_every = 20;
    c.optimizer.lr = 5e-3;
    c.mesh.interior = 9;
    c.mesh.initial = 9;
    c.mesh.boundary = 9;
    c.mesh.test = 17;
    c
}

#[test]
fn every_objective_lowers_the_loss_on_convection() {
    for kind in [ObjectiveKind::Point, ObjectiveKind::Region, ObjectiveKind::Gpinn] {
        let out = Trainer::new(small(ProblemKind::Convection, kind)).unwrap().train().unwrap();
        let (first, last) = (out.trace[0].loss_total, out.trace.last().unwrap().loss_total);
        assert!(last < first, "{kind:?}: {first} -> {last}");
        assert_eq!(out.trace.iter().map(|r| r.iter).collect::<Vec<_>>(), [20, 40, 60]);
    }
}

#[test]
fn gpinn_on_wave_is_refused_up_front() {
    let r = Trainer::new(small(ProblemKind::Wave, ObjectiveKind::Gpinn)).and_then(|t| t.train());
    assert!(matches!(r, Err(Error::Capability(_))), "{r:?}");
}

#[test]
fn sequential_and_parallel_runs_are_bit_identical() {
    let mut a = small(ProblemKind::Reaction, ObjectiveKind::Region);
    a.iterations = 20;
    a.parallelism = Parallelism::Sequential;
    let mut b = a.clone();
    b.parallelism = Parallelism::Parallel;
    let ta = Trainer::new(a).unwrap().train().unwrap();
    let tb = Trainer::new(b).unwrap().train().unwrap();
    assert_eq!(ta.params, tb.params);
    assert_eq!(ta.sigma.to_bits(), tb.sigma.to_bits());
}

#[test]
fn nan_parameters_abort_with_a_usable_checkpoint() {
    let c = small(ProblemKind::Reaction, ObjectiveKind::Point);
    let mut params = pinn_core::models::init(&c.model).unwrap();
    params.values[0] = f64::NAN;
    let err = Trainer::with_params(c.clone(), params).unwrap().train().unwrap_err();
    let Error::Aborted { iteration, checkpoint, .. } = err else {
        panic!("expected an abort, got {err:?}");
    };
    assert_eq!(iteration, 0);
    let cp: Checkpoint = *checkpoint;
    let back: RunConfig = serde_json::from_value(cp.run_config).unwrap();
    assert_eq!(back, c);
}

#[test]
fn experiment_directory_is_self_describing() {
    let text = r#"
name = "pipeline"
problem = "convection"
seeds = [3, 4]
iterations = 10
eval_every = 5
[model]
widths = [2, 6, 6, 1]
[mesh]
interior = 5
initial = 5
boundary = 5
test = 9
[[arms]]
name = "point"
objective = { kind = "point" }
[[arms]]
name = "region"
objective = { kind = "region" }
[[arms]]
name = "gpinn"
objective = { kind = "gpinn" }
"#;
    let spec = validate_config(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let table = run_experiment(&spec, dir.path(), None).unwrap();
    assert_eq!(table.arms.len(), 3);
    assert_eq!(table.aborted(), 0);
    for arm in &spec.arms {
        for &s in &spec.seeds {
            let d = run_dir(dir.path(), &arm.name, s);
            let rows = read_trace(&d.join("trace.csv")).unwrap();
            assert_eq!(rows.last().unwrap().iter, 10);
            let run: RunConfig = serde_json::from_str(&std::fs::read_to_string(d.join("run_config.json")).unwrap()).unwrap();
            assert_eq!((run.seed, run.model.init_seed), (s, s));
            let (cfg, params) = load_json(&d.join("params.json")).unwrap();
            assert_eq!(cfg.layer_widths, run.model.layer_widths);
            assert_eq!(params.len(), cfg.param_count());
        }
    }
    // the point arm is its own reference
    let p = table.arms[0].promotion.unwrap();
    assert_eq!(p.rmse, Some(0.0));
    assert_eq!(report(dir.path()).unwrap(), table);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stats_are_ordered(v in prop::collection::vec(-1e6f64..1e6, 1..30)) {
        let s = Stats::of(&v).unwrap();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.median && s.median <= hi);
        prop_assert!(lo - 1e-9 <= s.mean && s.mean <= hi + 1e-9);
        prop_assert!(s.std >= 0.0);
    }

    #[test]
    fn self_promotion_is_zero(p in 1e-12f64..1e6) {
        prop_assert_eq!(promotion(p, p), Some(0.0));
    }
}
