//! Runs every (arm, seed) pair of an experiment and writes its artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! experiment.toml  summary.json  summary.txt
//! <arm>/seed-<s>/  run_config.json  trace.csv  checkpoint.json
//!                  params.json  predictions.csv  metrics.json   (completed)
//!                  abort.json                                   (aborted)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{render, validate_config, ExperimentSpec};
use super::summary::{summarize_run, RunSummary, SummaryTable};
use crate::error::{Error, Result};
use crate::models::io::save_json;
use crate::par::{self, Parallelism};
use crate::pde::metrics::{predict_on, write_metrics_json, write_predictions_csv};
use crate::pde::test_mesh;
use crate::trainer::{read_trace, write_trace, Checkpoint, RunConfig, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AbortRecord {
    iteration: usize,
    reason: String,
}

pub fn run_dir(out: &Path, arm: &str, seed: u64) -> PathBuf {
    out.join(arm).join(format!("seed-{seed}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Trains one run. Numeric aborts are recorded in the summary; anything else
/// (bad config, i/o) is returned as an error.
fn run_one(config: RunConfig, dir: &Path) -> Result<RunSummary> {
    create_dir(dir)?;
    write_json(&dir.join("run_config.json"), &config)?;
    let mut rows = Vec::new();
    let result = Trainer::new(config.clone())?.train_observed(|r| rows.push(*r));
    write_trace(&dir.join("trace.csv"), &rows)?;
    match result {
        Ok(out) => {
            let checkpoint = Checkpoint {
                iteration: config.iterations,
                run_config: serde_json::to_value(&config)?,
                params: out.params.clone(),
            };
            write_json(&dir.join("checkpoint.json"), &checkpoint)?;
            save_json(&dir.join("params.json"), &config.model, &out.params)?;
            let problem = config.problem();
            let mesh = test_mesh(&problem, config.mesh.test)?;
            let pred = predict_on(&problem, &config.model, &out.params, &mesh, config.parallelism)?;
            write_predictions_csv(&dir.join("predictions.csv"), &pred)?;
            write_metrics_json(&dir.join("metrics.json"), &out.final_metrics)?;
            Ok(summarize_run(&config, &rows, None))
        }
        Err(Error::Aborted {
            iteration,
            reason,
            checkpoint,
        }) => {
            write_json(&dir.join("checkpoint.json"), &checkpoint)?;
            let record = AbortRecord { iteration, reason };
            write_json(&dir.join("abort.json"), &record)?;
            Ok(summarize_run(&config, &rows, Some((record.iteration, record.reason))))
        }
        Err(e) => Err(e),
    }
}

fn write_summary(out: &Path, table: &SummaryTable) -> Result<()> {
    write_json(&out.join("summary.json"), table)?;
    let path = out.join("summary.txt");
    std::fs::write(&path, table.render_text()).map_err(|e| Error::io(path, e))
}

/// Trains every arm over every seed on a pool of `threads` workers and
/// writes all artifacts under `out`. Aborted runs do not stop the others;
/// check [`SummaryTable::aborted`].
pub fn run_experiment(spec: &ExperimentSpec, out: &Path, threads: Option<usize>) -> Result<SummaryTable> {
    create_dir(out)?;
    let path = out.join("experiment.toml");
    std::fs::write(&path, render(spec)).map_err(|e| Error::io(path, e))?;
    let jobs: Vec<(usize, u64)> = (0..spec.arms.len())
        .flat_map(|a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = par::with_threads(threads, || {
        par::map_slice(&jobs, Parallelism::Parallel, |&(a, seed)| {
            let arm = &spec.arms[a];
            run_one(arm.config_for(seed), &run_dir(out, &arm.name, seed))
        })
    });
    let mut runs: Vec<Vec<RunSummary>> = vec![Vec::new(); spec.arms.len()];
    for (&(a, _), r) in jobs.iter().zip(results) {
        runs[a].push(r?);
    }
    let table = SummaryTable::build(spec, runs);
    write_summary(out, &table)?;
    Ok(table)
}

/// Rebuilds the summary of a finished experiment directory from its
/// `experiment.toml`, run configs and trace CSVs.
pub fn report(dir: &Path) -> Result<SummaryTable> {
    let path = dir.join("experiment.toml");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let spec = validate_config(&text)?;
    let mut runs = Vec::with_capacity(spec.arms.len());
    for arm in &spec.arms {
        let mut arm_runs = Vec::with_capacity(spec.seeds.len());
        for &seed in &spec.seeds {
            let d = run_dir(dir, &arm.name, seed);
            let config: RunConfig = read_json(&d.join("run_config.json"))?;
            let rows = read_trace(&d.join("trace.csv"))?;
            let abort_path = d.join("abort.json");
            let abort = if abort_path.exists() {
                let r: AbortRecord = read_json(&abort_path)?;
                Some((r.iteration, r.reason))
            } else {
                None
            };
            arm_runs.push(summarize_run(&config, &rows, abort));
        }
        runs.push(arm_runs);
    }
    Ok(SummaryTable::build(&spec, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
name = "tiny"
problem = "reaction"
seeds = [0, 1]
iterations = 4
eval_every = 2

[model]
widths = [2, 5, 1]

[mesh]
interior = 5
initial = 5
boundary = 5
test = 7

[[arms]]
name = "point"
objective = { kind = "point" }

[[arms]]
name = "region"
objective = { kind = "region" }
trust = { t0 = 5 }
"#;

    #[test]
    fn artifacts_and_report_agree() {
        let spec = validate_config(TINY).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let table = run_experiment(&spec, dir.path(), Some(2)).unwrap();
        assert_eq!(table.aborted(), 0);
        for arm in ["point", "region"] {
            for s in [0, 1] {
                let d = run_dir(dir.path(), arm, s);
                for f in ["trace.csv", "run_config.json", "checkpoint.json", "params.json", "predictions.csv", "metrics.json"] {
                    assert!(d.join(f).exists(), "{arm}/{s}/{f}");
                }
            }
        }
        assert_eq!(table.arms[1].t0, 5);
        assert_eq!(report(dir.path()).unwrap(), table);
        let stored: SummaryTable = read_json(&dir.path().join("summary.json")).unwrap();
        assert_eq!(stored, table);
    }
}
