//! Test oracles for the region gradient: tensor-product Gauss-Legendre
//! quadrature and a Monte Carlo sampler over the same neighbourhood.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;

use super::sample::map_into;
use super::{interior_point_loss, ObjectiveSpec, RegionMode};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::models::{FlatParams, ModelConfig, TapeModel};
use crate::par::{self, Parallelism};
use crate::pde::{PdeProblem, Point, T, X};

pub const ORACLE_MAX_PARAMS: usize = 100;
pub const ORACLE_NODES: usize = 16;

/// Nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<Vec<(f64, f64)>> {
    let n = NonZeroUsize::new(n).ok_or_else(|| Error::Config("quadrature needs at least one node".into()))?;
    Ok(GaussLegendre::new(n).as_node_weight_pairs().to_vec())
}

/// Average of `f(x + ξ)` over the offset box `ξ_j ∈ mode.interval(h)` for
/// `j ∈ dims` (other coordinates stay fixed), by an `n`-point rule per
/// dimension.
pub fn quadrature_region_gradient<F>(f: F, x: &[f64], h: f64, mode: RegionMode, dims: &[usize], n: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let rule = gauss_legendre(n)?;
    let (a, b) = mode.interval(h);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc: Option<Vec<f64>> = None;
    let mut idx = vec![0usize; dims.len()];
    loop {
        let mut y = x.to_vec();
        let mut w = 1.0;
        for (k, &d) in dims.iter().enumerate() {
            let (node, weight) = rule[idx[k]];
            y[d] += mid + half * node;
            w *= 0.5 * weight;
        }
        let g = f(&y)?;
        match acc.as_mut() {
            None => acc = Some(g.iter().map(|v| w * v).collect()),
            Some(a) => {
                for (s, v) in a.iter_mut().zip(&g) {
                    *s += w * v;
                }
            }
        }
        // odometer over the tensor grid
        let mut k = 0;
        loop {
            if k == dims.len() {
                return Ok(acc.unwrap_or_default());
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Value and parameter gradient of the single-point equation loss at `x`.
pub fn interior_point_gradient(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    x: Point,
    spec: &ObjectiveSpec,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let model = TapeModel::bind(&tape, config, params)?;
    let loss = interior_point_loss(&model, problem, x, spec)?;
    Ok((loss.value(), loss.backward()?))
}

fn moved(problem: &PdeProblem, y: &[f64]) -> Point {
    let p = problem.periodic_x();
    [map_into(&problem.domain, p, X, y[X]), map_into(&problem.domain, p, T, y[T])]
}

/// Region-averaged gradient of the single-point equation loss, by an
/// `n`-point Gauss-Legendre rule per input dimension.
pub fn region_gradient_quadrature_n(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    x: Point,
    h: f64,
    spec: &ObjectiveSpec,
    n: usize,
) -> Result<Vec<f64>> {
    if params.len() > ORACLE_MAX_PARAMS {
        return Err(Error::OracleGuard(format!(
            "quadrature oracle limited to {ORACLE_MAX_PARAMS} parameters, model has {}",
            params.len()
        )));
    }
    let f = |y: &[f64]| interior_point_gradient(problem, config, params, moved(problem, y), spec).map(|r| r.1);
    quadrature_region_gradient(f, &x, h, spec.region_mode, &[X, T], n)
}

pub fn region_gradient_quadrature(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    x: Point,
    h: f64,
    spec: &ObjectiveSpec,
) -> Result<Vec<f64>> {
    region_gradient_quadrature_n(problem, config, params, x, h, spec, ORACLE_NODES)
}

/// `n` single-draw gradients at `x + ξ`. Offsets are drawn up front (`ξ_x`
/// then `ξ_t` per sample) and the gradients evaluated afterwards, possibly
/// in parallel.
#[allow(clippy::too_many_arguments)]
pub fn sample_point_gradients<R: Rng + ?Sized>(
    problem: &PdeProblem,
    config: &ModelConfig,
    params: &FlatParams,
    x: Point,
    h: f64,
    spec: &ObjectiveSpec,
    n: usize,
    rng: &mut R,
    mode: Parallelism,
) -> Result<Vec<Vec<f64>>> {
    let offsets: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a = spec.region_mode.offset(rng.random::<f64>(), h);
            let b = spec.region_mode.offset(rng.random::<f64>(), h);
            [a, b]
        })
        .collect();
    let grads = par::map_slice(&offsets, mode, |xi| {
        let y = [x[X] + xi[X], x[T] + xi[T]];
        interior_point_gradient(problem, config, params, moved(problem, &y), spec).map(|r| r.1)
    });
    grads.into_iter().collect()
}

/// Per-coordinate mean and population standard deviation.
pub fn mean_and_std(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let dim = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((q, v), m) in var.iter_mut().zip(s).zip(&mean) {
            *q += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|q| (q / n).sqrt()).collect();
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init, Arch};
    use crate::objectives::ObjectiveKind;
    use crate::pde::{Overrides, ProblemKind};

    #[test]
    fn rule_integrates_cubics_exactly() {
        let r = gauss_legendre(2).unwrap();
        let s: f64 = r.iter().map(|(x, w)| w * x.powi(3) + w * x * x).sum();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_one_parameter_region() {
        // L = (θ(x+ξ))², θ = 1, x = 0.5, ξ ∈ [0, 0.2]
        let g = quadrature_region_gradient(
            |y| Ok(vec![2.0 * y[0] * y[0]]),
            &[0.5],
            0.2,
            RegionMode::OneSided,
            &[0],
            16,
        )
        .unwrap();
        let exact = 2.0 * (0.25 + 0.1 + 0.04 / 3.0);
        assert!((g[0] - exact).abs() < 1e-14);
        assert!((exact - 0.726_667).abs() < 1e-6);
    }

    #[test]
    fn collapsing_region_is_the_point_gradient() {
        let p = PdeProblem::new(ProblemKind::Reaction, Overrides::default());
        let cfg = ModelConfig::new(Arch::MlpTanh, vec![2, 3, 1], 1).unwrap();
        let params = init(&cfg).unwrap();
        let spec = ObjectiveSpec::of_kind(ObjectiveKind::Region);
        let x = [2.0, 0.4];
        let q = region_gradient_quadrature(&p, &cfg, &params, x, 1e-12, &spec).unwrap();
        let (_, g) = interior_point_gradient(&p, &cfg, &params, x, &spec).unwrap();
        for (a, b) in q.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn refinement_changes_little_for_smooth_integrands() {
        let p = PdeProblem::new(ProblemKind::Reaction, Overrides::default());
        let cfg = ModelConfig::new(Arch::MlpTanh, vec![2, 3, 1], 1).unwrap();
        let params = init(&cfg).unwrap();
        let spec = ObjectiveSpec::of_kind(ObjectiveKind::Region);
        let a = region_gradient_quadrature_n(&p, &cfg, &params, [2.0, 0.4], 0.2, &spec, 16).unwrap();
        let b = region_gradient_quadrature_n(&p, &cfg, &params, [2.0, 0.4], 0.2, &spec, 32).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn oversize_model_is_guarded() {
        let p = PdeProblem::new(ProblemKind::Reaction, Overrides::default());
        let cfg = ModelConfig::new(Arch::MlpTanh, vec![2, 16, 16, 1], 1).unwrap();
        let params = init(&cfg).unwrap();
        let spec = ObjectiveSpec::of_kind(ObjectiveKind::Region);
        assert!(matches!(
            region_gradient_quadrature(&p, &cfg, &params, [1.0, 0.5], 0.1, &spec),
            Err(Error::OracleGuard(_))
        ));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_and_std(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert_eq!(m, vec![0.0, 0.0]);
        assert_eq!(s, vec![1.0, 0.0]);
    }
}
