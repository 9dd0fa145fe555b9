//! Neighbourhood sampling of collocation sets.

use rand::Rng;

use super::{ObjectiveSpec, RegionMode};
use crate::error::{Error, Result};
use crate::pde::{BoundarySet, CollocationSet, DomainBox, PdeProblem, Point, T, X};

/// A collocation set moved by one offset draw per point.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedSet {
    pub set: CollocationSet,
    pub width: f64,
    /// `(ξ_x, ξ_t)` per interior point.
    pub interior_offsets: Vec<[f64; 2]>,
    /// `ξ_x` per initial point.
    pub initial_offsets: Vec<f64>,
    /// `ξ_t` per periodic pair or per Dirichlet point.
    pub boundary_offsets: Vec<f64>,
}

impl PerturbedSet {
    pub fn unperturbed(set: &CollocationSet) -> Self {
        Self {
            set: set.clone(),
            width: 0.0,
            interior_offsets: vec![[0.0; 2]; set.interior.len()],
            initial_offsets: vec![0.0; set.initial.len()],
            boundary_offsets: vec![0.0; set.boundary.len()],
        }
    }
}

/// Brings a coordinate back into the closed box: wrapped on the periodic
/// x-axis, clamped otherwise. In-range values are returned untouched.
pub fn map_into(domain: &DomainBox, periodic_x: bool, dim: usize, v: f64) -> f64 {
    let (lo, hi) = (domain.lo(dim), domain.hi(dim));
    if (lo..=hi).contains(&v) {
        return v;
    }
    if dim == X && periodic_x {
        lo + (v - lo).rem_euclid(hi - lo)
    } else {
        v.clamp(lo, hi)
    }
}

fn shift(problem: &PdeProblem, p: Point, dim: usize, by: f64) -> Point {
    let mut q = p;
    q[dim] = map_into(&problem.domain, problem.periodic_x(), dim, p[dim] + by);
    q
}

/// Draws one offset per point (per coordinate for interior points) and moves
/// the set. Draw order: interior `x` then `t` per point, then initial points,
/// then boundary pairs or points. `h = 0` consumes no randomness.
pub fn sample_region<R: Rng + ?Sized>(
    problem: &PdeProblem,
    set: &CollocationSet,
    h: f64,
    spec: &ObjectiveSpec,
    rng: &mut R,
) -> Result<PerturbedSet> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("region width must be finite and non-negative, got {h}")));
    }
    if h == 0.0 {
        return Ok(PerturbedSet::unperturbed(set));
    }
    let mode: RegionMode = spec.region_mode;
    let draw = |rng: &mut R| mode.offset(rng.random::<f64>(), h);

    let mut interior = Vec::with_capacity(set.interior.len());
    let mut interior_offsets = Vec::with_capacity(set.interior.len());
    for &p in &set.interior {
        let xi = [draw(rng), draw(rng)];
        let q = shift(problem, shift(problem, p, X, xi[X]), T, xi[T]);
        interior.push(q);
        interior_offsets.push(xi);
    }

    if !spec.perturb_constraints {
        let mut out = PerturbedSet::unperturbed(set);
        out.set.interior = interior;
        out.interior_offsets = interior_offsets;
        out.width = h;
        return Ok(out);
    }

    let mut initial = Vec::with_capacity(set.initial.len());
    let mut initial_offsets = Vec::with_capacity(set.initial.len());
    for &p in &set.initial {
        let xi = draw(rng);
        initial.push(shift(problem, p, X, xi));
        initial_offsets.push(xi);
    }

    let mut boundary_offsets = Vec::with_capacity(set.boundary.len());
    let boundary = match &set.boundary {
        BoundarySet::Periodic(pairs) => BoundarySet::Periodic(
            pairs
                .iter()
                .map(|[a, b]| {
                    let xi = draw(rng);
                    boundary_offsets.push(xi);
                    [shift(problem, *a, T, xi), shift(problem, *b, T, xi)]
                })
                .collect(),
        ),
        BoundarySet::Dirichlet(points) => BoundarySet::Dirichlet(
            points
                .iter()
                .map(|p| {
                    let xi = draw(rng);
                    boundary_offsets.push(xi);
                    shift(problem, *p, T, xi)
                })
                .collect(),
        ),
    };

    Ok(PerturbedSet {
        set: CollocationSet {
            interior,
            initial,
            boundary,
        },
        width: h,
        interior_offsets,
        initial_offsets,
        boundary_offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{uniform_mesh, Overrides, ProblemKind};
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn region() -> ObjectiveSpec {
        ObjectiveSpec::of_kind(super::super::ObjectiveKind::Region)
    }

    #[test]
    fn zero_width_is_identity_and_draws_nothing() {
        let p = PdeProblem::new(ProblemKind::Reaction, Overrides::default());
        let s = uniform_mesh(&p, 5, 5, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = sample_region(&p, &s, 0.0, &region(), &mut rng).unwrap();
        assert_eq!(out.set, s);
        let mut fresh = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(rng.random::<u64>(), fresh.random::<u64>());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn initial_point_wraps_and_keeps_t() {
        let p = PdeProblem::new(ProblemKind::Reaction, Overrides::default());
        let s = CollocationSet {
            interior: vec![],
            initial: vec![[6.28, 0.0]],
            boundary: BoundarySet::Periodic(vec![]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = sample_region(&p, &s, 5.0, &region(), &mut rng).unwrap();
        let q = out.set.initial[0];
        assert_eq!(q[1], 0.0);
        assert!((0.0..=2.0 * PI).contains(&q[0]));
        let expect = (6.28 + out.initial_offsets[0]).rem_euclid(2.0 * PI);
        assert!((q[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn constraints_can_stay_fixed() {
        let p = PdeProblem::new(ProblemKind::Wave, Overrides::default());
        let s = uniform_mesh(&p, 4, 4, 4).unwrap();
        let spec = ObjectiveSpec {
            perturb_constraints: false,
            ..region()
        };
        let out = sample_region(&p, &s, 0.05, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.set.initial, s.initial);
        assert_eq!(out.set.boundary, s.boundary);
        assert_ne!(out.set.interior, s.interior);
    }

    proptest! {
        #[test]
        fn offsets_respect_mode_and_manifolds(
            seed in any::<u64>(),
            h in 1e-6f64..2.0,
            centered in any::<bool>(),
            kind in prop::sample::select(ProblemKind::ALL.to_vec()),
        ) {
            let p = PdeProblem::new(kind, Overrides::default());
            let s = uniform_mesh(&p, 4, 5, 6).unwrap();
            let spec = ObjectiveSpec {
                region_mode: if centered { RegionMode::Centered } else { RegionMode::OneSided },
                ..region()
            };
            let out = sample_region(&p, &s, h, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let (lo, hi) = spec.region_mode.interval(h);
            let all: Vec<f64> = out
                .interior_offsets
                .iter()
                .flatten()
                .chain(&out.initial_offsets)
                .chain(&out.boundary_offsets)
                .copied()
                .collect();
            prop_assert!(all.iter().all(|&o| o >= lo && o <= hi));
            prop_assert!(out.set.tagged().all(|(_, q)| p.domain.contains(q)));
            prop_assert!(out.set.initial.iter().all(|q| q[1] == p.domain.t_lo));
            match &out.set.boundary {
                BoundarySet::Periodic(pairs) => {
                    for [a, b] in pairs {
                        prop_assert_eq!(a[1], b[1]);
                        prop_assert_eq!(a[0], p.domain.x_lo);
                        prop_assert_eq!(b[0], p.domain.x_hi);
                    }
                }
                BoundarySet::Dirichlet(points) => {
                    for (q, orig) in points.iter().zip(s.boundary.points()) {
                        prop_assert_eq!(q[0], orig[0]);
                    }
                }
            }
        }
    }
}
