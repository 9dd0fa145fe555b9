//! Collocation and test meshes.

use serde::{Deserialize, Serialize};

use super::{BoundaryKind, PdeProblem, Point, T, X};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Manifold {
    Interior,
    Initial,
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundarySet {
    /// `(x_lo, t)` and `(x_hi, t)` matched against each other.
    Periodic(Vec<[Point; 2]>),
    /// Points where `u = 0`.
    Dirichlet(Vec<Point>),
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        match self {
            BoundarySet::Periodic(p) => p.len(),
            BoundarySet::Dirichlet(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every boundary point, pairs flattened in order.
    pub fn points(&self) -> Vec<Point> {
        match self {
            BoundarySet::Periodic(p) => p.iter().flat_map(|pair| pair.iter().copied()).collect(),
            BoundarySet::Dirichlet(p) => p.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<Point>,
    pub initial: Vec<Point>,
    pub boundary: BoundarySet,
}

impl CollocationSet {
    pub fn tagged(&self) -> impl Iterator<Item = (Manifold, Point)> + '_ {
        let i = self.interior.iter().map(|&p| (Manifold::Interior, p));
        let o = self.initial.iter().map(|&p| (Manifold::Initial, p));
        let b = self.boundary.points().into_iter().map(|p| (Manifold::Boundary, p));
        i.chain(o).chain(b)
    }

    pub fn len(&self) -> usize {
        self.interior.len() + self.initial.len() + self.boundary.points().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` evenly spaced values covering `[lo, hi]`, with both ends exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

fn grid(problem: &PdeProblem, n: usize) -> Vec<Point> {
    let d = problem.domain;
    let xs = linspace(d.x_lo, d.x_hi, n);
    let ts = linspace(d.t_lo, d.t_hi, n);
    xs.iter().flat_map(|&x| ts.iter().map(move |&t| [x, t])).collect()
}

pub fn uniform_mesh(problem: &PdeProblem, n_interior: usize, n_ic: usize, n_bc: usize) -> Result<CollocationSet> {
    for (what, n) in [("interior", n_interior), ("initial", n_ic), ("boundary", n_bc)] {
        if n < 2 {
            return Err(Error::Config(format!("{what} point count must be at least 2, got {n}")));
        }
    }
    let d = problem.domain;
    let interior = grid(problem, n_interior);
    let initial = linspace(d.x_lo, d.x_hi, n_ic).into_iter().map(|x| [x, d.t_lo]).collect();
    let ts = linspace(d.t_lo, d.t_hi, n_bc);
    let boundary = match problem.boundary_kind() {
        BoundaryKind::Periodic => BoundarySet::Periodic(ts.iter().map(|&t| [[d.x_lo, t], [d.x_hi, t]]).collect()),
        BoundaryKind::DirichletZero => BoundarySet::Dirichlet(
            ts.iter()
                .map(|&t| [d.x_lo, t])
                .chain(ts.iter().map(|&t| [d.x_hi, t]))
                .collect(),
        ),
    };
    Ok(CollocationSet {
        interior,
        initial,
        boundary,
    })
}

/// Full closed-box `n × n` evaluation grid, x-major.
pub fn test_mesh(problem: &PdeProblem, n: usize) -> Result<Vec<Point>> {
    if n < 2 {
        return Err(Error::Config(format!("test mesh needs at least 2 points per axis, got {n}")));
    }
    Ok(grid(problem, n))
}

/// Flattens points to `[x0, t0, x1, t1, ...]`.
pub fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| [p[X], p[T]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{Overrides, ProblemKind};
    use std::f64::consts::PI;

    fn problem(kind: ProblemKind) -> PdeProblem {
        PdeProblem::new(kind, Overrides::default())
    }

    #[test]
    fn counts_at_full_resolution() {
        let s = uniform_mesh(&problem(ProblemKind::Reaction), 101, 101, 101).unwrap();
        assert_eq!(s.interior.len(), 10201);
        assert_eq!(s.initial.len(), 101);
        assert!(matches!(&s.boundary, BoundarySet::Periodic(p) if p.len() == 101));
        let w = uniform_mesh(&problem(ProblemKind::Wave), 5, 5, 5).unwrap();
        assert!(matches!(&w.boundary, BoundarySet::Dirichlet(p) if p.len() == 10));
    }

    #[test]
    fn two_points_give_the_corners() {
        let s = uniform_mesh(&problem(ProblemKind::Wave), 2, 2, 2).unwrap();
        assert_eq!(s.interior, vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn three_points_span_the_period() {
        let s = uniform_mesh(&problem(ProblemKind::Convection), 3, 3, 3).unwrap();
        let mut xs: Vec<f64> = s.interior.iter().map(|p| p[0]).collect();
        xs.dedup();
        assert_eq!(xs, vec![0.0, PI, 2.0 * PI]);
    }

    #[test]
    fn points_lie_in_the_box_and_pairs_share_t() {
        for kind in ProblemKind::ALL {
            let p = problem(kind);
            let s = uniform_mesh(&p, 7, 9, 11).unwrap();
            assert!(s.tagged().all(|(_, q)| p.domain.contains(q)));
            assert!(s.initial.iter().all(|q| q[1] == p.domain.t_lo));
            if let BoundarySet::Periodic(pairs) = &s.boundary {
                for [a, b] in pairs {
                    assert_eq!(a[1], b[1]);
                    assert_eq!((a[0], b[0]), (p.domain.x_lo, p.domain.x_hi));
                }
            }
        }
    }

    #[test]
    fn rejects_tiny_counts() {
        assert!(uniform_mesh(&problem(ProblemKind::Wave), 1, 5, 5).is_err());
        assert!(test_mesh(&problem(ProblemKind::Wave), 1).is_err());
    }
}
