//! Phase one: intersect the maximal elements of pointwise constraints.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::cspace::{accessible_set_raw, OrientationSet};
use crate::error::Result;
use crate::field::{Grid, IndicatorField};
use crate::motion::{unsweep_raw, MotionSet};

/// Point membership test over world coordinates.
pub type Pmc = Box<dyn Fn([f64; 2]) -> bool + Send + Sync>;

/// How a pointwise constraint's maximal element is computed.
pub enum ConstraintKind {
    /// The part must stay inside `envelope` along every sample of `motion`.
    ContainmentMotion {
        motion: MotionSet,
        envelope: IndicatorField,
    },
    /// A holder translating above the part must clear the fixtures at some
    /// orientation.
    Accessibility2Axis {
        fixtures: IndicatorField,
        orientations: OrientationSet,
        mu0: f64,
    },
    /// Any other design-independent membership test, such as the raw
    /// design domain.
    CustomPmc(Pmc),
    /// A precomputed region (the domain bitmap, a keep-in zone).
    Region(IndicatorField),
}

impl fmt::Debug for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintKind::ContainmentMotion { motion, .. } => f
                .debug_struct("ContainmentMotion")
                .field("samples", &motion.n_samples())
                .finish_non_exhaustive(),
            ConstraintKind::Accessibility2Axis {
                orientations, mu0, ..
            } => f
                .debug_struct("Accessibility2Axis")
                .field("orientations", &orientations.len())
                .field("mu0", mu0)
                .finish_non_exhaustive(),
            ConstraintKind::CustomPmc(_) => f.write_str("CustomPmc"),
            ConstraintKind::Region(r) => f.debug_tuple("Region").field(&r.count()).finish(),
        }
    }
}

#[derive(Debug)]
pub struct PointwiseConstraint {
    pub name: String,
    pub kind: ConstraintKind,
}

impl PointwiseConstraint {
    pub fn new(name: impl Into<String>, kind: ConstraintKind) -> Self {
        PointwiseConstraint {
            name: name.into(),
            kind,
        }
    }

    /// The constraint's unregularised maximal element on `grid`.
    pub fn maximal_element_raw(&self, grid: Grid) -> Result<IndicatorField> {
        match &self.kind {
            ConstraintKind::ContainmentMotion { motion, envelope } => {
                Ok(unsweep_raw(motion, envelope, grid))
            }
            ConstraintKind::Accessibility2Axis {
                fixtures,
                orientations,
                mu0,
            } => accessible_set_raw(fixtures, grid, orientations, *mu0),
            ConstraintKind::CustomPmc(pmc) => Ok(IndicatorField::from_pmc(grid, |p| pmc(p))),
            ConstraintKind::Region(r) => {
                grid.ensure_same(r.grid())?;
                Ok(r.clone())
            }
        }
    }

    /// The regularised maximal element, as the individual solvers return it.
    pub fn maximal_element(&self, grid: Grid) -> Result<IndicatorField> {
        Ok(self.maximal_element_raw(grid)?.regularize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintVolume {
    pub name: String,
    /// Cells of the constraint's own (regularised) maximal element.
    pub cells: usize,
}

/// Pruned design space plus per-constraint diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub field: IndicatorField,
    pub volumes: Vec<ConstraintVolume>,
}

impl PruneOutcome {
    /// No design survives every constraint; phase two cannot start.
    pub fn is_infeasible(&self) -> bool {
        self.field.is_empty()
    }
}

/// `regularize(∩ maximal_i)`; with no constraints, the whole grid.
///
/// Regularisation happens once, after the full intersection, so repeated
/// erosion does not accumulate across constraints. Intersection is
/// commutative, so the result does not depend on constraint order.
pub fn prune_pointwise(constraints: &[PointwiseConstraint], grid: Grid) -> Result<PruneOutcome> {
    let mut acc = IndicatorField::full(grid);
    let mut volumes = Vec::with_capacity(constraints.len());
    for c in constraints {
        let raw = c.maximal_element_raw(grid)?;
        volumes.push(ConstraintVolume {
            name: c.name.clone(),
            cells: raw.regularize().count(),
        });
        acc = acc.intersect(&raw)?;
    }
    Ok(PruneOutcome {
        field: acc.regularize(),
        volumes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cspace::ToolAssembly;
    use crate::motion::unsweep;
    use alloc::boxed::Box;

    fn grid() -> Grid {
        Grid::new(40, 30, 0.1).unwrap()
    }

    fn containment() -> PointwiseConstraint {
        let g = grid();
        let e = IndicatorField::from_fn(g, |i, j| (3..37).contains(&i) && (2..28).contains(&j));
        PointwiseConstraint::new(
            "envelope",
            ConstraintKind::ContainmentMotion {
                motion: MotionSet::rotation_sweep([1.0, 1.5], 0.0, -21.0, 32).unwrap(),
                envelope: e,
            },
        )
    }

    fn accessibility() -> PointwiseConstraint {
        let g = grid();
        let head =
            IndicatorField::from_fn(g, |i, j| (18..23).contains(&i) && (13..18).contains(&j));
        let tool = ToolAssembly::new(head, IndicatorField::empty(g), (20, 15)).unwrap();
        let orientations = OrientationSet::from_degrees(&tool, &[0.0]).unwrap();
        let fixtures = IndicatorField::from_fn(g, |i, j| (i < 6 && j > 20) || (i > 33 && j < 8));
        let mu0 = orientations.default_mu0();
        PointwiseConstraint::new(
            "clamps",
            ConstraintKind::Accessibility2Axis {
                fixtures,
                orientations,
                mu0,
            },
        )
    }

    #[test]
    fn no_constraints_gives_full_domain() {
        let out = prune_pointwise(&[], grid()).unwrap();
        assert_eq!(out.field, IndicatorField::full(grid()));
        assert!(!out.is_infeasible());
    }

    #[test]
    fn single_containment_matches_unsweep() {
        let c = containment();
        let out = prune_pointwise(core::slice::from_ref(&c), grid()).unwrap();
        let ConstraintKind::ContainmentMotion { motion, envelope } = &c.kind else {
            unreachable!()
        };
        assert_eq!(out.field, unsweep(motion, envelope, grid()));
    }

    #[test]
    fn half_planes_give_quadrant() {
        let g = grid();
        let (a, b) = (1.5, 0.9);
        let cs = [
            PointwiseConstraint::new(
                "x>=a",
                ConstraintKind::CustomPmc(Box::new(move |p| p[0] >= a)),
            ),
            PointwiseConstraint::new(
                "y>=b",
                ConstraintKind::CustomPmc(Box::new(move |p| p[1] >= b)),
            ),
        ];
        let out = prune_pointwise(&cs, g).unwrap();
        let mut n = 0;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let c = g.center(i, j);
                let want = c[0] >= a && c[1] >= b;
                assert_eq!(out.field.get(i, j), want);
                n += want as usize;
            }
        }
        // centres 0.05 + 0.1 k: x >= 1.5 for k >= 15 (25 columns), y >= 0.9 for k >= 9 (21 rows)
        assert_eq!(n, 25 * 21);
    }

    #[test]
    fn order_does_not_matter_and_result_is_inside_each_element() {
        let g = grid();
        let ab = [containment(), accessibility()];
        let ba = [accessibility(), containment()];
        let x = prune_pointwise(&ab, g).unwrap();
        let y = prune_pointwise(&ba, g).unwrap();
        assert_eq!(x.field, y.field);
        assert!(!x.is_infeasible());
        for c in &ab {
            assert!(x.field.is_subset_of(&c.maximal_element(g).unwrap()));
        }
        assert_eq!(x.volumes.len(), 2);
    }

    #[test]
    fn empty_result_is_reported_not_raised() {
        let g = grid();
        let cs = [
            PointwiseConstraint::new("left", ConstraintKind::CustomPmc(Box::new(|p| p[0] < 1.0))),
            PointwiseConstraint::new("right", ConstraintKind::CustomPmc(Box::new(|p| p[0] > 3.0))),
        ];
        let out = prune_pointwise(&cs, g).unwrap();
        assert!(out.is_infeasible());
        assert!(out.volumes.iter().all(|v| v.cells > 0));
    }
}
