//! Turns a scenario file into grids, fields and solver inputs, collecting
//! every problem it finds instead of stopping at the first.

use std::path::Path;

use prunetrace_core::cspace::{OrientationSet, ToolAssembly};
use prunetrace_core::fea::{BoundaryConditions, Material, Node, DEFAULT_ERSATZ};
use prunetrace_core::motion::MotionSet;
use prunetrace_core::opt::{
    ConstraintSpec, Evaluator, FrozenMask, OuterLoopConfig, Problem, Weight,
};
use prunetrace_core::prune::{ConstraintKind, PointwiseConstraint};
use prunetrace_core::{Grid, IndicatorField};

use crate::config::{Config, LoadedConfig, RegionOp, RegionStep, Shape, WeightSpec};
use crate::error::CliError;
use crate::pgm;

const NODE_EPS: f64 = 1e-9;

#[derive(Debug)]
pub struct Scenario {
    pub config: Config,
    pub grid: Grid,
    pub domain: IndicatorField,
    pub frozen_regions: IndicatorField,
    pub material: Material,
    pub bc: BoundaryConditions,
    pub orientations: Option<OrientationSet>,
    pub containment: Option<(IndicatorField, MotionSet)>,
    pub access_fixtures: Option<(IndicatorField, f64)>,
    pub coupled_fixtures: Option<IndicatorField>,
    pub support_overhang: Option<f64>,
}

/// Rasterises a region expression at cell centres.
pub fn region(
    steps: &[RegionStep],
    grid: Grid,
    base_dir: &Path,
) -> Result<IndicatorField, CliError> {
    let mut acc = IndicatorField::empty(grid);
    for step in steps {
        let shape = match &step.shape {
            Shape::Rect { min, max } => IndicatorField::from_pmc(grid, |p| {
                p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1]
            }),
            Shape::Disc { center, radius } => IndicatorField::from_pmc(grid, |p| {
                (p[0] - center[0]).hypot(p[1] - center[1]) <= *radius
            }),
            Shape::HalfPlane { point, normal } => {
                if normal[0] == 0.0 && normal[1] == 0.0 {
                    return Err(CliError::Config(
                        "half_plane normal must be non-zero".into(),
                    ));
                }
                IndicatorField::from_pmc(grid, |p| {
                    normal[0] * (p[0] - point[0]) + normal[1] * (p[1] - point[1]) >= 0.0
                })
            }
            Shape::Bitmap { path } => pgm::read_indicator(&base_dir.join(path), grid)?,
            Shape::All {} => IndicatorField::full(grid),
        };
        acc = match step.op {
            RegionOp::Union => acc.union(&shape),
            RegionOp::Intersect => acc.intersect(&shape),
            RegionOp::Difference => acc.difference(&shape),
        }?;
    }
    Ok(acc)
}

fn weight(w: WeightSpec) -> Weight {
    match w {
        WeightSpec::Fixed(v) => Weight::Fixed(v),
        WeightSpec::Linear { start, end } => Weight::Linear { start, end },
    }
}

fn weight_ok(w: WeightSpec) -> bool {
    match w {
        WeightSpec::Fixed(v) => v >= 0.0 && v.is_finite(),
        WeightSpec::Linear { start, end } => {
            start >= 0.0 && end >= 0.0 && start.is_finite() && end.is_finite()
        }
    }
}

fn nodes_in_box(grid: &Grid, min: [f64; 2], max: [f64; 2]) -> Vec<Node> {
    grid.nodes()
        .filter(|&n| {
            let p = grid.node_position(n);
            p[0] >= min[0] - NODE_EPS
                && p[0] <= max[0] + NODE_EPS
                && p[1] >= min[1] - NODE_EPS
                && p[1] <= max[1] + NODE_EPS
        })
        .collect()
}

fn touches(grid: &Grid, field: &IndicatorField, node: Node) -> bool {
    grid.cells_around(node).any(|(i, j)| field.get(i, j))
}

fn describe(grid: &Grid, n: Node) -> String {
    let p = grid.node_position(n);
    format!("node ({}, {}) at ({}, {})", n.i, n.j, p[0], p[1])
}

struct Issues(Vec<String>);

impl Issues {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    /// Records `Err` under `context` and yields `None`.
    fn take<T>(&mut self, context: &str, r: Result<T, CliError>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(format!("{context}: {e}"));
                None
            }
        }
    }

    fn core<T>(&mut self, context: &str, r: prunetrace_core::Result<T>) -> Option<T> {
        self.take(context, r.map_err(CliError::from))
    }
}

impl Scenario {
    pub fn build(loaded: &LoadedConfig) -> Result<Scenario, CliError> {
        let mut issues = Issues(Vec::new());
        let s = Self::build_inner(loaded, &mut issues);
        match s {
            Some(s) if issues.0.is_empty() => Ok(s),
            _ => Err(CliError::Invalid(issues.0)),
        }
    }

    fn build_inner(loaded: &LoadedConfig, issues: &mut Issues) -> Option<Scenario> {
        let c = &loaded.config;
        let base = loaded.base_dir.as_path();
        let grid = issues.core("grid", Grid::new(c.grid.nx, c.grid.ny, c.grid.h))?;
        let grid = match c.grid.origin {
            Some(o) => grid.with_origin(o),
            None => grid,
        };
        let domain = issues.take("geometry.domain", region(&c.geometry.domain, grid, base));
        if domain.as_ref().is_some_and(IndicatorField::is_empty) {
            issues.push("geometry.domain: region is empty");
        }
        let frozen_regions = issues.take("geometry.frozen", region(&c.geometry.frozen, grid, base));
        let material = issues.core(
            "material",
            Material::with_ersatz(
                c.material.young,
                c.material.poisson,
                c.material.ersatz.unwrap_or(DEFAULT_ERSATZ),
            ),
        );

        let mut bc = BoundaryConditions::new();
        if c.supports.is_empty() {
            issues.push("supports: at least one support is required");
        }
        for (k, s) in c.supports.iter().enumerate() {
            if !(s.fix_x || s.fix_y) {
                issues.push(format!("supports[{k}]: restrains neither axis"));
            }
            let nodes = nodes_in_box(&grid, s.min, s.max);
            if nodes.is_empty() {
                issues.push(format!("supports[{k}]: box selects no mesh node"));
            }
            let solid: Vec<Node> = match &domain {
                Some(d) => nodes
                    .iter()
                    .copied()
                    .filter(|&n| touches(&grid, d, n))
                    .collect(),
                None => nodes.clone(),
            };
            if !nodes.is_empty() && solid.is_empty() {
                issues.push(format!(
                    "supports[{k}]: every selected node touches only void cells"
                ));
            }
            for n in solid {
                bc.fix(n, s.fix_x, s.fix_y);
            }
        }
        if c.loads.iter().all(|l| l.force == [0.0, 0.0]) {
            issues.push("loads: at least one non-zero load is required");
        }
        for (k, l) in c.loads.iter().enumerate() {
            if !(l.force[0].is_finite() && l.force[1].is_finite()) {
                issues.push(format!("loads[{k}]: force must be finite"));
                continue;
            }
            let nodes = match (l.at, l.min, l.max) {
                (Some(p), None, None) => match grid.nearest_node(p) {
                    Some(n) => vec![n],
                    None => {
                        issues.push(format!(
                            "loads[{k}]: point ({}, {}) is off the grid",
                            p[0], p[1]
                        ));
                        continue;
                    }
                },
                (None, Some(min), Some(max)) => nodes_in_box(&grid, min, max),
                _ => {
                    issues.push(format!(
                        "loads[{k}]: give either `at` or both `min` and `max`"
                    ));
                    continue;
                }
            };
            if nodes.is_empty() {
                issues.push(format!("loads[{k}]: box selects no mesh node"));
                continue;
            }
            if let Some(d) = &domain {
                if let Some(n) = nodes.iter().find(|&&n| !touches(&grid, d, n)) {
                    issues.push(format!(
                        "loads[{k}]: load on void cell, {} touches no material cell",
                        describe(&grid, *n)
                    ));
                    continue;
                }
            }
            bc.distribute(&nodes, l.force);
        }

        let needs_tool = c.prune.access.is_some() || c.explore.accessibility.is_some();
        let orientations = match &c.tool {
            Some(t) => {
                let head = issues.take("tool.head", region(&t.head, grid, base));
                let cutter = issues.take("tool.cutter", region(&t.cutter, grid, base));
                match (head, cutter) {
                    (Some(head), Some(cutter)) => {
                        let origin = grid.cell_at(t.origin);
                        if origin.is_none() {
                            issues.push("tool.origin: point is off the grid");
                        }
                        let tool = origin
                            .and_then(|o| issues.core("tool", ToolAssembly::new(head, cutter, o)));
                        tool.and_then(|tool| {
                            issues.core(
                                "tool.angles_deg",
                                OrientationSet::from_degrees(&tool, &t.angles_deg),
                            )
                        })
                    }
                    _ => None,
                }
            }
            None => {
                if needs_tool {
                    issues.push("tool: accessibility constraints need a [tool] section");
                }
                None
            }
        };

        let containment = c.prune.containment.as_ref().and_then(|m| {
            let env = issues.take(
                "prune.containment.envelope",
                region(&m.envelope, grid, base),
            )?;
            let motion = issues.core(
                "prune.containment",
                MotionSet::rotation_sweep(m.pivot, m.start_deg, m.end_deg, m.samples),
            )?;
            Some((env, motion))
        });
        let access_fixtures = c.prune.access.as_ref().and_then(|a| {
            let f = issues.take("prune.access.fixtures", region(&a.fixtures, grid, base))?;
            let mu0 = a
                .mu0
                .or_else(|| orientations.as_ref().map(OrientationSet::default_mu0))?;
            if !(mu0 >= 0.0) {
                issues.push("prune.access.mu0: must be non-negative");
            }
            Some((f, mu0))
        });
        let coupled_fixtures = match &c.explore.accessibility {
            Some(a) => {
                if !weight_ok(a.weight) {
                    issues.push("explore.accessibility.weight: must be finite and non-negative");
                }
                if a.fixtures.is_empty() {
                    None
                } else {
                    issues.take(
                        "explore.accessibility.fixtures",
                        region(&a.fixtures, grid, base),
                    )
                }
            }
            None => None,
        };
        let support_overhang = c.explore.support.as_ref().map(|s| {
            if !(0.0..90.0).contains(&s.overhang_deg) {
                issues.push("explore.support.overhang_deg: must lie in [0, 90)");
            }
            if !weight_ok(s.weight) {
                issues.push("explore.support.weight: must be finite and non-negative");
            }
            s.overhang_deg
        });

        let scenario = Scenario {
            config: c.clone(),
            grid,
            domain: domain?,
            frozen_regions: frozen_regions?,
            material: material?,
            bc,
            orientations,
            containment,
            access_fixtures,
            coupled_fixtures,
            support_overhang,
        };
        issues.core("optimize", scenario.outer_config().validate());
        Some(scenario)
    }

    /// Design-independent constraints for the pruning phase; the design
    /// domain itself is the first.
    pub fn pointwise_constraints(&self) -> Vec<PointwiseConstraint> {
        let mut out = vec![PointwiseConstraint::new(
            "domain",
            ConstraintKind::Region(self.domain.clone()),
        )];
        if let Some((envelope, motion)) = &self.containment {
            out.push(PointwiseConstraint::new(
                "containment",
                ConstraintKind::ContainmentMotion {
                    motion: motion.clone(),
                    envelope: envelope.clone(),
                },
            ));
        }
        if let (Some((fixtures, mu0)), Some(orientations)) =
            (&self.access_fixtures, &self.orientations)
        {
            out.push(PointwiseConstraint::new(
                "access",
                ConstraintKind::Accessibility2Axis {
                    fixtures: fixtures.clone(),
                    orientations: orientations.clone(),
                    mu0: *mu0,
                },
            ));
        }
        out
    }

    /// Cells touching a restrained or loaded node.
    pub fn boundary_cells(&self) -> IndicatorField {
        let mut f = IndicatorField::empty(self.grid);
        let nodes = self
            .bc
            .restraints
            .iter()
            .map(|r| r.node)
            .chain(self.bc.loads.iter().map(|l| l.node));
        for n in nodes {
            for (i, j) in self.grid.cells_around(n) {
                f.set(i, j, true);
            }
        }
        f
    }

    /// Exploration problem on the pruned design `pruned`.
    pub fn problem(&self, pruned: &IndicatorField) -> Result<Problem, CliError> {
        for l in &self.bc.loads {
            if !touches(&self.grid, pruned, l.node) {
                return Err(CliError::Infeasible(format!(
                    "pruning removed every cell around the loaded {}",
                    describe(&self.grid, l.node)
                )));
            }
        }
        if !self
            .bc
            .restraints
            .iter()
            .any(|r| touches(&self.grid, pruned, r.node))
        {
            return Err(CliError::Infeasible(
                "pruning removed every restrained cell".into(),
            ));
        }
        let frozen = self
            .frozen_regions
            .union(&self.boundary_cells())?
            .intersect(pruned)?;
        let mut constraints = Vec::new();
        if let (Some(a), Some(orientations)) =
            (&self.config.explore.accessibility, &self.orientations)
        {
            constraints.push(ConstraintSpec::new(
                "accessibility",
                Evaluator::Accessibility {
                    orientations: orientations.clone(),
                    fixtures: self.coupled_fixtures.clone(),
                },
                weight(a.weight),
            ));
        }
        if let Some(s) = &self.config.explore.support {
            let mut spec = ConstraintSpec::new(
                "support",
                Evaluator::SupportVolume {
                    overhang_deg: s.overhang_deg,
                },
                weight(s.weight),
            );
            if let Some(b) = s.bound {
                spec = spec.with_bound(b, s.hard_stop);
            }
            constraints.push(spec);
        }
        Ok(Problem {
            material: self.material,
            bc: self.bc.clone(),
            frozen: FrozenMask::new(frozen),
            constraints,
        })
    }

    pub fn outer_config(&self) -> OuterLoopConfig {
        let o = &self.config.optimize;
        OuterLoopConfig {
            delta: o.delta,
            v_min: o.v_min,
            deflection_bound: o.deflection_bound,
            max_inner_iters: o.max_inner_iters,
            filter_radius: o.filter_radius,
            history_blend: o.history_blend,
        }
    }
}

/// Schema and cross-reference checks without running any solver; an empty
/// report means the scenario is valid.
pub fn validate(loaded: &LoadedConfig) -> Vec<String> {
    match Scenario::build(loaded) {
        Ok(_) => Vec::new(),
        Err(CliError::Invalid(v)) => v,
        Err(e) => vec![e.to_string()],
    }
}
