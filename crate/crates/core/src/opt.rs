//! Phase two: Pareto tracing by thresholding topological sensitivity fields.
//!
//! The compliance sensitivity is the strain-energy density (see
//! [`compliance_tsf`]). Global constraints contribute weighted sensitivity
//! fields ([`augment_tsf`]), local constraints are added pointwise
//! ([`penalize_tsf`]), and the result is cut at the threshold that hits the
//! next volume target ([`find_tau`]). [`inner_loop`] repeats this against the
//! re-solved physics until the cut design stops changing; [`outer_loop`]
//! walks the volume fraction down one decrement at a time.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cspace::{inaccessibility_measure, OrientationSet};
use crate::error::{Error, Result};
use crate::fea::{solve_elasticity, BoundaryConditions, FeaResult, Material};
use crate::field::{Grid, IndicatorField, ScalarField};

/// Default overhang angle for the support-volume measure, degrees from the
/// build direction.
pub const DEFAULT_OVERHANG_DEG: f64 = 45.0;

/// Cells that are never removed (functional surfaces, loaded and restrained
/// cells).
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenMask(IndicatorField);

impl FrozenMask {
    pub fn new(cells: IndicatorField) -> Self {
        FrozenMask(cells)
    }

    pub fn none(grid: Grid) -> Self {
        FrozenMask(IndicatorField::empty(grid))
    }

    pub fn field(&self) -> &IndicatorField {
        &self.0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.at(index)
    }
}

/// A constraint weight, fixed or interpolated linearly in volume fraction
/// between the start of the run (fraction 1) and `v_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Fixed(f64),
    Linear { start: f64, end: f64 },
}

impl Weight {
    /// Inaccessibility weight used for coupled accessibility runs.
    pub const ACCESSIBILITY_SCHEDULE: Weight = Weight::Linear {
        start: 0.01,
        end: 0.2,
    };

    pub fn at(&self, volfrac: f64, v_min: f64) -> f64 {
        match *self {
            Weight::Fixed(w) => w,
            Weight::Linear { start, end } => {
                let t = if v_min < 1.0 {
                    ((1.0 - volfrac) / (1.0 - v_min)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                start + (end - start) * t
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Weight::Fixed(w) => w >= 0.0 && w.is_finite(),
            Weight::Linear { start, end } => {
                start >= 0.0 && end >= 0.0 && start.is_finite() && end.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "constraint weights must be finite and non-negative",
            ))
        }
    }
}

/// `(outer design, current design, fea on current) -> value`.
pub type GlobalValueFn = Box<dyn Fn(&IndicatorField, &FeaResult) -> Result<f64> + Send + Sync>;
/// `(outer design, current design, fea on current) -> field over the grid`.
pub type FieldFn =
    Box<dyn Fn(&IndicatorField, &IndicatorField, &FeaResult) -> Result<ScalarField> + Send + Sync>;

pub enum Evaluator {
    /// Global: support material fraction for builds along +y.
    SupportVolume { overhang_deg: f64 },
    /// Local: inaccessibility of each cell by a translating tool.
    Accessibility {
        orientations: OrientationSet,
        fixtures: Option<IndicatorField>,
    },
    /// Global, user supplied. Without a sensitivity it only reports and
    /// stops.
    Global {
        value: GlobalValueFn,
        sensitivity: Option<FieldFn>,
    },
    /// Local, user supplied; the field should lie in `[0, 1]`.
    Local(FieldFn),
}

impl Evaluator {
    pub fn is_local(&self) -> bool {
        matches!(self, Evaluator::Accessibility { .. } | Evaluator::Local(_))
    }
}

impl fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evaluator::SupportVolume { overhang_deg } => f
                .debug_struct("SupportVolume")
                .field("overhang_deg", overhang_deg)
                .finish(),
            Evaluator::Accessibility {
                orientations,
                fixtures,
            } => f
                .debug_struct("Accessibility")
                .field("orientations", &orientations.len())
                .field("fixtures", &fixtures.as_ref().map(IndicatorField::count))
                .finish(),
            Evaluator::Global { sensitivity, .. } => f
                .debug_struct("Global")
                .field("sensitivity", &sensitivity.is_some())
                .finish_non_exhaustive(),
            Evaluator::Local(_) => f.write_str("Local"),
        }
    }
}

/// One global or local constraint of the exploration phase.
#[derive(Debug)]
pub struct ConstraintSpec {
    pub name: String,
    pub evaluator: Evaluator,
    /// `lambda` for global constraints, `kappa` for local ones.
    pub weight: Weight,
    /// Residual is `value - bound` when set.
    pub bound: Option<f64>,
    /// Stop tracing at the first design with a positive residual.
    pub hard_stop: bool,
}

impl ConstraintSpec {
    pub fn new(name: impl Into<String>, evaluator: Evaluator, weight: Weight) -> Self {
        ConstraintSpec {
            name: name.into(),
            evaluator,
            weight,
            bound: None,
            hard_stop: false,
        }
    }

    pub fn with_bound(mut self, bound: f64, hard_stop: bool) -> Self {
        self.bound = Some(bound);
        self.hard_stop = hard_stop;
        self
    }
}

/// Forward problem and constraints shared by every step of a run.
#[derive(Debug)]
pub struct Problem {
    pub material: Material,
    pub bc: BoundaryConditions,
    pub frozen: FrozenMask,
    pub constraints: Vec<ConstraintSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterLoopConfig {
    /// Volume-fraction decrement per step.
    pub delta: f64,
    pub v_min: f64,
    /// Stop at the first design whose largest displacement exceeds this.
    pub deflection_bound: Option<f64>,
    pub max_inner_iters: usize,
    /// Radius (world length) of the mean filter applied to the TSF.
    pub filter_radius: f64,
    /// Weight of the previous iterate when blending TSFs inside the inner
    /// loop; 0 disables blending.
    pub history_blend: f64,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        OuterLoopConfig {
            delta: 0.05,
            v_min: 0.5,
            deflection_bound: None,
            max_inner_iters: 50,
            filter_radius: 0.0,
            history_blend: 0.5,
        }
    }
}

impl OuterLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        if !(self.v_min > 0.0 && self.v_min <= 1.0) {
            return Err(Error::invalid("v_min must lie in (0, 1]"));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::invalid("max_inner_iters must be at least 1"));
        }
        if !(self.filter_radius >= 0.0 && self.filter_radius.is_finite()) {
            return Err(Error::invalid("filter radius must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.history_blend) {
            return Err(Error::invalid("history_blend must lie in [0, 1)"));
        }
        if let Some(b) = self.deflection_bound {
            if !(b > 0.0) {
                return Err(Error::invalid("deflection bound must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Initial,
    Converged,
    /// The inner loop hit `max_inner_iters`; the last iterate is reported.
    MaxIters,
}

impl PointStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointStatus::Initial => "initial",
            PointStatus::Converged => "converged",
            PointStatus::MaxIters => "max_iters",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub step: usize,
    pub volume_fraction: f64,
    pub compliance: f64,
    pub max_displacement: f64,
    pub support_fraction: f64,
    /// Largest inaccessibility over removed cells; NaN without an
    /// accessibility constraint.
    pub inaccess_max: f64,
    pub inner_iters: usize,
    pub status: PointStatus,
    pub residuals: Vec<(String, f64)>,
}

/// Everything recorded for one emitted design.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontStep {
    pub point: ParetoPoint,
    pub design: IndicatorField,
    pub tsf: ScalarField,
    pub inaccessibility: Option<ScalarField>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// The schedule reached `v_min`.
    MinimumVolume,
    /// The next design violated a hard-stop constraint and was discarded.
    HardStop { step: usize, constraint: String },
    /// The next target would remove frozen cells.
    FrozenVolume { step: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Front {
    pub steps: Vec<FrontStep>,
    pub stop: StopReason,
}

impl Front {
    pub fn points(&self) -> impl Iterator<Item = &ParetoPoint> {
        self.steps.iter().map(|s| &s.point)
    }
}

/// Compliance sensitivity over `design`: the strain-energy density each cell
/// carries (or would carry if solid) under `fea`, scaled so the largest
/// removable cell is 1. Frozen cells read 1, cells outside `design` 0.
pub fn compliance_tsf(
    design: &IndicatorField,
    fea: &FeaResult,
    frozen: &FrozenMask,
) -> Result<ScalarField> {
    design.grid().ensure_same(fea.grid())?;
    design.grid().ensure_same(frozen.field().grid())?;
    let e = fea.solid_energy_density();
    let mut peak = 0.0f64;
    let mut any_removable = false;
    for k in design.ones() {
        if !frozen.contains(k) {
            any_removable = true;
            peak = peak.max(e.at(k));
        }
    }
    if !any_removable {
        peak = design.ones().map(|k| e.at(k)).fold(0.0, f64::max);
    }
    if !(peak > 0.0) {
        return Err(Error::degenerate("strain energy vanishes on the design"));
    }
    let g = *design.grid();
    let values = (0..g.len())
        .map(|k| {
            if !design.at(k) {
                0.0
            } else if frozen.contains(k) {
                1.0
            } else {
                e.at(k) / peak
            }
        })
        .collect();
    ScalarField::new(g, values)
}

fn check_weights(fields: &[(&ScalarField, f64)]) -> Result<Grid> {
    let Some((first, _)) = fields.first() else {
        return Err(Error::invalid("no fields to combine"));
    };
    let g = *first.grid();
    for (f, w) in fields {
        g.ensure_same(f.grid())?;
        if !(*w >= 0.0 && w.is_finite()) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
    }
    Ok(g)
}

/// `sum lambda_j field_j`, rescaled so the largest magnitude is 1.
pub fn augment_tsf(fields: &[(&ScalarField, f64)]) -> Result<ScalarField> {
    let g = check_weights(fields)?;
    if fields.iter().all(|(_, w)| *w == 0.0) {
        return Err(Error::invalid("every augmentation weight is zero"));
    }
    let mut acc = vec![0.0; g.len()];
    for (f, w) in fields {
        for (a, v) in acc.iter_mut().zip(f.values()) {
            *a += w * v;
        }
    }
    let peak = acc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for a in acc.iter_mut() {
            *a /= peak;
        }
    }
    ScalarField::new(g, acc)
}

/// `tsf + sum kappa_i g_i`, not rescaled.
pub fn penalize_tsf(tsf: &ScalarField, locals: &[(&ScalarField, f64)]) -> Result<ScalarField> {
    let mut acc = tsf.values().to_vec();
    if !locals.is_empty() {
        let g = check_weights(locals)?;
        g.ensure_same(tsf.grid())?;
        for (f, w) in locals {
            for (a, v) in acc.iter_mut().zip(f.values()) {
                *a += w * v;
            }
        }
    }
    ScalarField::new(*tsf.grid(), acc)
}

/// Radial mean filter: each cell becomes the mean of the cells whose
/// centres lie within `radius`.
pub fn filter_tsf(tsf: &ScalarField, radius: f64) -> Result<ScalarField> {
    filter_tsf_masked(tsf, radius, &IndicatorField::full(*tsf.grid()))
}

/// [`filter_tsf`] restricted to `mask`: cells in the mask average over the
/// mask cells in range, other cells keep their value.
pub fn filter_tsf_masked(
    tsf: &ScalarField,
    radius: f64,
    mask: &IndicatorField,
) -> Result<ScalarField> {
    tsf.grid().ensure_same(mask.grid())?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid("filter radius must be non-negative"));
    }
    let g = *tsf.grid();
    let reach = libm::floor(radius / g.h() + 1e-9) as isize;
    if reach == 0 {
        return Ok(tsf.clone());
    }
    let r2 = (radius / g.h()) * (radius / g.h()) + 1e-9;
    let offsets: Vec<(isize, isize)> = (-reach..=reach)
        .flat_map(|dj| (-reach..=reach).map(move |di| (di, dj)))
        .filter(|&(di, dj)| ((di * di + dj * dj) as f64) <= r2)
        .collect();
    let mut out = tsf.values().to_vec();
    for k in mask.ones() {
        let (i, j) = g.coords(k);
        let (mut sum, mut n) = (0.0, 0usize);
        for &(di, dj) in &offsets {
            if let Some(q) = g.checked(i as isize + di, j as isize + dj) {
                if mask.at(q) {
                    sum += tsf.at(q);
                    n += 1;
                }
            }
        }
        out[k] = sum / n as f64;
    }
    ScalarField::new(g, out)
}

/// Keeps the frozen cells plus the highest-valued removable cells of
/// `design` so that the result holds `round(target_fraction * |reference|)`
/// cells. Removable cells are ranked by `(value, index)`, so ties go to the
/// lower index first. Returns the value of the lowest kept removable cell
/// (`+inf` when none is kept) and the kept set.
pub fn find_tau(
    design: &IndicatorField,
    tsf: &ScalarField,
    target_fraction: f64,
    reference: &IndicatorField,
    frozen: &FrozenMask,
) -> Result<(f64, IndicatorField)> {
    let g = *design.grid();
    g.ensure_same(tsf.grid())?;
    g.ensure_same(reference.grid())?;
    g.ensure_same(frozen.field().grid())?;
    if !(target_fraction > 0.0 && target_fraction.is_finite()) {
        return Err(Error::invalid("target fraction must be positive"));
    }
    let ref_cells = reference.count();
    if ref_cells == 0 {
        return Err(Error::EmptyReference);
    }
    let target_cells = libm::round(target_fraction * ref_cells as f64) as usize;
    let mut removable: Vec<usize> = design.ones().filter(|&k| !frozen.contains(k)).collect();
    let frozen_cells = design.count() - removable.len();
    if target_cells < frozen_cells {
        return Err(Error::InfeasibleTarget {
            target_cells,
            frozen_cells,
        });
    }
    removable.sort_by(|&a, &b| tsf.at(a).total_cmp(&tsf.at(b)).then(a.cmp(&b)));
    let n_remove = design.count().saturating_sub(target_cells);
    let mut out = design.clone();
    for &k in &removable[..n_remove] {
        out.set_index(k, false);
    }
    let tau = removable
        .get(n_remove)
        .map_or(f64::INFINITY, |&k| tsf.at(k));
    Ok((tau, out))
}

/// Support cells needed to print `design` along +y, divided by the cell
/// count of `reference`.
pub fn support_volume_fraction(
    design: &IndicatorField,
    overhang_deg: f64,
    reference: &IndicatorField,
) -> Result<f64> {
    design.grid().ensure_same(reference.grid())?;
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(support_cells(design, overhang_deg) as f64 / reference.count() as f64)
}

/// Horizontal reach (cells per row) that still counts as self-supporting.
fn overhang_reach(overhang_deg: f64) -> usize {
    let t = libm::tan(overhang_deg.clamp(0.0, 89.0).to_radians());
    libm::floor(t + 1e-9) as usize
}

/// Void cells beneath unsupported down-facing cells, counted until the
/// first material cell or the build plate.
pub fn support_cells(design: &IndicatorField, overhang_deg: f64) -> usize {
    let g = *design.grid();
    let reach = overhang_reach(overhang_deg);
    (0..g.nx())
        .map(|c| column_support(design.cells(), g, c, reach))
        .sum()
}

fn column_support(cells: &[bool], g: Grid, c: usize, reach: usize) -> usize {
    let solid = |i: usize, j: usize| cells[j * g.nx() + i];
    let lo = c.saturating_sub(reach);
    let hi = (c + reach).min(g.nx() - 1);
    let mut total = 0;
    for j in 1..g.ny() {
        if !solid(c, j) || solid(c, j - 1) {
            continue;
        }
        if (lo..=hi).any(|i| solid(i, j - 1)) {
            continue;
        }
        let mut k = j;
        while k > 0 && !solid(c, k - 1) {
            total += 1;
            k -= 1;
        }
    }
    total
}

/// Support cells saved by keeping each cell of `outer` as material in
/// `current`, i.e. `S(current without x) - S(current with x)`. Computed by
/// re-counting only the columns a cell can influence.
pub fn support_sensitivity(
    outer: &IndicatorField,
    current: &IndicatorField,
    overhang_deg: f64,
) -> Result<ScalarField> {
    outer.grid().ensure_same(current.grid())?;
    let g = *outer.grid();
    let reach = overhang_reach(overhang_deg);
    let mut cells = current.cells().to_vec();
    let mut values = vec![0.0; g.len()];
    for k in outer.ones() {
        let (i, _) = g.coords(k);
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(g.nx() - 1);
        let local = |cells: &[bool]| -> usize {
            (lo..=hi).map(|c| column_support(cells, g, c, reach)).sum()
        };
        let was = cells[k];
        cells[k] = false;
        let without = local(&cells);
        cells[k] = true;
        let with = local(&cells);
        cells[k] = was;
        values[k] = without as f64 - with as f64;
    }
    ScalarField::new(g, values)
}

/// Forward solves for one iterate.
struct Evaluation {
    fea: FeaResult,
}

fn evaluate(design: &IndicatorField, problem: &Problem) -> Result<Evaluation> {
    Ok(Evaluation {
        fea: solve_elasticity(design, &problem.material, &problem.bc)?,
    })
}

fn accessibility_of(problem: &Problem) -> Option<(&OrientationSet, Option<&IndicatorField>)> {
    problem.constraints.iter().find_map(|c| match &c.evaluator {
        Evaluator::Accessibility {
            orientations,
            fixtures,
        } => Some((orientations, fixtures.as_ref())),
        _ => None,
    })
}

fn overhang_of(problem: &Problem) -> f64 {
    problem
        .constraints
        .iter()
        .find_map(|c| match c.evaluator {
            Evaluator::SupportVolume { overhang_deg } => Some(overhang_deg),
            _ => None,
        })
        .unwrap_or(DEFAULT_OVERHANG_DEG)
}

fn unit_max_abs(f: ScalarField) -> Result<ScalarField> {
    let peak = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = *f.grid();
        ScalarField::new(g, f.values().iter().map(|v| v / peak).collect())
    } else {
        Ok(f)
    }
}

/// The augmented, filtered and penalised TSF over `outer` for the iterate
/// `current`. Also returns the first inaccessibility field computed.
fn build_tsf(
    outer: &IndicatorField,
    current: &IndicatorField,
    eval: &Evaluation,
    problem: &Problem,
    cfg: &OuterLoopConfig,
    volfrac: f64,
) -> Result<(ScalarField, Option<ScalarField>)> {
    let base = compliance_tsf(current, &eval.fea, &problem.frozen)?;
    let mut globals = Vec::new();
    let mut locals = Vec::new();
    let mut mu_out = None;
    for c in &problem.constraints {
        let w = c.weight.at(volfrac, cfg.v_min);
        match &c.evaluator {
            Evaluator::SupportVolume { overhang_deg } if w > 0.0 => {
                let s = support_sensitivity(outer, current, *overhang_deg)?;
                globals.push((unit_max_abs(s.masked(outer)?)?, w));
            }
            Evaluator::Global {
                sensitivity: Some(sens),
                ..
            } if w > 0.0 => {
                let s = sens(outer, current, &eval.fea)?;
                globals.push((unit_max_abs(s.masked(outer)?)?, w));
            }
            Evaluator::Accessibility {
                orientations,
                fixtures,
            } => {
                let mu = inaccessibility_measure(current, fixtures.as_ref(), orientations)?;
                if w > 0.0 {
                    locals.push((mu.clone(), w));
                }
                if mu_out.is_none() {
                    mu_out = Some(mu);
                }
            }
            Evaluator::Local(field) if w > 0.0 => {
                locals.push((field(outer, current, &eval.fea)?, w));
            }
            _ => {}
        }
    }
    let mut terms: Vec<(&ScalarField, f64)> = vec![(&base, 1.0)];
    terms.extend(globals.iter().map(|(f, w)| (f, *w)));
    let augmented = augment_tsf(&terms)?;
    let removable = outer.difference(problem.frozen.field())?;
    let filtered = filter_tsf_masked(&augmented, cfg.filter_radius, &removable)?;
    let local_terms: Vec<(&ScalarField, f64)> = locals.iter().map(|(f, w)| (f, *w)).collect();
    Ok((penalize_tsf(&filtered, &local_terms)?, mu_out))
}

fn blend(prev: &ScalarField, new: &ScalarField, keep: f64) -> Result<ScalarField> {
    let values = prev
        .values()
        .iter()
        .zip(new.values())
        .map(|(p, n)| keep * p + (1.0 - keep) * n)
        .collect();
    ScalarField::new(*new.grid(), values)
}

fn measure(
    step: usize,
    design: &IndicatorField,
    reference: &IndicatorField,
    eval: &Evaluation,
    problem: &Problem,
    status: PointStatus,
    inner_iters: usize,
) -> Result<ParetoPoint> {
    let overhang = overhang_of(problem);
    let support_fraction = support_volume_fraction(design, overhang, reference)?;
    let removed = reference.difference(design)?;
    let inaccess_max = match accessibility_of(problem) {
        Some((orientations, fixtures)) => {
            let mu = inaccessibility_measure(design, fixtures, orientations)?;
            removed.ones().map(|k| mu.at(k)).fold(0.0, f64::max)
        }
        None => f64::NAN,
    };
    let mut residuals = Vec::new();
    for c in &problem.constraints {
        let value = match &c.evaluator {
            Evaluator::SupportVolume { overhang_deg } => {
                support_volume_fraction(design, *overhang_deg, reference)?
            }
            Evaluator::Accessibility { .. } => inaccess_max,
            Evaluator::Global { value, .. } => value(design, &eval.fea)?,
            Evaluator::Local(_) => continue,
        };
        residuals.push((c.name.clone(), value - c.bound.unwrap_or(0.0)));
    }
    Ok(ParetoPoint {
        step,
        volume_fraction: design.count() as f64 / reference.count() as f64,
        compliance: eval.fea.compliance(),
        max_displacement: eval.fea.max_deflection(),
        support_fraction,
        inaccess_max,
        inner_iters,
        status,
        residuals,
    })
}

/// Result of one fixed-point solve at a fixed volume target.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub design: IndicatorField,
    pub point: ParetoPoint,
    pub tsf: ScalarField,
    pub inaccessibility: Option<ScalarField>,
    pub tau: f64,
}

/// Fixed-point iteration at `target_fraction` (relative to `reference`),
/// removing material from `outer`. Each pass solves the physics on the
/// current iterate, rebuilds the TSF over `outer` (blended with the
/// previous pass by `cfg.history_blend`) and re-thresholds; it stops when
/// two consecutive iterates are cell-identical or after
/// `cfg.max_inner_iters` passes.
pub fn inner_loop(
    outer: &IndicatorField,
    target_fraction: f64,
    reference: &IndicatorField,
    problem: &Problem,
    cfg: &OuterLoopConfig,
    step: usize,
) -> Result<InnerOutcome> {
    cfg.validate()?;
    if !problem.frozen.field().is_subset_of(outer) {
        return Err(Error::invalid("frozen cells must lie inside the design"));
    }
    for c in &problem.constraints {
        c.weight.validate()?;
    }
    let mut current = outer.clone();
    let mut eval = evaluate(&current, problem)?;
    let mut history: Option<ScalarField> = None;
    let mut iters = 0;
    loop {
        iters += 1;
        let (fresh, mu) = build_tsf(outer, &current, &eval, problem, cfg, target_fraction)?;
        let tsf = match &history {
            Some(prev) if cfg.history_blend > 0.0 => blend(prev, &fresh, cfg.history_blend)?,
            _ => fresh,
        };
        let (tau, next) = find_tau(outer, &tsf, target_fraction, reference, &problem.frozen)?;
        if next == current {
            let point = measure(
                step,
                &current,
                reference,
                &eval,
                problem,
                PointStatus::Converged,
                iters,
            )?;
            return Ok(InnerOutcome {
                design: current,
                point,
                tsf,
                inaccessibility: mu,
                tau,
            });
        }
        if iters >= cfg.max_inner_iters {
            let eval = evaluate(&next, problem)?;
            let point = measure(
                step,
                &next,
                reference,
                &eval,
                problem,
                PointStatus::MaxIters,
                iters,
            )?;
            return Ok(InnerOutcome {
                design: next,
                point,
                tsf,
                inaccessibility: mu,
                tau,
            });
        }
        current = next;
        eval = evaluate(&current, problem)?;
        history = Some(tsf);
    }
}

fn hard_stop(point: &ParetoPoint, problem: &Problem, cfg: &OuterLoopConfig) -> Option<String> {
    if let Some(bound) = cfg.deflection_bound {
        if point.max_displacement > bound {
            return Some(String::from("deflection"));
        }
    }
    problem
        .constraints
        .iter()
        .filter(|c| c.hard_stop)
        .find(|c| {
            point
                .residuals
                .iter()
                .any(|(n, r)| *n == c.name && *r > 0.0)
        })
        .map(|c| c.name.clone())
}

/// Traces the front from `initial` (volume fraction 1) down to `cfg.v_min`
/// in steps of `cfg.delta`. A design violating a hard-stop constraint ends
/// the run and is not emitted.
pub fn outer_loop(
    initial: &IndicatorField,
    problem: &Problem,
    cfg: &OuterLoopConfig,
) -> Result<Front> {
    cfg.validate()?;
    if initial.is_empty() {
        return Err(Error::degenerate("initial design is empty"));
    }
    if !problem.frozen.field().is_subset_of(initial) {
        return Err(Error::invalid(
            "frozen cells must lie inside the initial design",
        ));
    }
    for c in &problem.constraints {
        c.weight.validate()?;
    }
    let reference = initial;
    let eval = evaluate(initial, problem)?;
    let (tsf, mu) = build_tsf(initial, initial, &eval, problem, cfg, 1.0)?;
    let point = measure(
        0,
        initial,
        reference,
        &eval,
        problem,
        PointStatus::Initial,
        0,
    )?;
    if let Some(name) = hard_stop(&point, problem, cfg) {
        return Ok(Front {
            steps: Vec::new(),
            stop: StopReason::HardStop {
                step: 0,
                constraint: name,
            },
        });
    }
    let mut steps = vec![FrontStep {
        point,
        design: initial.clone(),
        tsf,
        inaccessibility: mu,
    }];
    let mut design = initial.clone();
    let mut step = 0;
    let stop = loop {
        step += 1;
        let target = 1.0 - step as f64 * cfg.delta;
        if target < cfg.v_min - 1e-9 || target <= 0.0 {
            break StopReason::MinimumVolume;
        }
        let out = match inner_loop(&design, target, reference, problem, cfg, step) {
            Err(Error::InfeasibleTarget { .. }) => break StopReason::FrozenVolume { step },
            r => r?,
        };
        if let Some(name) = hard_stop(&out.point, problem, cfg) {
            break StopReason::HardStop {
                step,
                constraint: name,
            };
        }
        design = out.design.clone();
        steps.push(FrontStep {
            point: out.point,
            design: out.design,
            tsf: out.tsf,
            inaccessibility: out.inaccessibility,
        });
    };
    Ok(Front { steps, stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cspace::ToolAssembly;
    use crate::fea::Node;
    use proptest::prelude::*;
    use rand::{rngs::SmallRng, Rng, SeedableRng};
    use std::vec::Vec;

    fn steel() -> Material {
        Material::new(1e9, 0.3).unwrap()
    }

    /// Left edge clamped, downward load at the middle of the right edge.
    /// Frozen cells are those touching a restrained or loaded node.
    fn beam(nx: usize, ny: usize) -> (IndicatorField, Problem) {
        let g = Grid::new(nx, ny, 1.0 / ny as f64).unwrap();
        let mut bc = BoundaryConditions::new();
        for j in 0..=ny {
            bc.fix(Node::new(0, j), true, true);
        }
        bc.load(Node::new(nx, ny / 2), [0.0, -1.0]);
        let mut frozen = IndicatorField::empty(g);
        let nodes: Vec<Node> = bc
            .restraints
            .iter()
            .map(|r| r.node)
            .chain(bc.loads.iter().map(|l| l.node))
            .collect();
        for n in nodes {
            for (i, j) in g.cells_around(n) {
                frozen.set(i, j, true);
            }
        }
        let problem = Problem {
            material: steel(),
            bc,
            frozen: FrozenMask::new(frozen),
            constraints: Vec::new(),
        };
        (IndicatorField::full(g), problem)
    }

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut s = 0;
        while s < idx.len() {
            let mut e = s;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
                e += 1;
            }
            let avg = (s + e) as f64 / 2.0;
            for &k in &idx[s..=e] {
                r[k] = avg;
            }
            s = e + 1;
        }
        r
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in ra.iter().zip(&rb) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn tsf_ranks_like_single_cell_punctures() {
        let (design, p) = beam(16, 8);
        let base = solve_elasticity(&design, &p.material, &p.bc).unwrap();
        let tsf = compliance_tsf(&design, &base, &p.frozen).unwrap();
        let (mut t, mut dj) = (Vec::new(), Vec::new());
        for k in design.ones().filter(|&k| !p.frozen.contains(k)) {
            let mut punctured = design.clone();
            punctured.set_index(k, false);
            let r = solve_elasticity(&punctured, &p.material, &p.bc).unwrap();
            t.push(tsf.at(k));
            dj.push(r.compliance() - base.compliance());
        }
        let rho = spearman(&t, &dj);
        assert!(rho >= 0.9, "spearman {rho}");
    }

    #[test]
    fn uniform_stretch_gives_constant_field() {
        let g = Grid::new(8, 4, 0.25).unwrap();
        let mut bc = BoundaryConditions::new();
        for j in 0..=4 {
            bc.fix(Node::new(0, j), true, j == 0);
            // consistent lumping of a uniform edge traction
            let w = if j == 0 || j == 4 { 0.5 } else { 1.0 };
            bc.load(Node::new(8, j), [w, 0.0]);
        }
        let design = IndicatorField::full(g);
        let r = solve_elasticity(&design, &steel(), &bc).unwrap();
        let tsf = compliance_tsf(&design, &r, &FrozenMask::none(g)).unwrap();
        for &v in tsf.values() {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn frozen_cells_read_one_and_void_cells_zero() {
        let (full, p) = beam(12, 6);
        let g = *full.grid();
        let design = IndicatorField::from_fn(g, |i, j| !(i == 6 && j == 3));
        let r = solve_elasticity(&design, &p.material, &p.bc).unwrap();
        let tsf = compliance_tsf(&design, &r, &p.frozen).unwrap();
        for k in 0..g.len() {
            if p.frozen.contains(k) {
                assert_eq!(tsf.at(k), 1.0);
            }
        }
        assert_eq!(tsf.get(6, 3), 0.0);
        assert!(tsf.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn unloaded_design_has_degenerate_tsf() {
        let (design, mut p) = beam(8, 4);
        p.bc.loads.clear();
        let r = solve_elasticity(&design, &p.material, &p.bc).unwrap();
        assert!(matches!(
            compliance_tsf(&design, &r, &p.frozen),
            Err(Error::Degenerate(_))
        ));
    }

    fn random_field(g: Grid, seed: u64) -> ScalarField {
        let mut rng = SmallRng::seed_from_u64(seed);
        ScalarField::from_fn(g, |_, _| rng.gen::<f64>())
    }

    #[test]
    fn augment_and_penalize_basics() {
        let g = Grid::new(6, 5, 1.0).unwrap();
        let a = random_field(g, 1);
        let single = augment_tsf(&[(&a, 1.0)]).unwrap();
        let peak = a.max();
        for (x, y) in single.values().iter().zip(a.values()) {
            assert!((x - y / peak).abs() < 1e-15);
        }
        let two = augment_tsf(&[(&a, 0.3), (&a, 2.0)]).unwrap();
        assert_eq!(ranks(two.values()), ranks(a.values()));
        assert!(augment_tsf(&[(&a, 0.0)]).is_err());
        assert!(augment_tsf(&[(&a, -1.0)]).is_err());

        let b = random_field(g, 2);
        assert_eq!(penalize_tsf(&a, &[(&b, 0.0)]).unwrap(), a);
        assert_eq!(penalize_tsf(&a, &[]).unwrap(), a);
        let lo = penalize_tsf(&a, &[(&b, 0.1)]).unwrap();
        let hi = penalize_tsf(&a, &[(&b, 0.5)]).unwrap();
        assert!(lo.values().iter().zip(hi.values()).all(|(l, h)| h >= l));
        let other = ScalarField::zeros(Grid::new(5, 5, 1.0).unwrap());
        assert!(penalize_tsf(&a, &[(&other, 1.0)]).is_err());
    }

    #[test]
    fn filter_basics() {
        let g = Grid::new(12, 10, 0.5).unwrap();
        let a = random_field(g, 3);
        assert_eq!(filter_tsf(&a, 0.0).unwrap(), a);
        let c = ScalarField::constant(g, 0.7);
        for r in [0.5, 1.0, 1.7] {
            for &v in filter_tsf(&c, r).unwrap().values() {
                assert!((v - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn step_field_matches_disc_average() {
        let g = Grid::new(20, 20, 1.0).unwrap();
        let step = ScalarField::from_fn(g, |i, _| if i >= 10 { 1.0 } else { 0.0 });
        let r = 2.5;
        let out = filter_tsf(&step, r).unwrap();
        for j in 3..17 {
            for i in 3..17 {
                // count disc cells by direct enumeration
                let (mut ones, mut all) = (0, 0);
                for dj in -3i32..=3 {
                    for di in -3i32..=3 {
                        if ((di * di + dj * dj) as f64).sqrt() <= r {
                            all += 1;
                            ones += (i as i32 + di >= 10) as i32;
                        }
                    }
                }
                assert!((out.get(i, j) - ones as f64 / all as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn find_tau_edge_cases() {
        let g = Grid::new(10, 8, 1.0).unwrap();
        let design = IndicatorField::full(g);
        let tsf = random_field(g, 4);
        let frozen = FrozenMask::new(IndicatorField::from_fn(g, |i, _| i == 0));
        let (tau, same) = find_tau(&design, &tsf, 1.0, &design, &frozen).unwrap();
        assert_eq!(same, design);
        let min_removable = design
            .ones()
            .filter(|&k| !frozen.contains(k))
            .map(|k| tsf.at(k))
            .fold(f64::INFINITY, f64::min);
        assert!(tau <= min_removable);

        let (_, only) = find_tau(&design, &tsf, 8.0 / 80.0, &design, &frozen).unwrap();
        assert_eq!(&only, frozen.field());
        assert!(matches!(
            find_tau(&design, &tsf, 7.0 / 80.0, &design, &frozen),
            Err(Error::InfeasibleTarget {
                target_cells: 7,
                frozen_cells: 8
            })
        ));
    }

    #[test]
    fn find_tau_breaks_ties_by_index() {
        let g = Grid::new(4, 1, 1.0).unwrap();
        let design = IndicatorField::full(g);
        let tsf = ScalarField::constant(g, 0.5);
        let (tau, out) = find_tau(&design, &tsf, 0.5, &design, &FrozenMask::none(g)).unwrap();
        assert_eq!(tau, 0.5);
        assert_eq!(out.cells(), &[false, false, true, true]);
    }

    #[test]
    fn five_percent_decrement_hits_target_like_exhaustive_search() {
        let g = Grid::new(20, 15, 1.0).unwrap();
        let design = IndicatorField::full(g);
        let frozen = FrozenMask::new(IndicatorField::from_fn(g, |i, j| i == 0 && j < 5));
        for seed in 0..5 {
            let tsf = random_field(g, 10 + seed);
            let target = 0.95;
            let (tau, out) = find_tau(&design, &tsf, target, &design, &frozen).unwrap();
            // exhaustive: best threshold among every candidate value
            let mut best = (usize::MAX, f64::NAN);
            let want = target * g.len() as f64;
            for t in tsf.values() {
                let kept = (0..g.len())
                    .filter(|&k| frozen.contains(k) || tsf.at(k) >= *t)
                    .count();
                let err = (kept as f64 - want).abs();
                if (err as usize) < best.0 {
                    best = (err as usize, *t);
                }
            }
            assert!(best.0 <= 1);
            assert!((out.count() as f64 - want).abs() <= 1.0);
            let expect = IndicatorField::from_fn(g, |i, j| {
                let k = g.index(i, j);
                frozen.contains(k) || tsf.at(k) >= tau
            });
            assert_eq!(out, expect);
        }
    }

    #[test]
    fn support_examples() {
        let g = Grid::new(12, 10, 1.0).unwrap();
        let slab = IndicatorField::from_fn(g, |_, j| j < 3);
        assert_eq!(support_cells(&slab, 45.0), 0);
        for (k, h) in [(1, 4), (5, 3), (8, 7)] {
            let strip = IndicatorField::from_fn(g, |i, j| j == h && (2..2 + k).contains(&i));
            assert_eq!(support_cells(&strip, 45.0), k * h);
        }
        let stair = IndicatorField::from_fn(g, |i, j| i <= j);
        assert_eq!(support_cells(&stair, 45.0), 0);
        // steeper than the allowed angle needs support
        let shallow = IndicatorField::from_fn(g, |i, j| i <= 2 * j);
        assert!(support_cells(&shallow, 45.0) > 0);
        assert_eq!(support_cells(&shallow, 65.0), 0);
        let f = support_volume_fraction(
            &IndicatorField::from_fn(g, |i, j| j == 4 && i < 3),
            45.0,
            &slab,
        )
        .unwrap();
        assert!((f - 12.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn support_sensitivity_matches_full_recount() {
        let g = Grid::new(10, 8, 1.0).unwrap();
        let mut rng = SmallRng::seed_from_u64(9);
        let current = IndicatorField::from_fn(g, |_, _| rng.gen_bool(0.6));
        let outer = IndicatorField::full(g);
        let s = support_sensitivity(&outer, &current, 45.0).unwrap();
        for k in 0..g.len() {
            let mut with = current.clone();
            with.set_index(k, true);
            let mut without = current.clone();
            without.set_index(k, false);
            let want = support_cells(&without, 45.0) as f64 - support_cells(&with, 45.0) as f64;
            assert_eq!(s.at(k), want);
        }
    }

    #[test]
    fn weight_schedule_is_linear_in_volume() {
        let w = Weight::ACCESSIBILITY_SCHEDULE;
        assert_eq!(w.at(1.0, 0.3), 0.01);
        assert!((w.at(0.3, 0.3) - 0.2).abs() < 1e-15);
        assert!((w.at(0.65, 0.3) - 0.105).abs() < 1e-12);
        assert_eq!(Weight::Fixed(0.4).at(0.5, 0.1), 0.4);
    }

    #[test]
    fn inner_loop_at_current_fraction_is_identity() {
        let (design, p) = beam(16, 8);
        let cfg = OuterLoopConfig::default();
        let out = inner_loop(&design, 1.0, &design, &p, &cfg, 1).unwrap();
        assert_eq!(out.design, design);
        assert_eq!(out.point.inner_iters, 1);
        assert_eq!(out.point.status, PointStatus::Converged);
    }

    #[test]
    fn inner_loop_converges_on_cantilever() {
        let (design, p) = beam(32, 16);
        let cfg = OuterLoopConfig::default();
        let out = inner_loop(&design, 0.95, &design, &p, &cfg, 1).unwrap();
        assert_eq!(out.point.status, PointStatus::Converged);
        assert!(out.point.inner_iters <= 50);
        assert!((out.design.count() as f64 - 0.95 * 512.0).abs() <= 1.0);
        assert!(p.frozen.field().is_subset_of(&out.design));
    }

    #[test]
    fn single_point_front_when_v_min_is_one() {
        let (design, p) = beam(12, 6);
        let cfg = OuterLoopConfig {
            v_min: 1.0,
            ..Default::default()
        };
        let front = outer_loop(&design, &p, &cfg).unwrap();
        assert_eq!(front.steps.len(), 1);
        assert_eq!(front.steps[0].design, design);
        assert_eq!(front.steps[0].point.status, PointStatus::Initial);
        assert_eq!(front.stop, StopReason::MinimumVolume);
    }

    #[test]
    fn front_is_monotone_and_keeps_frozen_cells() {
        let (design, p) = beam(24, 12);
        let cfg = OuterLoopConfig {
            v_min: 0.6,
            ..Default::default()
        };
        let front = outer_loop(&design, &p, &cfg).unwrap();
        assert_eq!(front.steps.len(), 9);
        for w in front.steps.windows(2) {
            assert!(w[1].point.volume_fraction < w[0].point.volume_fraction);
            assert!(w[1].point.compliance >= w[0].point.compliance);
        }
        for (k, s) in front.steps.iter().enumerate() {
            let target = 1.0 - 0.05 * k as f64;
            assert!((s.point.volume_fraction - target).abs() <= 1.0 / 288.0 + 1e-12);
            assert!(p.frozen.field().is_subset_of(&s.design));
            assert!(s.point.inaccess_max.is_nan());
        }
    }

    #[test]
    fn deflection_bound_stops_before_violation() {
        let (design, p) = beam(24, 12);
        let free = outer_loop(
            &design,
            &p,
            &OuterLoopConfig {
                v_min: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        let d: Vec<f64> = free.points().map(|q| q.max_displacement).collect();
        let bound = 0.5 * (d[4] + d[5]);
        let cfg = OuterLoopConfig {
            v_min: 0.5,
            deflection_bound: Some(bound),
            ..Default::default()
        };
        let front = outer_loop(&design, &p, &cfg).unwrap();
        assert!(front.points().all(|q| q.max_displacement <= bound));
        assert!(matches!(front.stop, StopReason::HardStop { .. }));
        assert_eq!(front.steps.len(), 5);
    }

    #[test]
    fn accessibility_keeps_removed_cells_reachable() {
        // beam clamped to a wall that the tool cannot pass through
        let g = Grid::new(40, 16, 1.0 / 16.0).unwrap();
        let wall = IndicatorField::from_fn(g, |i, _| i < 4);
        let design = wall.complement();
        let mut bc = BoundaryConditions::new();
        for j in 0..=16 {
            bc.fix(Node::new(4, j), true, true);
        }
        bc.load(Node::new(40, 16), [0.0, -1.0]);
        let frozen = IndicatorField::from_fn(g, |i, j| i == 4 || (i == 39 && j == 15));
        let tip = (20usize, 8usize);
        let cutter = IndicatorField::from_fn(g, |i, j| j == tip.1 && i <= tip.0 && i + 6 > tip.0);
        let head = IndicatorField::from_fn(g, |i, j| {
            (12..15).contains(&i) && j + 4 >= tip.1 && j <= tip.1 + 4
        });
        let tool = ToolAssembly::new(head, cutter, tip).unwrap();
        let orientations = OrientationSet::from_degrees(&tool, &[0.0, 180.0]).unwrap();
        let p = Problem {
            material: steel(),
            bc,
            frozen: FrozenMask::new(frozen),
            constraints: vec![ConstraintSpec::new(
                "access",
                Evaluator::Accessibility {
                    orientations: orientations.clone(),
                    fixtures: Some(wall.clone()),
                },
                // small weights trade reachability for compliance; 10
                // keeps every cut open to the tool on this beam
                Weight::Fixed(10.0),
            )],
        };
        let cfg = OuterLoopConfig {
            v_min: 0.85,
            ..Default::default()
        };
        let front = outer_loop(&design, &p, &cfg).unwrap();
        let last = front.steps.last().unwrap();
        assert!(last.point.volume_fraction < 0.9);
        // brute-force audit: every removed cell on the boundary of the
        // removed region admits a collision-free tool placement
        let obstacle = last.design.union(&wall).unwrap();
        let removed = design.difference(&last.design).unwrap();
        for k in removed.ones() {
            let (i, j) = g.coords(k);
            let touches = [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|&(di, dj)| {
                    g.checked(i as isize + di, j as isize + dj)
                        .is_some_and(|q| last.design.at(q))
                });
            if !touches {
                continue;
            }
            let free = orientations.iter().any(|o| {
                let (oi, oj) = o.tool.origin();
                o.tool.body().ones().all(|t| {
                    let (ti, tj) = g.coords(t);
                    let x = i as isize + ti as isize - oi as isize;
                    let y = j as isize + tj as isize - oj as isize;
                    g.checked(x, y).map_or(true, |q| !obstacle.at(q))
                })
            });
            assert!(free, "removed cell ({i}, {j}) is not reachable");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn larger_targets_give_supersets(seed in 0u64..1000, a in 0.2f64..1.0, b in 0.2f64..1.0) {
            let g = Grid::new(9, 7, 1.0).unwrap();
            let design = IndicatorField::full(g);
            let tsf = random_field(g, seed);
            let frozen = FrozenMask::new(IndicatorField::from_fn(g, |i, j| i == 4 && j == 3));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = find_tau(&design, &tsf, lo, &design, &frozen).unwrap().1;
            let large = find_tau(&design, &tsf, hi, &design, &frozen).unwrap().1;
            prop_assert!(small.is_subset_of(&large));
            prop_assert!(frozen.field().is_subset_of(&small));
        }

        #[test]
        fn scaling_weights_keeps_selection(seed in 0u64..1000, l1 in 0.01f64..5.0, l2 in 0.01f64..5.0, c in 0.1f64..10.0) {
            let g = Grid::new(9, 7, 1.0).unwrap();
            let design = IndicatorField::full(g);
            let (a, b) = (random_field(g, seed), random_field(g, seed + 1));
            let frozen = FrozenMask::none(g);
            let x = augment_tsf(&[(&a, l1), (&b, l2)]).unwrap();
            let y = augment_tsf(&[(&a, c * l1), (&b, c * l2)]).unwrap();
            let sx = find_tau(&design, &x, 0.7, &design, &frozen).unwrap().1;
            let sy = find_tau(&design, &y, 0.7, &design, &frozen).unwrap().1;
            prop_assert_eq!(sx, sy);
        }
    }
}
