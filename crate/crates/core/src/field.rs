//! Regular-grid solids and fields.
//!
//! Every solid is a cell-centred binary raster: a cell is material iff its
//! centre passes the membership test. Cells are stored row-major with `x`
//! to the right and `y` up, so cell `(i, j)` lives at index `j * nx + i` and
//! row `j = 0` is the bottom of the domain.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Cell layout of a rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    h: f64,
    origin: [f64; 2],
}

impl Grid {
    /// A grid whose lower-left corner sits at the world origin, i.e. the
    /// centre of cell `(0, 0)` is `(h/2, h/2)`.
    pub fn new(nx: usize, ny: usize, h: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("grid needs at least one cell per axis"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("cell size must be positive and finite"));
        }
        Ok(Grid {
            nx,
            ny,
            h,
            origin: [0.5 * h, 0.5 * h],
        })
    }

    /// Moves the grid so that the centre of cell `(0, 0)` is at `origin`.
    pub fn with_origin(mut self, origin: [f64; 2]) -> Self {
        self.origin = origin;
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    /// World coordinates of the centre of cell `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + self.h * i as f64,
            self.origin[1] + self.h * j as f64,
        ]
    }

    /// Nearest cell to a world point, or `None` when the point is off-grid.
    pub fn cell_at(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fi = libm::round((p[0] - self.origin[0]) / self.h);
        let fj = libm::round((p[1] - self.origin[1]) / self.h);
        if !(fi >= 0.0 && fj >= 0.0) {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    /// Signed variant of [`Grid::cell_at`] used for neighbourhood offsets.
    #[inline]
    pub fn checked(&self, i: isize, j: isize) -> Option<usize> {
        (i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny)
            .then(|| j as usize * self.nx + i as usize)
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left_nx: self.nx,
                left_ny: self.ny,
                left_h: self.h,
                right_nx: other.nx,
                right_ny: other.ny,
                right_h: other.h,
            })
        }
    }
}

/// Cellwise Boolean operators. Complement ignores its second operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    Intersect,
    Union,
    Difference,
    Complement,
}

/// Binary raster of a solid; `true` marks material.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    grid: Grid,
    cells: Vec<bool>,
}

impl IndicatorField {
    pub fn empty(grid: Grid) -> Self {
        IndicatorField {
            grid,
            cells: vec![false; grid.len()],
        }
    }

    pub fn full(grid: Grid) -> Self {
        IndicatorField {
            grid,
            cells: vec![true; grid.len()],
        }
    }

    pub fn from_cells(grid: Grid, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(Error::invalid("cell vector length does not match grid"));
        }
        Ok(IndicatorField { grid, cells })
    }

    /// Builds a field from a predicate over cell indices `(i, j)`.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                cells.push(f(i, j));
            }
        }
        IndicatorField { grid, cells }
    }

    /// Rasterises a point membership test evaluated at cell centres.
    pub fn from_pmc(grid: Grid, mut pmc: impl FnMut([f64; 2]) -> bool) -> Self {
        Self::from_fn(grid, |i, j| pmc(grid.center(i, j)))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[self.grid.index(i, j)]
    }

    #[inline]
    pub fn at(&self, index: usize) -> bool {
        self.cells[index]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        let k = self.grid.index(i, j);
        self.cells[k] = value;
    }

    pub fn set_index(&mut self, index: usize, value: bool) {
        self.cells[index] = value;
    }

    /// Membership of the cell nearest to a world point; off-grid is void.
    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        self.grid.cell_at(p).is_some_and(|(i, j)| self.get(i, j))
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    /// Indices of material cells in storage order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(k, &c)| c.then_some(k))
    }

    pub fn is_subset_of(&self, other: &IndicatorField) -> bool {
        self.grid == other.grid && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    pub fn complement(&self) -> Self {
        IndicatorField {
            grid: self.grid,
            cells: self.cells.iter().map(|&c| !c).collect(),
        }
    }

    pub fn intersect(&self, other: &IndicatorField) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &IndicatorField) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &IndicatorField) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &IndicatorField, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(IndicatorField {
            grid: self.grid,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Morphological erosion by the 3x3 square; off-grid cells count as void.
    pub fn erode(&self) -> Self {
        let g = self.grid;
        IndicatorField::from_fn(g, |i, j| {
            NEIGHBOURHOOD_3X3.iter().all(|&(di, dj)| {
                g.checked(i as isize + di, j as isize + dj)
                    .is_some_and(|k| self.cells[k])
            })
        })
    }

    /// Morphological dilation by the 3x3 square, clipped to the grid.
    pub fn dilate(&self) -> Self {
        let g = self.grid;
        IndicatorField::from_fn(g, |i, j| {
            NEIGHBOURHOOD_3X3.iter().any(|&(di, dj)| {
                g.checked(i as isize + di, j as isize + dj)
                    .is_some_and(|k| self.cells[k])
            })
        })
    }

    /// Grid stand-in for the closure-of-interior regularisation: an opening
    /// by the 3x3 square followed by removal of 4-connected components with
    /// fewer than [`MIN_COMPONENT_CELLS`] cells.
    pub fn regularize(&self) -> Self {
        let mut opened = self.erode().dilate();
        remove_small_components(&mut opened, MIN_COMPONENT_CELLS);
        opened
    }

    /// Sizes of the 4-connected material components, in discovery order.
    pub fn component_sizes(&self) -> Vec<usize> {
        components(self).into_iter().map(|c| c.len()).collect()
    }
}

/// Components smaller than this are dropped by [`IndicatorField::regularize`].
pub const MIN_COMPONENT_CELLS: usize = 4;

const NEIGHBOURHOOD_3X3: [(isize, isize); 9] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (0, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

const CROSS_4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn components(field: &IndicatorField) -> Vec<Vec<usize>> {
    let g = field.grid;
    let mut label = vec![false; g.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..g.len() {
        if !field.cells[start] || label[start] {
            continue;
        }
        let mut comp = Vec::new();
        label[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            comp.push(k);
            let (i, j) = g.coords(k);
            for &(di, dj) in &CROSS_4 {
                if let Some(n) = g.checked(i as isize + di, j as isize + dj) {
                    if field.cells[n] && !label[n] {
                        label[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn remove_small_components(field: &mut IndicatorField, min_cells: usize) {
    for comp in components(field) {
        if comp.len() < min_cells {
            for k in comp {
                field.cells[k] = false;
            }
        }
    }
}

/// Cellwise Boolean algebra. `b` is required for every operator except
/// [`BoolOp::Complement`]. No regularisation is applied.
pub fn boolean_op(
    op: BoolOp,
    a: &IndicatorField,
    b: Option<&IndicatorField>,
) -> Result<IndicatorField> {
    let need_b = || b.ok_or_else(|| Error::invalid("binary Boolean operator needs two operands"));
    match op {
        BoolOp::Complement => Ok(a.complement()),
        BoolOp::Intersect => a.intersect(need_b()?),
        BoolOp::Union => a.union(need_b()?),
        BoolOp::Difference => a.difference(need_b()?),
    }
}

/// `vol(a) / vol(reference)` by cell counting.
pub fn volume_fraction(a: &IndicatorField, reference: &IndicatorField) -> Result<f64> {
    a.grid.ensure_same(&reference.grid)?;
    let r = reference.count();
    if r == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(a.count() as f64 / r as f64)
}

/// Real-valued cell field. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid("value vector length does not match grid"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        assert!(value.is_finite());
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let v = f(i, j);
                assert!(v.is_finite(), "non-finite value at cell ({i}, {j})");
                values.push(v);
            }
        }
        ScalarField { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert!(values.len() == grid.len() && values.iter().all(|v| v.is_finite()));
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn at(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `{cell | value >= tau}`.
    pub fn superlevel_set(&self, tau: f64) -> IndicatorField {
        IndicatorField {
            grid: self.grid,
            cells: self.values.iter().map(|&v| v >= tau).collect(),
        }
    }

    /// Cells where the value is zero (up to `tol`).
    pub fn zero_set(&self, tol: f64) -> IndicatorField {
        IndicatorField {
            grid: self.grid,
            cells: self.values.iter().map(|&v| v.abs() <= tol).collect(),
        }
    }

    /// Pointwise minimum of two fields on the same grid.
    pub fn pointwise_min(&self, other: &ScalarField) -> Result<ScalarField> {
        self.grid.ensure_same(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a.min(b))
                .collect(),
        })
    }

    /// Cells with value zero everywhere outside `mask`.
    pub fn masked(&self, mask: &IndicatorField) -> Result<ScalarField> {
        self.grid.ensure_same(&mask.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&mask.cells)
                .map(|(&v, &m)| if m { v } else { 0.0 })
                .collect(),
        })
    }
}

/// Free-function form of [`ScalarField::superlevel_set`].
pub fn superlevel_set(f: &ScalarField, tau: f64) -> IndicatorField {
    f.superlevel_set(tau)
}
