//! Configuration-space collision analysis on indicator rasters.
//!
//! The overlap volume between a stationary obstacle and a translated tool is
//! a correlation of their indicator functions, computed here with a padded
//! FFT. Results are registered so that the tool's origin cell lands on the
//! query cell; for a cutter this is the cutting tip.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::{correlate_real, FftPlan2D};
use crate::field::{Grid, IndicatorField, ScalarField};

/// Holder plus cutter, rasterised on the scenario grid, with the cell that
/// acts as the tool's local origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolAssembly {
    head: IndicatorField,
    cutter: IndicatorField,
    origin: (usize, usize),
}

impl ToolAssembly {
    pub fn new(
        head: IndicatorField,
        cutter: IndicatorField,
        origin: (usize, usize),
    ) -> Result<Self> {
        head.grid().ensure_same(cutter.grid())?;
        let g = *head.grid();
        if origin.0 >= g.nx() || origin.1 >= g.ny() {
            return Err(Error::invalid("tool origin cell is off-grid"));
        }
        if !(head.get(origin.0, origin.1) || cutter.get(origin.0, origin.1)) {
            return Err(Error::degenerate(
                "tool origin cell is not part of the tool",
            ));
        }
        Ok(ToolAssembly {
            head,
            cutter,
            origin,
        })
    }

    pub fn head(&self) -> &IndicatorField {
        &self.head
    }

    pub fn cutter(&self) -> &IndicatorField {
        &self.cutter
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn grid(&self) -> &Grid {
        self.head.grid()
    }

    /// Holder and cutter together.
    pub fn body(&self) -> IndicatorField {
        self.head
            .union(&self.cutter)
            .expect("tool parts share a grid")
    }

    /// Rotates the tool about its origin cell centre by `angle` radians
    /// (counter-clockwise), resampling nearest-neighbour onto the same grid.
    /// Parts rotated off the grid are clipped.
    pub fn rotated(&self, angle: f64) -> ToolAssembly {
        let g = *self.grid();
        let pivot = g.center(self.origin.0, self.origin.1);
        let (s, c) = libm::sincos(angle);
        let resample = |src: &IndicatorField| {
            IndicatorField::from_fn(g, |i, j| {
                let p = g.center(i, j);
                let dx = p[0] - pivot[0];
                let dy = p[1] - pivot[1];
                // inverse rotation pulls the target cell back to the source
                let q = [pivot[0] + c * dx + s * dy, pivot[1] - s * dx + c * dy];
                src.contains_point(q)
            })
        };
        ToolAssembly {
            head: resample(&self.head),
            cutter: resample(&self.cutter),
            origin: self.origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orientation {
    /// Radians, counter-clockwise from the tool's as-given pose.
    pub angle: f64,
    pub tool: ToolAssembly,
}

/// Candidate planar tool rotations, each pre-rasterised.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationSet {
    items: Vec<Orientation>,
}

impl OrientationSet {
    pub fn rasterize(tool: &ToolAssembly, angles: &[f64]) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invalid("orientation set needs at least one angle"));
        }
        let items = angles
            .iter()
            .map(|&angle| Orientation {
                angle,
                tool: if angle == 0.0 {
                    tool.clone()
                } else {
                    tool.rotated(angle)
                },
            })
            .collect();
        Ok(OrientationSet { items })
    }

    /// Same as [`OrientationSet::rasterize`] with angles in degrees.
    pub fn from_degrees(tool: &ToolAssembly, degrees: &[f64]) -> Result<Self> {
        let rad: Vec<f64> = degrees.iter().map(|d| d.to_radians()).collect();
        Self::rasterize(tool, &rad)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Orientation> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.items[0].tool.grid()
    }

    /// Half a cell of overlap, normalised by the largest tool body.
    pub fn default_mu0(&self) -> f64 {
        let cells = self
            .items
            .iter()
            .map(|o| o.tool.body().count())
            .max()
            .unwrap_or(1)
            .max(1);
        0.5 / cells as f64
    }
}

/// Overlap cell counts `sum_x' a[x'] b[x' - x + origin]` for every cell `x`
/// of the grid. Inputs are binary so the exact counts are integers and the
/// FFT result is rounded to them.
pub fn overlap_counts(
    a: &IndicatorField,
    b: &IndicatorField,
    origin: (usize, usize),
) -> Result<Vec<f64>> {
    a.grid().ensure_same(b.grid())?;
    let g = *a.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let out_len = g.len();
    if a.is_empty() || b.is_empty() {
        return Ok(alloc::vec![0.0; out_len]);
    }
    // lags span (-n, n) per axis; 2n - 1 samples avoid circular aliasing
    let w = (2 * nx - 1).next_power_of_two();
    let h = (2 * ny - 1).next_power_of_two();
    let mut pa = alloc::vec![0.0; w * h];
    let mut pb = alloc::vec![0.0; w * h];
    for k in a.ones() {
        let (i, j) = g.coords(k);
        pa[j * w + i] = 1.0;
    }
    for k in b.ones() {
        let (i, j) = g.coords(k);
        pb[j * w + i] = 1.0;
    }
    let corr = correlate_real(&FftPlan2D::new(w, h), &pa, &pb);
    let mut out = Vec::with_capacity(out_len);
    for j in 0..ny {
        let ly = (j as isize - origin.1 as isize).rem_euclid(h as isize) as usize;
        for i in 0..nx {
            let lx = (i as isize - origin.0 as isize).rem_euclid(w as isize) as usize;
            let v = libm::round(corr[ly * w + lx]);
            out.push(if v > 0.0 { v } else { 0.0 });
        }
    }
    Ok(out)
}

/// `c(x) = sum_x' a(x') b(x' - x) h^2`: the overlap area between `a` and `b`
/// translated so its cell `(0, 0)` sits on `x`.
pub fn convolve(a: &IndicatorField, b: &IndicatorField) -> Result<ScalarField> {
    let area = a.grid().cell_area();
    let counts = overlap_counts(a, b, (0, 0))?;
    Ok(ScalarField::from_vec_unchecked(
        *a.grid(),
        counts.into_iter().map(|c| c * area).collect(),
    ))
}

fn normalized_overlap(
    obstacle: &IndicatorField,
    tool: &IndicatorField,
    origin: (usize, usize),
) -> Result<Vec<f64>> {
    let cells = tool.count();
    if cells == 0 {
        return Err(Error::degenerate("tool raster is empty"));
    }
    let inv = 1.0 / cells as f64;
    Ok(overlap_counts(obstacle, tool, origin)?
        .into_iter()
        .map(|c| (c * inv).min(1.0))
        .collect())
}

fn min_over_orientations(
    obstacle: &IndicatorField,
    orientations: &OrientationSet,
    part: impl Fn(&ToolAssembly) -> IndicatorField,
) -> Result<ScalarField> {
    if orientations.is_empty() {
        return Err(Error::invalid("no tool orientations"));
    }
    let mut best: Option<Vec<f64>> = None;
    for o in orientations.iter() {
        let mu = normalized_overlap(obstacle, &part(&o.tool), o.tool.origin())?;
        best = Some(match best {
            None => mu,
            Some(b) => b.into_iter().zip(mu).map(|(x, y)| x.min(y)).collect(),
        });
    }
    Ok(ScalarField::from_vec_unchecked(
        *obstacle.grid(),
        best.unwrap(),
    ))
}

/// Inaccessibility measure: for each cell, the smallest (over orientations)
/// fraction of the tool body that collides with `design ∪ fixtures` when the
/// tool origin is placed on the cell. Values lie in `[0, 1]`.
pub fn inaccessibility_measure(
    design: &IndicatorField,
    fixtures: Option<&IndicatorField>,
    orientations: &OrientationSet,
) -> Result<ScalarField> {
    design.grid().ensure_same(orientations.grid())?;
    let obstacle = match fixtures {
        Some(f) => design.union(f)?,
        None => design.clone(),
    };
    min_over_orientations(&obstacle, orientations, ToolAssembly::body)
}

/// Cells where the holder alone can be placed (at some orientation) with
/// normalised overlap against the fixtures at most `mu0`. Not regularised.
pub fn accessible_set_raw(
    fixtures: &IndicatorField,
    grid: Grid,
    orientations: &OrientationSet,
    mu0: f64,
) -> Result<IndicatorField> {
    grid.ensure_same(fixtures.grid())?;
    grid.ensure_same(orientations.grid())?;
    let mu = min_over_orientations(fixtures, orientations, |t| t.head().clone())?;
    Ok(IndicatorField::from_fn(grid, |i, j| mu.get(i, j) <= mu0))
}

/// Maximal accessible pointset for a holder translating above the part:
/// the regularised zero-set (up to `mu0`) of the holder/fixture overlap.
pub fn accessible_maximal_set(
    fixtures: &IndicatorField,
    grid: Grid,
    orientations: &OrientationSet,
    mu0: f64,
) -> Result<IndicatorField> {
    Ok(accessible_set_raw(fixtures, grid, orientations, mu0)?.regularize())
}
