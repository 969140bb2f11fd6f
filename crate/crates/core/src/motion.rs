//! Planar rigid motions and the unsweep maximal-element solver.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{Grid, IndicatorField};

/// Rotation by `angle` (radians, counter-clockwise positive) about `pivot`,
/// followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion2D {
    pub angle: f64,
    pub pivot: [f64; 2],
    pub translation: [f64; 2],
}

impl RigidMotion2D {
    pub const IDENTITY: RigidMotion2D = RigidMotion2D {
        angle: 0.0,
        pivot: [0.0, 0.0],
        translation: [0.0, 0.0],
    };

    pub fn rotation(angle: f64, pivot: [f64; 2]) -> Self {
        RigidMotion2D {
            angle,
            pivot,
            translation: [0.0, 0.0],
        }
    }

    pub fn translation(t: [f64; 2]) -> Self {
        RigidMotion2D {
            angle: 0.0,
            pivot: [0.0, 0.0],
            translation: t,
        }
    }

    #[inline]
    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let (s, c) = libm::sincos(self.angle);
        let dx = x[0] - self.pivot[0];
        let dy = x[1] - self.pivot[1];
        [
            c * dx - s * dy + self.pivot[0] + self.translation[0],
            s * dx + c * dy + self.pivot[1] + self.translation[1],
        ]
    }

    /// `x = R^T (y - p - t) + p`, i.e. rotation by `-angle` about the same
    /// pivot followed by the translation `-R^T t`.
    pub fn inverse(&self) -> Self {
        let (s, c) = libm::sincos(self.angle);
        let [tx, ty] = self.translation;
        RigidMotion2D {
            angle: -self.angle,
            pivot: self.pivot,
            translation: [-(c * tx + s * ty), -(-s * tx + c * ty)],
        }
    }
}

/// Free-function form of [`RigidMotion2D::apply`].
pub fn apply_motion(m: &RigidMotion2D, x: [f64; 2]) -> [f64; 2] {
    m.apply(x)
}

/// A sampled one-parametric motion.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSet {
    samples: Vec<RigidMotion2D>,
}

impl MotionSet {
    pub fn new(samples: Vec<RigidMotion2D>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("motion set needs at least one sample"));
        }
        Ok(MotionSet { samples })
    }

    pub fn identity() -> Self {
        MotionSet {
            samples: alloc::vec![RigidMotion2D::IDENTITY],
        }
    }

    /// Rotations about `pivot` sampled uniformly from `start_deg` to `end_deg`
    /// inclusive. Clockwise motion has a negative end angle.
    pub fn rotation_sweep(
        pivot: [f64; 2],
        start_deg: f64,
        end_deg: f64,
        n_samples: usize,
    ) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::invalid("rotation sweep needs at least one sample"));
        }
        let samples = (0..n_samples)
            .map(|k| {
                let t = if n_samples == 1 {
                    0.0
                } else {
                    k as f64 / (n_samples - 1) as f64
                };
                let deg = start_deg + t * (end_deg - start_deg);
                RigidMotion2D::rotation(deg.to_radians(), pivot)
            })
            .collect();
        Ok(MotionSet { samples })
    }

    pub fn samples(&self) -> &[RigidMotion2D] {
        &self.samples
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn inverse(&self) -> Self {
        MotionSet {
            samples: self.samples.iter().map(RigidMotion2D::inverse).collect(),
        }
    }

    /// Samples of both sets, `self` first.
    pub fn union(&self, other: &MotionSet) -> Self {
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        MotionSet { samples }
    }
}

/// True iff every sampled image of `x` lands in a material cell of
/// `envelope`. Images that fall off the envelope grid are not contained.
pub fn trajectory_contained(x: [f64; 2], motion: &MotionSet, envelope: &IndicatorField) -> bool {
    motion
        .samples
        .iter()
        .all(|tau| envelope.contains_point(tau.apply(x)))
}

/// Per-cell containment test without regularisation; the raw maximal
/// element used by the pruning driver.
pub fn unsweep_raw(motion: &MotionSet, envelope: &IndicatorField, grid: Grid) -> IndicatorField {
    IndicatorField::from_pmc(grid, |p| trajectory_contained(p, motion, envelope))
}

/// Largest (regularised) set whose cells stay inside `envelope` at every
/// sample of `motion`.
pub fn unsweep(motion: &MotionSet, envelope: &IndicatorField, grid: Grid) -> IndicatorField {
    unsweep_raw(motion, envelope, grid).regularize()
}

/// Cells of `grid` covered by the sampled sweep of `solid`: a cell is hit
/// when some sample maps a material cell centre of `solid` into it.
pub fn sweep_cells(motion: &MotionSet, solid: &IndicatorField, grid: Grid) -> IndicatorField {
    let mut out = IndicatorField::empty(grid);
    let sg = *solid.grid();
    for k in solid.ones() {
        let (i, j) = sg.coords(k);
        let p = sg.center(i, j);
        for tau in motion.samples() {
            if let Some((a, b)) = grid.cell_at(tau.apply(p)) {
                out.set(a, b, true);
            }
        }
    }
    out
}
