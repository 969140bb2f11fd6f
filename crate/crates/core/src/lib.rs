//! Grid-based generative design in two phases.
//!
//! Phase one prunes a design domain down to the maximal pointset that
//! satisfies every pointwise (design-independent) constraint: containment
//! under a known rigid motion ([`motion::unsweep`]) and collision-free
//! access of a translating tool among fixtures
//! ([`cspace::accessible_maximal_set`]). The maximal elements are
//! intersected by [`prune::prune_pointwise`].
//!
//! Phase two explores the pruned space by Pareto tracing: material is
//! removed in small volume decrements by thresholding a topological
//! sensitivity field (strain-energy based, see [`opt::compliance_tsf`])
//! that is augmented with global constraint sensitivities and penalised by
//! local constraint fields such as the FFT-computed inaccessibility measure.
//! Each decrement is followed by a fixed-point loop that re-runs the forward
//! solvers ([`fea::solve_elasticity`], [`cspace::inaccessibility_measure`])
//! until the thresholded design stops changing.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, scenario
//! configuration and the command line live in the companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cspace;
pub mod error;
pub mod fea;
pub mod fft;
pub mod field;
pub mod motion;
pub mod opt;
pub mod prune;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use field::{BoolOp, Grid, IndicatorField, ScalarField};
