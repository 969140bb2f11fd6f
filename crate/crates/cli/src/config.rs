//! Scenario files.
//!
//! A scenario is a TOML document. Geometry is described by region lists:
//! each step combines a primitive (or a PGM bitmap on the scenario grid)
//! with the region built so far.
//!
//! ```toml
//! [grid]
//! nx = 64
//! ny = 32
//! h = 0.03125
//!
//! [geometry]
//! domain = [{ rect = { min = [0.0, 0.0], max = [2.0, 1.0] } }]
//!
//! [material]
//! young = 1e9
//! poisson = 0.3
//!
//! [[supports]]
//! min = [0.0, 0.0]
//! max = [0.0, 1.0]
//!
//! [[loads]]
//! at = [2.0, 0.5]
//! force = [0.0, -1.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSpec,
    pub geometry: GeometrySpec,
    pub material: MaterialSpec,
    #[serde(default)]
    pub supports: Vec<SupportSpec>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolSpec>,
    #[serde(default)]
    pub prune: PruneSpec,
    #[serde(default)]
    pub explore: ExploreSpec,
    #[serde(default)]
    pub optimize: OptimizeSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Cell size in metres.
    pub h: f64,
    /// Centre of cell (0, 0); defaults to `[h/2, h/2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub domain: Vec<RegionStep>,
    /// Cells that must survive (functional surfaces).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frozen: Vec<RegionStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionOp {
    #[default]
    Union,
    Intersect,
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box, bounds inclusive.
    Rect {
        min: [f64; 2],
        max: [f64; 2],
    },
    Disc {
        center: [f64; 2],
        radius: f64,
    },
    /// Points `p` with `normal . (p - point) >= 0`.
    HalfPlane {
        point: [f64; 2],
        normal: [f64; 2],
    },
    /// PGM on the scenario grid, top row first; pixels above 127 are inside.
    Bitmap {
        path: String,
    },
    /// The whole grid.
    All {},
}

/// One step of a region expression; cell membership is decided at cell
/// centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStep {
    #[serde(default, skip_serializing_if = "is_union")]
    pub op: RegionOp,
    #[serde(flatten)]
    pub shape: Shape,
}

fn is_union(op: &RegionOp) -> bool {
    *op == RegionOp::Union
}

impl RegionStep {
    pub fn union(shape: Shape) -> Self {
        RegionStep {
            op: RegionOp::Union,
            shape,
        }
    }

    pub fn intersect(shape: Shape) -> Self {
        RegionStep {
            op: RegionOp::Intersect,
            shape,
        }
    }

    pub fn difference(shape: Shape) -> Self {
        RegionStep {
            op: RegionOp::Difference,
            shape,
        }
    }
}

pub fn rect(min: [f64; 2], max: [f64; 2]) -> Shape {
    Shape::Rect { min, max }
}

pub fn disc(center: [f64; 2], radius: f64) -> Shape {
    Shape::Disc { center, radius }
}

pub fn half_plane(point: [f64; 2], normal: [f64; 2]) -> Shape {
    Shape::HalfPlane { point, normal }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    /// Pa.
    pub young: f64,
    pub poisson: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ersatz: Option<f64>,
}

/// Restrains every mesh node inside the box that touches the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    #[serde(default = "yes")]
    pub fix_x: bool,
    #[serde(default = "yes")]
    pub fix_y: bool,
}

fn yes() -> bool {
    true
}

/// A total force (N) at the node nearest `at`, or spread evenly over the
/// nodes inside `min..max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<[f64; 2]>,
    pub force: [f64; 2],
}

/// Holder and cutter on the scenario grid; `origin` is a world point inside
/// the tool (usually the cutter tip).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub head: Vec<RegionStep>,
    #[serde(default)]
    pub cutter: Vec<RegionStep>,
    pub origin: [f64; 2],
    pub angles_deg: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub containment: Option<ContainmentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access: Option<AccessPruneSpec>,
}

/// The part rotates about `pivot` from `start_deg` to `end_deg`
/// (negative is clockwise) and must stay inside `envelope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainmentSpec {
    pub envelope: Vec<RegionStep>,
    pub pivot: [f64; 2],
    #[serde(default)]
    pub start_deg: f64,
    pub end_deg: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    64
}

/// Cells the tool head can reach among fixed fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessPruneSpec {
    pub fixtures: Vec<RegionStep>,
    /// Defaults to half a cell of overlap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Fixed(f64),
    Linear { start: f64, end: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accessibility: Option<CoupledAccessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<SupportVolumeSpec>,
}

/// Penalise the TSF with the inaccessibility of the evolving design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledAccessSpec {
    #[serde(default = "access_weight")]
    pub weight: WeightSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixtures: Vec<RegionStep>,
}

fn access_weight() -> WeightSpec {
    WeightSpec::Linear {
        start: 0.01,
        end: 0.2,
    }
}

/// Augment the TSF with the support-volume sensitivity (build along +y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportVolumeSpec {
    #[serde(default = "overhang")]
    pub overhang_deg: f64,
    #[serde(default = "unit_weight")]
    pub weight: WeightSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default)]
    pub hard_stop: bool,
}

fn overhang() -> f64 {
    45.0
}

fn unit_weight() -> WeightSpec {
    WeightSpec::Fixed(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSpec {
    pub delta: f64,
    pub v_min: f64,
    /// Metres.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deflection_bound: Option<f64>,
    pub max_inner_iters: usize,
    pub filter_radius: f64,
    pub history_blend: f64,
}

impl Default for OptimizeSpec {
    fn default() -> Self {
        OptimizeSpec {
            delta: 0.05,
            v_min: 0.5,
            deflection_bound: None,
            max_inner_iters: 50,
            filter_radius: 0.0,
            history_blend: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Write snapshots every N steps (the last step is always written); 0
    /// disables snapshots.
    pub snapshot_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            snapshot_every: 1,
        }
    }
}

/// A parsed scenario plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: Config,
    pub text: String,
    pub base_dir: PathBuf,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }
}

/// Reads a scenario, or the scenario embedded in a run manifest.
pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(m) = crate::manifest::Manifest::parse(&text) {
        let base_dir = PathBuf::from(&m.base_dir);
        return Ok(LoadedConfig {
            config: Config::from_toml(&m.config)?,
            text: m.config,
            base_dir,
        });
    }
    Ok(LoadedConfig {
        config: Config::from_toml(&text)?,
        text,
        base_dir: dir,
    })
}
