//! Built-in example scenarios.

use crate::config::*;

pub const NAMES: [&str; 8] = [
    "cantilever",
    "beam-left",
    "beam-both",
    "latch",
    "latch-access",
    "fixture",
    "bridge",
    "bridge-support",
];

pub fn generate(name: &str) -> Option<Config> {
    Some(match name {
        "cantilever" => cantilever(),
        "beam-left" => beam_access(&[0.0]),
        "beam-both" => beam_access(&[0.0, 180.0]),
        "latch" => latch(false),
        "latch-access" => latch(true),
        "fixture" => fixture(),
        "bridge" => bridge(false),
        "bridge-support" => bridge(true),
        _ => return None,
    })
}

/// Box covering cells `i0..=i1` by `j0..=j1` on a grid of cell size `h`
/// with the default origin.
pub fn cells(h: f64, i0: usize, j0: usize, i1: usize, j1: usize) -> Shape {
    rect(
        [(i0 as f64 + 0.25) * h, (j0 as f64 + 0.25) * h],
        [(i1 as f64 + 0.75) * h, (j1 as f64 + 0.75) * h],
    )
}

pub fn cell_center(h: f64, i: usize, j: usize) -> [f64; 2] {
    [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
}

fn base(nx: usize, ny: usize, h: f64, young: f64, poisson: f64) -> Config {
    Config {
        grid: GridSpec {
            nx,
            ny,
            h,
            origin: None,
        },
        geometry: GeometrySpec {
            domain: vec![RegionStep::union(Shape::All {})],
            frozen: Vec::new(),
        },
        material: MaterialSpec {
            young,
            poisson,
            ersatz: None,
        },
        supports: Vec::new(),
        loads: Vec::new(),
        tool: None,
        prune: PruneSpec::default(),
        explore: ExploreSpec::default(),
        optimize: OptimizeSpec::default(),
        output: OutputSpec::default(),
    }
}

/// 2 x 1 beam on a 64 x 32 grid, clamped on the left, unit downward load at
/// the middle of the right edge.
pub fn cantilever() -> Config {
    let h = 1.0 / 32.0;
    let mut c = base(64, 32, h, 1e9, 0.3);
    c.supports.push(SupportSpec {
        min: [0.0, 0.0],
        max: [0.0, 1.0],
        fix_x: true,
        fix_y: true,
    });
    c.loads.push(LoadSpec {
        at: Some([2.0, 0.5]),
        min: None,
        max: None,
        force: [0.0, -1.0],
    });
    c
}

/// T-shaped tool pointing along +x: an 8-cell cutter ending at `tip` and a
/// 3 x 13 head behind it.
pub fn t_tool(h: f64, tip: (usize, usize), angles_deg: &[f64]) -> ToolSpec {
    let (ti, tj) = tip;
    ToolSpec {
        head: vec![RegionStep::union(cells(h, ti - 10, tj - 6, ti - 8, tj + 6))],
        cutter: vec![RegionStep::union(cells(h, ti - 7, tj, ti, tj))],
        origin: cell_center(h, ti, tj),
        angles_deg: angles_deg.to_vec(),
    }
}

/// The cantilever with inaccessibility penalties for the T tool; at 0 deg
/// the tool reaches in from the left.
pub fn beam_access(angles_deg: &[f64]) -> Config {
    let mut c = cantilever();
    let h = c.grid.h;
    c.tool = Some(t_tool(h, (40, 16), angles_deg));
    c.explore.accessibility = Some(CoupledAccessSpec {
        weight: WeightSpec::Linear {
            start: 0.01,
            end: 0.2,
        },
        fixtures: Vec::new(),
    });
    c
}

/// A latch plate (80 x 48 mm inside a 96 x 64 mm envelope) that turns
/// 21 deg clockwise about a pivot boss. The pin presses down on the top
/// pad; the safety catch below it takes an upward reverse load. Forces
/// are per metre of thickness. Steel, SI units, deflection limit 0.03 in.
pub fn latch(accessibility: bool) -> Config {
    let h = 1e-3;
    let mut c = base(96, 64, h, 193e9, 0.29);
    let pivot = [0.020, 0.032];
    c.geometry.domain = vec![
        RegionStep::union(rect([0.004, 0.008], [0.084, 0.056])),
        RegionStep::difference(disc(pivot, 0.0035)),
    ];
    c.geometry.frozen = vec![
        RegionStep::union(disc(pivot, 0.007)),
        RegionStep::union(rect([0.072, 0.048], [0.084, 0.056])),
        RegionStep::union(rect([0.076, 0.026], [0.084, 0.034])),
    ];
    c.prune.containment = Some(ContainmentSpec {
        envelope: vec![
            RegionStep::union(Shape::All {}),
            RegionStep::difference(rect([0.0, 0.0], [0.096, 0.004])),
            RegionStep::difference(half_plane([0.0, 0.050], [-1.0, 1.0])),
            RegionStep::difference(rect([0.090, 0.0], [0.096, 0.064])),
        ],
        pivot,
        start_deg: 0.0,
        end_deg: -21.0,
        samples: 64,
    });
    c.supports.push(SupportSpec {
        min: [pivot[0] - 0.0045, pivot[1] - 0.0045],
        max: [pivot[0] + 0.0045, pivot[1] + 0.0045],
        fix_x: true,
        fix_y: true,
    });
    c.loads.push(LoadSpec {
        at: None,
        min: Some([0.073, 0.056]),
        max: Some([0.083, 0.056]),
        force: [0.0, -2.8e6],
    });
    c.loads.push(LoadSpec {
        at: None,
        min: Some([0.077, 0.026]),
        max: Some([0.083, 0.026]),
        force: [0.0, 1.4e6],
    });
    c.optimize.v_min = 0.35;
    c.optimize.deflection_bound = Some(0.03 * 0.0254);
    if accessibility {
        c.tool = Some(t_tool(h, (48, 32), &[0.0, 180.0]));
        c.explore.accessibility = Some(CoupledAccessSpec {
            weight: WeightSpec::Linear {
                start: 0.01,
                end: 0.2,
            },
            fixtures: Vec::new(),
        });
    }
    c
}

/// A 64 x 24 block held by two tall clamps; a wide holder coming down from
/// above cannot reach next to the clamps, which prunes the stock there.
pub fn fixture() -> Config {
    let h = 1e-3;
    let mut c = base(64, 40, h, 200e9, 0.33);
    c.geometry.domain = vec![RegionStep::union(cells(h, 0, 0, 63, 23))];
    let clamps = vec![
        RegionStep::union(cells(h, 0, 24, 5, 39)),
        RegionStep::union(cells(h, 58, 24, 63, 39)),
    ];
    c.tool = Some(ToolSpec {
        head: vec![RegionStep::union(cells(h, 26, 28, 38, 31))],
        cutter: vec![RegionStep::union(cells(h, 32, 20, 32, 27))],
        origin: cell_center(h, 32, 20),
        angles_deg: vec![0.0],
    });
    c.prune.access = Some(AccessPruneSpec {
        fixtures: clamps,
        mu0: None,
    });
    c.supports.push(SupportSpec {
        min: [0.0, 0.0],
        max: [0.004, 0.0],
        fix_x: true,
        fix_y: true,
    });
    c.supports.push(SupportSpec {
        min: [0.060, 0.0],
        max: [0.064, 0.0],
        fix_x: false,
        fix_y: true,
    });
    c.loads.push(LoadSpec {
        at: None,
        min: Some([0.030, 0.024]),
        max: Some([0.034, 0.024]),
        force: [0.0, -1.0e6],
    });
    c.optimize.v_min = 0.4;
    c
}

/// 2 x 1 span on corner supports with a uniform deck load on top; the build
/// direction is +y.
pub fn bridge(support_constraint: bool) -> Config {
    let h = 1.0 / 32.0;
    let mut c = base(64, 32, h, 1e9, 0.3);
    c.supports.push(SupportSpec {
        min: [0.0, 0.0],
        max: [2.0 * h, 0.0],
        fix_x: true,
        fix_y: true,
    });
    c.supports.push(SupportSpec {
        min: [2.0 - 2.0 * h, 0.0],
        max: [2.0, 0.0],
        fix_x: false,
        fix_y: true,
    });
    c.loads.push(LoadSpec {
        at: None,
        min: Some([0.0, 1.0]),
        max: Some([2.0, 1.0]),
        force: [0.0, -1.0],
    });
    c.optimize.v_min = 0.4;
    if support_constraint {
        c.explore.support = Some(SupportVolumeSpec {
            overhang_deg: 45.0,
            weight: WeightSpec::Fixed(1.0),
            bound: None,
            hard_stop: false,
        });
    }
    c
}
