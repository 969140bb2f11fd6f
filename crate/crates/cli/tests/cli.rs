use std::path::Path;
use std::process::Command;

use prunetrace::config::*;
use prunetrace::generate::{cantilever, cells, fixture, latch};
use prunetrace::run::{run, RunOptions};
use prunetrace::{load, validate, CliError, LoadedConfig};
use prunetrace_core::{Grid, IndicatorField};

fn loaded(config: Config, dir: &Path) -> LoadedConfig {
    LoadedConfig {
        text: config.to_toml(),
        config,
        base_dir: dir.to_path_buf(),
    }
}

/// 16 x 8 cantilever, quick to solve.
fn small() -> Config {
    let mut c = cantilever();
    c.grid.nx = 16;
    c.grid.ny = 8;
    c.grid.h = 0.125;
    c
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prunetrace"))
}

#[test]
fn valid_scenario_has_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    assert!(validate(&loaded(small(), dir.path())).is_empty());
}

#[test]
fn load_on_void_names_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.geometry
        .domain
        .push(RegionStep::difference(rect([1.5, 0.0], [2.0, 1.0])));
    let report = validate(&loaded(c, dir.path()));
    assert_eq!(report.len(), 1, "{report:?}");
    assert!(report[0].contains("loads[0]"), "{}", report[0]);
    assert!(report[0].contains("node (16, 4)"), "{}", report[0]);
}

#[test]
fn tool_bitmap_on_the_wrong_grid_is_a_dimension_error() {
    let dir = tempfile::tempdir().unwrap();
    let head = IndicatorField::full(Grid::new(10, 8, 0.125).unwrap());
    prunetrace::pgm::write_indicator(&dir.path().join("head.pgm"), &head).unwrap();
    let mut c = small();
    c.tool = Some(ToolSpec {
        head: vec![RegionStep::union(Shape::Bitmap {
            path: "head.pgm".into(),
        })],
        cutter: Vec::new(),
        origin: [1.0, 0.5],
        angles_deg: vec![0.0],
    });
    c.explore.accessibility = Some(CoupledAccessSpec {
        weight: WeightSpec::Fixed(0.1),
        fixtures: Vec::new(),
    });
    let report = validate(&loaded(c, dir.path()));
    assert!(
        report
            .iter()
            .any(|m| m.starts_with("tool.head") && m.contains("10x8") && m.contains("16x8")),
        "{report:?}"
    );
}

#[test]
fn missing_tool_and_bad_settings_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.explore.accessibility = Some(CoupledAccessSpec {
        weight: WeightSpec::Fixed(-1.0),
        fixtures: Vec::new(),
    });
    c.optimize.delta = 2.0;
    c.supports[0].min = [5.0, 5.0];
    c.supports[0].max = [6.0, 6.0];
    let report = validate(&loaded(c, dir.path()));
    for key in [
        "tool:",
        "explore.accessibility.weight",
        "optimize",
        "supports[0]",
    ] {
        assert!(
            report.iter().any(|m| m.starts_with(key)),
            "{key} missing from {report:?}"
        );
    }
}

#[test]
fn full_volume_without_constraints_is_a_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.optimize.v_min = 1.0;
    let report = run(
        &loaded(c, dir.path()),
        &RunOptions {
            out: dir.path().join("out"),
            seed: 0,
            snapshot_every: None,
        },
    )
    .unwrap();
    assert_eq!(report.exploration.front.steps.len(), 1);
    let csv = std::fs::read_to_string(dir.path().join("out/pareto.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "step,volfrac,compliance,max_disp,support_frac,inaccess_max,inner_iters,status"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,1,"));
    assert!(lines[1].ends_with(",nan,0,initial"));
}

#[test]
fn artifacts_are_written_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.tool = Some(ToolSpec {
        head: vec![RegionStep::union(cells(0.125, 2, 2, 2, 6))],
        cutter: vec![RegionStep::union(cells(0.125, 3, 4, 5, 4))],
        origin: [0.6875, 0.5625],
        angles_deg: vec![0.0, 180.0],
    });
    c.explore.accessibility = Some(CoupledAccessSpec {
        weight: WeightSpec::Linear {
            start: 0.01,
            end: 0.2,
        },
        fixtures: Vec::new(),
    });
    c.optimize.v_min = 0.8;
    let l = loaded(c, dir.path());
    let mut outs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        run(
            &l,
            &RunOptions {
                out: out.clone(),
                seed: 0,
                snapshot_every: Some(2),
            },
        )
        .unwrap();
        outs.push(out);
    }
    let snaps: Vec<String> = {
        let mut v: Vec<String> = std::fs::read_dir(outs[0].join("snapshots"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    // steps 0, 2 and the last (4), each with design, tsf and mu
    assert_eq!(snaps.len(), 9, "{snaps:?}");
    assert!(snaps.contains(&"step_004_mu.pgm".to_string()));
    assert!(!snaps.contains(&"step_001_design.pgm".to_string()));
    for name in snaps
        .iter()
        .map(|s| format!("snapshots/{s}"))
        .chain(["pareto.csv".into(), "pruned.pgm".into()])
    {
        assert_eq!(
            std::fs::read(outs[0].join(&name)).unwrap(),
            std::fs::read(outs[1].join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    let mut c = small();
    c.optimize.v_min = 0.85;
    std::fs::write(&scenario, c.to_toml()).unwrap();
    let opts = |out: &str| RunOptions {
        out: dir.path().join(out),
        seed: 42,
        snapshot_every: None,
    };
    let first = run(&load(&scenario).unwrap(), &opts("a")).unwrap();
    assert!(first.manifest.config_matches());
    assert_eq!(first.manifest.seed, 42);

    let replay = load(&dir.path().join("a/manifest.toml")).unwrap();
    assert_eq!(replay.config, c);
    run(&replay, &opts("b")).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a/pareto.csv")).unwrap(),
        std::fs::read(dir.path().join("b/pareto.csv")).unwrap()
    );
}

#[test]
fn pruning_everything_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.prune.containment = Some(ContainmentSpec {
        envelope: vec![RegionStep::union(rect([0.0, 0.0], [0.5, 0.25]))],
        pivot: [0.0, 0.0],
        start_deg: 0.0,
        end_deg: -90.0,
        samples: 16,
    });
    let err = run(
        &loaded(c, dir.path()),
        &RunOptions {
            out: dir.path().join("out"),
            seed: 0,
            snapshot_every: None,
        },
    )
    .unwrap_err();
    assert!(matches!(err, CliError::Infeasible(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn generated_scenarios_prune_as_intended() {
    let dir = tempfile::tempdir().unwrap();
    for c in [latch(false), fixture()] {
        let l = loaded(c, dir.path());
        let s = prunetrace::Scenario::build(&l).unwrap();
        let p =
            prunetrace_core::prune::prune_pointwise(&s.pointwise_constraints(), s.grid).unwrap();
        assert!(!p.is_infeasible());
        assert!(p.field.count() < s.domain.count());
        assert!(s.problem(&p.field).is_ok());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, small().to_toml()).unwrap();
    let mut bad = small();
    bad.loads[0].at = Some([9.0, 9.0]);
    let bad_path = dir.path().join("bad.toml");
    std::fs::write(&bad_path, bad.to_toml()).unwrap();
    let garbage = dir.path().join("garbage.toml");
    std::fs::write(&garbage, "[grid]\nnx = \"many\"\n").unwrap();

    let code = |args: &[&std::ffi::OsStr]| bin().args(args).output().unwrap().status.code();
    assert_eq!(code(&["validate".as_ref(), good.as_os_str()]), Some(0));
    assert_eq!(code(&["validate".as_ref(), bad_path.as_os_str()]), Some(3));
    assert_eq!(code(&["validate".as_ref(), garbage.as_os_str()]), Some(3));

    let out = bin()
        .args([
            "gen".as_ref(),
            "cantilever".as_ref(),
            dir.path().as_os_str(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let generated = load(&dir.path().join("cantilever.toml")).unwrap();
    assert_eq!(generated.config, cantilever());

    let mut quick = small();
    quick.optimize.v_min = 0.9;
    let quick_path = dir.path().join("quick.toml");
    std::fs::write(&quick_path, quick.to_toml()).unwrap();
    let out_dir = dir.path().join("o");
    let out = bin()
        .args([
            "run".as_ref(),
            quick_path.as_os_str(),
            "--out".as_ref(),
            out_dir.as_os_str(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("manifest.toml").exists());
}
