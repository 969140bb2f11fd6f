//! Pruning, tracing and the artifacts a run leaves behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use prunetrace_core::opt::{outer_loop, Front, StopReason};
use prunetrace_core::prune::{prune_pointwise, PruneOutcome};
use prunetrace_core::Error;

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::manifest::{sha256_hex, Manifest};
use crate::pgm;
use crate::scenario::Scenario;

pub const PARETO_HEADER: [&str; 8] = [
    "step",
    "volfrac",
    "compliance",
    "max_disp",
    "support_frac",
    "inaccess_max",
    "inner_iters",
    "status",
];

#[derive(Debug)]
pub struct Exploration {
    pub pruned: PruneOutcome,
    pub front: Front,
}

/// Phase one then phase two, without touching the file system.
pub fn explore(scenario: &Scenario) -> Result<Exploration, CliError> {
    let pruned = prune_pointwise(&scenario.pointwise_constraints(), scenario.grid)?;
    if pruned.is_infeasible() {
        let names: Vec<_> = pruned
            .volumes
            .iter()
            .map(|v| format!("{} ({} cells)", v.name, v.cells))
            .collect();
        return Err(CliError::Infeasible(format!(
            "no cell satisfies every pointwise constraint: {}",
            names.join(", ")
        )));
    }
    let problem = scenario.problem(&pruned.field)?;
    let front = match outer_loop(&pruned.field, &problem, &scenario.outer_config()) {
        Err(Error::InfeasibleTarget { .. }) => {
            return Err(CliError::Infeasible(
                "frozen cells exceed the pruned design space".into(),
            ))
        }
        r => r?,
    };
    Ok(Exploration { pruned, front })
}

pub fn describe_stop(stop: &StopReason) -> String {
    match stop {
        StopReason::MinimumVolume => "minimum volume reached".into(),
        StopReason::HardStop { step, constraint } => format!("step {step} violated {constraint}"),
        StopReason::FrozenVolume { step } => format!("step {step} would remove frozen cells"),
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        x.to_string()
    }
}

/// One row per design; bounded constraints add a `residual_<name>` column.
pub fn pareto_csv(front: &Front) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let extra: Vec<String> = front
        .steps
        .first()
        .map(|s| {
            s.point
                .residuals
                .iter()
                .map(|(n, _)| format!("residual_{n}"))
                .collect()
        })
        .unwrap_or_default();
    let mut header: Vec<String> = PARETO_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(extra);
    let csv_err = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for p in front.points() {
        let mut row = vec![
            p.step.to_string(),
            num(p.volume_fraction),
            num(p.compliance),
            num(p.max_displacement),
            num(p.support_fraction),
            num(p.inaccess_max),
            p.inner_iters.to_string(),
            p.status.as_str().to_string(),
        ];
        row.extend(p.residuals.iter().map(|(_, r)| num(*r)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Config(format!("csv: {e}")))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    /// Overrides the scenario's `output.snapshot_every`.
    pub snapshot_every: Option<usize>,
}

#[derive(Debug)]
pub struct RunReport {
    pub exploration: Exploration,
    pub manifest: Manifest,
    pub out: PathBuf,
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Runs a scenario and writes `pareto.csv`, `pruned.pgm`, `frozen.pgm`,
/// `snapshots/` and `manifest.toml` under `opts.out`.
pub fn run(loaded: &LoadedConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let scenario = Scenario::build(loaded)?;
    let exploration = explore(&scenario)?;
    let out = &opts.out;
    let snaps = out.join("snapshots");
    fs::create_dir_all(&snaps).map_err(|e| CliError::io(&snaps, e))?;

    write(&out.join("pareto.csv"), &pareto_csv(&exploration.front)?)?;
    pgm::write_indicator(&out.join("pruned.pgm"), &exploration.pruned.field)?;
    let frozen = scenario
        .frozen_regions
        .union(&scenario.boundary_cells())?
        .intersect(&exploration.pruned.field)?;
    pgm::write_indicator(&out.join("frozen.pgm"), &frozen)?;

    let every = opts
        .snapshot_every
        .unwrap_or(scenario.config.output.snapshot_every);
    let last = exploration.front.steps.len().saturating_sub(1);
    for (k, s) in exploration.front.steps.iter().enumerate() {
        if every == 0 || (k % every != 0 && k != last) {
            continue;
        }
        let stem = format!("step_{:03}", s.point.step);
        pgm::write_indicator(&snaps.join(format!("{stem}_design.pgm")), &s.design)?;
        pgm::write_scalar(&snaps.join(format!("{stem}_tsf.pgm")), &s.tsf)?;
        if let Some(mu) = &s.inaccessibility {
            pgm::write_scalar(&snaps.join(format!("{stem}_mu.pgm")), mu)?;
        }
    }

    let base_dir = fs::canonicalize(&loaded.base_dir).unwrap_or_else(|_| loaded.base_dir.clone());
    let manifest = Manifest {
        config_sha256: sha256_hex(&loaded.text),
        core_version: prunetrace_core::VERSION.to_string(),
        cli_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: opts.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        stop: describe_stop(&exploration.front.stop),
        steps: exploration.front.steps.len(),
        base_dir: base_dir.to_string_lossy().into_owned(),
        config: loaded.text.clone(),
    };
    write(&out.join("manifest.toml"), manifest.to_toml().as_bytes())?;
    Ok(RunReport {
        exploration,
        manifest,
        out: out.clone(),
    })
}
