use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prunetrace::error::CliError;
use prunetrace::run::{describe_stop, run, RunOptions};
use prunetrace::{generate, load, validate};

#[derive(Parser)]
#[command(
    name = "prunetrace",
    version,
    about = "Prune a design domain, then trace its compliance/volume front"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (or replay a manifest.toml).
    Run {
        scenario: PathBuf,
        /// Output directory; defaults to `output.dir`, then `./out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recorded in the manifest; the pipeline itself is deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Check a scenario without solving anything.
    Validate { scenario: PathBuf },
    /// Write a built-in scenario to `<dir>/<name>.toml`.
    Gen {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(generate::NAMES))]
        name: String,
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match exec(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn exec(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            snapshot_every,
        } => {
            let loaded = load(&scenario)?;
            let out = out
                .or_else(|| {
                    loaded
                        .config
                        .output
                        .dir
                        .as_ref()
                        .map(|d| loaded.base_dir.join(d))
                })
                .unwrap_or_else(|| PathBuf::from("out"));
            let report = run(
                &loaded,
                &RunOptions {
                    out,
                    seed,
                    snapshot_every,
                },
            )?;
            for p in report.exploration.front.points() {
                println!(
                    "step {:3}  volfrac {:.4}  compliance {:.6e}  max_disp {:.4e}  iters {:2}  {}",
                    p.step,
                    p.volume_fraction,
                    p.compliance,
                    p.max_displacement,
                    p.inner_iters,
                    p.status.as_str()
                );
            }
            println!("stopped: {}", describe_stop(&report.exploration.front.stop));
            println!("wrote {}", report.out.display());
            Ok(())
        }
        Command::Validate { scenario } => {
            let loaded = load(&scenario)?;
            let issues = validate(&loaded);
            if issues.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(CliError::Invalid(issues))
            }
        }
        Command::Gen { name, dir } => {
            let config = generate::generate(&name).expect("name checked by clap");
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            let path = dir.join(format!("{name}.toml"));
            std::fs::write(&path, config.to_toml()).map_err(|e| CliError::io(&path, e))?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}
