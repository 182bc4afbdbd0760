//! `mqnc`: command-line front end for the network-coding experiments.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 verification failure.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mqnc_core::metrics::CAP_POINTS;
use mqnc_core::protocol::ResourcePrep;
use mqnc_core::topology::DEFAULT_BUDGET;

use commands::{Artifact, CapArgs, CompileArgs, Planner};
use config::{CommonArgs, ExperimentConfig, Format, VerificationFailed};

#[derive(Parser, Debug)]
#[command(
    name = "mqnc",
    version,
    about = "Measurement-based quantum network coding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Prep {
    /// One CZ per resource edge.
    Direct,
    /// Replay the compiled plan for the topology.
    Plan,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile and prepare the six-qubit resource, estimate its fidelity from
    /// grouped stabilizer settings and report the entanglement witness.
    Resource {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        planner: Option<Planner>,
        /// Placement of logical qubits 0..5, e.g. `5,3,8,9,11,14`.
        #[arg(long)]
        map: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
    },
    /// Calibration, pair tomography and teleportation process tomography for
    /// all four network-coded pairs.
    Mqnc {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "direct")]
        prep: Prep,
        #[arg(long)]
        map: Option<String>,
        /// Number of cap radii in each pair's cap-average curve (0: none).
        #[arg(long, default_value_t = 0)]
        caps: usize,
    },
    /// Route a permutation through the k-line switch network and verify it.
    Switch {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        k: usize,
        /// Destination of each source line, e.g. `2,0,1`.
        #[arg(long)]
        perm: Option<String>,
        /// Route and verify every permutation of k lines.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Compile a target graph onto the topology and verify the plan.
    Compile {
        #[command(flatten)]
        common: CommonArgs,
        /// `butterfly`, `triangle` or a JSON file `{"n": N, "edges": [[a, b], ...]}`.
        #[arg(long, default_value = "butterfly")]
        target: String,
        #[arg(long)]
        map: Option<String>,
        #[arg(long, value_enum)]
        planner: Option<Planner>,
        /// Verify this plan instead of compiling one.
        #[arg(long)]
        plan_file: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
    },
    /// Cap-average fidelity curve from a Choi matrix or Bloch-grid samples.
    Cap {
        #[command(flatten)]
        common: CommonArgs,
        /// Choi JSON (`{"choi": [[[re, im], ...], ...]}`), an `mqnc` report,
        /// Bloch-grid JSON (`{"bloch_grid": [...]}`) or Bloch-grid CSV
        /// (`theta,phi,fidelity`).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 40)]
        radii: usize,
        /// Lattice points per cap for Choi input.
        #[arg(long, default_value_t = CAP_POINTS)]
        points: usize,
        /// Cap centre `theta,phi`; the best centre when omitted.
        #[arg(long)]
        center: Option<String>,
        /// CSV table `theta0,bound` replacing the constant 2/3 line.
        #[arg(long)]
        bound: Option<PathBuf>,
        /// Pair index when the input is an `mqnc` report.
        #[arg(long)]
        pair: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, artifact) = match &cli.command {
        Command::Resource {
            common,
            planner,
            map,
            budget,
        } => {
            let cfg = ExperimentConfig::from_args(common, true, Format::Json)?;
            let a = commands::cmd_resource(&cfg, *planner, map.as_deref(), *budget)?;
            (cfg, a)
        }
        Command::Mqnc {
            common,
            prep,
            map,
            caps,
        } => {
            let cfg = ExperimentConfig::from_args(common, true, Format::Json)?;
            let prep = match prep {
                Prep::Direct => ResourcePrep::Direct,
                Prep::Plan => ResourcePrep::Plan(commands::resource_plan(
                    &cfg.topology,
                    None,
                    map.as_deref(),
                    DEFAULT_BUDGET,
                )?),
            };
            let a = commands::cmd_mqnc(&cfg, &prep, *caps)?;
            (cfg, a)
        }
        Command::Switch {
            common,
            k,
            perm,
            exhaustive,
        } => {
            let cfg = ExperimentConfig::from_args(common, false, Format::Json)?;
            let a = commands::cmd_switch(&cfg, *k, perm.as_deref(), *exhaustive, common.seed.is_some())?;
            (cfg, a)
        }
        Command::Compile {
            common,
            target,
            map,
            planner,
            plan_file,
            budget,
        } => {
            let cfg = ExperimentConfig::from_args(common, false, Format::Json)?;
            let args = CompileArgs {
                target,
                map: map.as_deref(),
                planner: *planner,
                plan_file: plan_file.as_deref(),
                budget: *budget,
            };
            let a = commands::cmd_compile(&cfg, &args)?;
            (cfg, a)
        }
        Command::Cap {
            common,
            input,
            radii,
            points,
            center,
            bound,
            pair,
        } => {
            let cfg = ExperimentConfig::from_args(common, false, Format::Csv)?;
            let args = CapArgs {
                input,
                radii: *radii,
                points: *points,
                center: center.as_deref(),
                bound: bound.as_deref(),
                pair: *pair,
            };
            let a = commands::cmd_cap(&args)?;
            (cfg, a)
        }
    };
    write_artifact(&cfg, &artifact)?;
    match artifact.failure {
        Some(msg) => Err(VerificationFailed(msg).into()),
        None => Ok(()),
    }
}

fn write_artifact(cfg: &ExperimentConfig, artifact: &Artifact) -> Result<()> {
    let text = match cfg.format {
        Format::Json => serde_json::to_string_pretty(&artifact.json)? + "\n",
        Format::Csv => artifact.csv.clone(),
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<VerificationFailed>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
