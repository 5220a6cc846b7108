use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use wqed_core::AxisSpec;

/// Excitation transport between chirally coupled atomic arrays.
///
/// Spacings and positional disorder are given in units of π; rates and
/// times in units of the single-atom guided decay rate unless stated.
#[derive(Debug, Parser)]
#[command(name = "wqed", version, about)]
pub struct Cli {
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transport parameter, characteristic time and dominant modes of one configuration.
    Eval {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        out: PathBuf,
        /// Skip the characteristic time.
        #[arg(long)]
        no_tau: bool,
    },
    /// Evaluate a one- or two-axis grid.
    Sweep {
        #[command(flatten)]
        system: SystemArgs,
        /// `axis=min:max:count`; repeat for a second axis.
        #[arg(long = "grid", required = true)]
        grids: Vec<AxisSpec>,
        #[arg(long)]
        out: PathBuf,
        /// Average every cell over this many disorder realizations.
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        disorder: DisorderArgs,
        /// Optimize the three spacings in every cell at this grid resolution.
        #[arg(long)]
        optimize_resolution: Option<usize>,
        #[arg(long)]
        no_tau: bool,
        /// Also write gnuplot matrices next to the CSV.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Optimal spacings along a directionality or atom-number axis.
    Scan {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long = "grid")]
        grid: AxisSpec,
        #[arg(long)]
        out: PathBuf,
        /// Coarse grid points per spacing over [π, 2π).
        #[arg(long, default_value_t = 100)]
        resolution: usize,
    },
    /// Disorder-averaged transport parameter and characteristic time.
    Disorder {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        trials: usize,
        #[command(flatten)]
        disorder: DisorderArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_tau: bool,
    },
    /// Collective-mode table: shifts, decay rates, weights and localization.
    Modes {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the master equation against the single-excitation model.
    Validate {
        /// Configuration; defaults to a D = 0.5 array with spacings (1.8, 1.5, 1.158)π.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Atom count, split as evenly as possible with the extra atom on the left.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 20.0)]
        t_final: f64,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        /// Write the master-equation populations here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interaction matrix elements.
    Matrix {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time-resolved site populations.
    Trajectory {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 50.0)]
        t_final: f64,
        /// Output interval.
        #[arg(long, default_value_t = 0.1)]
        every: f64,
        /// Integration step of the time-domain method.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = TrajectoryMethod::Eigen)]
        method: TrajectoryMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the invocation recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write the primary output here instead of the recorded path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the coupling efficiency.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Accept drives outside the weak-drive limit.
    #[arg(long)]
    pub override_weak_drive: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DisorderArgs {
    /// Master seed of the disorder ensemble.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum positional phase disorder, in units of π.
    #[arg(long, default_value_t = 0.0)]
    pub w_phase: f64,
    /// Maximum detuning disorder.
    #[arg(long, default_value_t = 0.0)]
    pub delta_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMethod {
    Eigen,
    Ode,
}
