//! Excitation transport between two chirally coupled atomic arrays on a
//! one-dimensional waveguide, in the weak-drive single-excitation limit.
//!
//! The pipeline is
//! [`SystemConfig`] → [`build_matrix`] → [`decompose`] →
//! [`steady_state`] / [`evolve_eigen`] → [`evaluate`], with parameter sweeps
//! and disorder ensembles in [`sweep`] and a dense master-equation oracle in
//! [`lindblad`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod lindblad;
pub mod matrix;
pub mod observables;
pub mod spectral;
pub mod sweep;

pub use config::{atom_positions, drive_vector, ConfigFile, DisorderSpec, SystemConfig};
pub use dynamics::{
    evolve_eigen, evolve_ode, evolve_ode_final, steady_state, steady_state_eigen, ExcitationState,
    Method, OdeOptions,
};
pub use error::{ConfigError, Error, Result};
pub use export::{ResultFile, SweepField};
pub use matrix::{build_disordered_matrix, build_matrix, InteractionMatrix};
pub use observables::{
    characteristic_time, characteristic_time_ode, evaluate, evaluate_matrix, mode_decomposition,
    normalized_profile, transport_only, transport_parameter, EvalOptions, ModeSpectrum,
    TauEstimate, TauOptions, TransportResult,
};
pub use spectral::{decompose, spectral_isolation_report, IsolationReport, SpectralData};
pub use sweep::{
    disorder_ensemble, optimal_config_scan, optimize_spacings, run_sweep, Axis, AxisSpec, CellFlag,
    EnsembleOptions, EnsembleStats, Execution, OptimizeSpec, Optimum, ScanPoint, SweepResult,
    SweepSpec,
};
