use thiserror::Error;

/// Rejections raised while validating a [`crate::SystemConfig`] or
/// [`crate::DisorderSpec`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("n_left must be at least 1")]
    EmptyLeftGroup,
    #[error("spacing `{name}` must be finite and non-negative, got {value}")]
    BadSpacing { name: &'static str, value: f64 },
    #[error("directionality must lie in [-1, 1], got {0}")]
    BadDirectionality(f64),
    #[error("`{name}` must be finite and positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("detuning must be finite, got {0}")]
    BadDetuning(f64),
    #[error("beta must lie in (0, 1], got {0}")]
    BadBeta(f64),
    #[error("drive_mask has length {got}, expected {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("drive_mask selects no atom; the steady state would be identically zero")]
    NoDrive,
    #[error(
        "omega_rabi/gamma = {ratio:.3e} exceeds the weak-drive limit {limit:.0e}; \
         set override_weak_drive to proceed"
    )]
    StrongDrive { ratio: f64, limit: f64 },
    #[error("disorder `{name}` must be finite and non-negative, got {value}")]
    BadDisorder { name: &'static str, value: f64 },
    #[error("disorder ensemble needs at least {min} trials, got {got}")]
    TooFewTrials { min: usize, got: usize },
    #[error("trial index {index} outside [0, {trials})")]
    TrialIndex { index: usize, trials: usize },
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("eigendecomposition did not converge")]
    EigenFailed,

    #[error("interaction matrix is defective (eigenvector condition number {condition:.3e})")]
    Defective { condition: f64 },

    #[error("eigen expansion unavailable: {0}")]
    EigenUnavailable(String),

    #[error(
        "mode {mode} is driven but decoherence-free (|E| = {magnitude:.3e}); amplitudes diverge"
    )]
    DivergentMode { mode: usize, magnitude: f64 },

    #[error("time step {dt} exceeds the stability limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error(
        "interaction matrix is singular (Bragg condition) at xi_L = {xi_left_pi}pi, \
         xi_D = {xi_d_pi}pi, xi_R = {xi_right_pi}pi"
    )]
    SingularMatrix {
        xi_left_pi: f64,
        xi_d_pi: f64,
        xi_right_pi: f64,
    },

    #[error("state has zero norm; the excitation profile is undefined")]
    ZeroState,

    #[error(
        "characteristic time did not converge: tau = {tau:.6e}, tail error = {tail_error:.3e}"
    )]
    NonConvergent { tau: f64, tail_error: f64 },

    #[error("master-equation oracle supports at most {max} atoms, got {n}")]
    TooLarge { n: usize, max: usize },

    #[error("density matrix lost positivity at t = {t}: minimum eigenvalue {min_eigenvalue:.3e}")]
    PositivityLost { t: f64, min_eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
