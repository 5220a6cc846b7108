//! Physical description of the two-group array.
//!
//! All spacings are dimensionless phases `k_s * x` in radians; the wave vector
//! never appears on its own. User-facing files quote spacings in units of π
//! (see [`ConfigFile`]).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Largest `omega_rabi / gamma` accepted without an explicit override.
pub const WEAK_DRIVE_LIMIT: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Atoms in the driven left group.
    pub n_left: usize,
    /// Atoms in the right group.
    pub n_right: usize,
    pub xi_left: f64,
    pub xi_right: f64,
    /// Gap between the last left atom and the first right atom.
    pub xi_d: f64,
    /// `(gamma_R - gamma_L) / gamma`.
    pub directionality: f64,
    /// Total guided decay rate `gamma_L + gamma_R`.
    pub gamma: f64,
    pub omega_rabi: f64,
    pub delta: f64,
    /// Coupling efficiency `gamma / (gamma + gamma_ng)`.
    pub beta: f64,
    /// Explicit driven-site mask. `None` drives exactly the left group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_mask: Option<Vec<bool>>,
    #[serde(default)]
    pub override_weak_drive: bool,
}

impl SystemConfig {
    /// Builds a config with `gamma = 1`, `omega_rabi = 1e-3`, resonant drive,
    /// perfect coupling and `D = 0.5`. Spacings default to the
    /// single-dominant-mode optimum `(1.8, 1.5, 1.158) π`.
    pub fn new(n_left: usize, n_right: usize) -> Self {
        Self {
            n_left,
            n_right,
            xi_left: 1.8 * PI,
            xi_right: 1.158 * PI,
            xi_d: 1.5 * PI,
            directionality: 0.5,
            gamma: 1.0,
            omega_rabi: 1e-3,
            delta: 0.0,
            beta: 1.0,
            drive_mask: None,
            override_weak_drive: false,
        }
    }

    /// Sets `(xi_left, xi_d, xi_right)` given in units of π.
    pub fn with_spacings_pi(mut self, xi_left: f64, xi_d: f64, xi_right: f64) -> Self {
        self.xi_left = xi_left * PI;
        self.xi_d = xi_d * PI;
        self.xi_right = xi_right * PI;
        self
    }

    pub fn with_directionality(mut self, d: f64) -> Self {
        self.directionality = d;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega_rabi = omega;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_drive_mask(mut self, mask: Vec<bool>) -> Self {
        self.drive_mask = Some(mask);
        self
    }

    pub fn n_total(&self) -> usize {
        self.n_left + self.n_right
    }

    pub fn gamma_left(&self) -> f64 {
        0.5 * self.gamma * (1.0 - self.directionality)
    }

    pub fn gamma_right(&self) -> f64 {
        0.5 * self.gamma * (1.0 + self.directionality)
    }

    /// Decay rate into non-guided modes implied by `beta`.
    pub fn gamma_nonguided(&self) -> f64 {
        self.gamma * (1.0 - self.beta) / self.beta
    }

    /// Resolved drive mask of length `N`.
    pub fn driven_sites(&self) -> Vec<bool> {
        match &self.drive_mask {
            Some(mask) => mask.clone(),
            None => (0..self.n_total()).map(|mu| mu < self.n_left).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_left == 0 {
            return Err(ConfigError::EmptyLeftGroup);
        }
        for (name, value) in [
            ("xi_left", self.xi_left),
            ("xi_right", self.xi_right),
            ("xi_d", self.xi_d),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ConfigError::BadSpacing { name, value });
            }
        }
        if !(-1.0..=1.0).contains(&self.directionality) {
            return Err(ConfigError::BadDirectionality(self.directionality));
        }
        for (name, value) in [("gamma", self.gamma), ("omega_rabi", self.omega_rabi)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::NonPositive { name, value });
            }
        }
        if !self.delta.is_finite() {
            return Err(ConfigError::BadDetuning(self.delta));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(ConfigError::BadBeta(self.beta));
        }
        if let Some(mask) = &self.drive_mask {
            if mask.len() != self.n_total() {
                return Err(ConfigError::MaskLength {
                    expected: self.n_total(),
                    got: mask.len(),
                });
            }
        }
        let ratio = self.omega_rabi / self.gamma;
        if ratio > WEAK_DRIVE_LIMIT {
            if !self.override_weak_drive {
                return Err(ConfigError::StrongDrive {
                    ratio,
                    limit: WEAK_DRIVE_LIMIT,
                });
            }
            log::warn!(
                "omega_rabi/gamma = {ratio:.3e} is outside the weak-drive regime; \
                 comparisons against the master equation will degrade"
            );
        }
        Ok(())
    }

    /// Spacing triple in units of π, for diagnostics.
    pub fn spacings_pi(&self) -> (f64, f64, f64) {
        (self.xi_left / PI, self.xi_d / PI, self.xi_right / PI)
    }
}

/// Dimensionless atom positions `k_s x_mu`, first atom at the origin.
pub fn atom_positions(cfg: &SystemConfig) -> Vec<f64> {
    let n_left = cfg.n_left;
    let left_end = n_left.saturating_sub(1) as f64 * cfg.xi_left;
    (0..cfg.n_total())
        .map(|mu| {
            if mu < n_left {
                mu as f64 * cfg.xi_left
            } else {
                left_end + cfg.xi_d + (mu - n_left) as f64 * cfg.xi_right
            }
        })
        .collect()
}

/// Source vector `Omega~`: `omega_rabi` on driven sites, zero elsewhere.
pub fn drive_vector(cfg: &SystemConfig) -> Result<Vec<Complex64>, ConfigError> {
    let mask = cfg.driven_sites();
    if !mask.iter().any(|&d| d) {
        return Err(ConfigError::NoDrive);
    }
    Ok(mask
        .into_iter()
        .map(|d| Complex64::new(if d { cfg.omega_rabi } else { 0.0 }, 0.0))
        .collect())
}

/// Bounds and seed of a positional/detuning disorder ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    /// Maximum positional phase disorder `W` (radians).
    pub w_phase: f64,
    /// Maximum detuning disorder (rate units).
    pub delta_bar: f64,
    pub trials: usize,
    pub master_seed: u64,
}

impl DisorderSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [("w_phase", self.w_phase), ("delta_bar", self.delta_bar)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ConfigError::BadDisorder { name, value });
            }
        }
        if self.trials < 1 {
            return Err(ConfigError::TooFewTrials {
                min: 1,
                got: self.trials,
            });
        }
        Ok(())
    }
}

fn default_gamma() -> f64 {
    1.0
}

fn default_omega() -> f64 {
    1e-3
}

fn default_beta() -> f64 {
    1.0
}

/// On-disk JSON form of [`SystemConfig`] with spacings in units of π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_left: usize,
    pub n_right: usize,
    pub xi_left_pi: f64,
    pub xi_right_pi: f64,
    pub xi_d_pi: f64,
    pub directionality: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_omega")]
    pub omega_rabi: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub override_weak_drive: bool,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn into_config(self) -> SystemConfig {
        SystemConfig {
            n_left: self.n_left,
            n_right: self.n_right,
            xi_left: self.xi_left_pi * PI,
            xi_right: self.xi_right_pi * PI,
            xi_d: self.xi_d_pi * PI,
            directionality: self.directionality,
            gamma: self.gamma,
            omega_rabi: self.omega_rabi,
            delta: self.delta,
            beta: self.beta,
            drive_mask: self.drive_mask,
            override_weak_drive: self.override_weak_drive,
        }
    }
}

impl From<&SystemConfig> for ConfigFile {
    fn from(cfg: &SystemConfig) -> Self {
        let (l, d, r) = cfg.spacings_pi();
        Self {
            n_left: cfg.n_left,
            n_right: cfg.n_right,
            xi_left_pi: l,
            xi_right_pi: r,
            xi_d_pi: d,
            directionality: cfg.directionality,
            gamma: cfg.gamma,
            omega_rabi: cfg.omega_rabi,
            delta: cfg.delta,
            beta: cfg.beta,
            drive_mask: cfg.drive_mask.clone(),
            override_weak_drive: cfg.override_weak_drive,
        }
    }
}
