//! Effective non-Hermitian interaction matrix of the single-excitation sector.
//!
//! Off-diagonal elements carry the directional rates with the guided-mode
//! phase `exp(i |xi_mu - xi_nu|)`: `-gamma_L` above the diagonal (coupling to
//! atoms on the right travels left), `-gamma_R` below. The diagonal holds the
//! detuning and total on-site loss `gamma / (2 beta)`, which reduces to
//! `(gamma_L + gamma_R) / 2` at perfect coupling.

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{atom_positions, drive_vector, DisorderSpec, SystemConfig};
use crate::error::{ConfigError, Result};

/// One sampled disorder realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisorderRealization {
    /// Phase offsets added to the dimensionless positions.
    pub theta: Vec<f64>,
    /// Per-site detuning offsets.
    pub detunings: Vec<f64>,
    pub trial_index: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
pub struct InteractionMatrix {
    pub m: Mat<Complex64>,
    pub drive: Vec<Complex64>,
    /// Positions used for the phase factors (disorder included).
    pub positions: Vec<f64>,
    pub config_hash: u64,
    pub disorder: Option<DisorderRealization>,
    pub config: SystemConfig,
}

impl InteractionMatrix {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_left(&self) -> usize {
        self.config.n_left
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }

    pub fn omega(&self) -> f64 {
        self.config.omega_rabi
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.m[(i, i)]).sum()
    }

    /// Row-major copy of the matrix elements.
    pub fn to_row_major(&self) -> Vec<Complex64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }
}

/// Builds `M` (or its loss-corrected form when `beta < 1`).
pub fn build_matrix(cfg: &SystemConfig) -> Result<InteractionMatrix> {
    cfg.validate()?;
    let positions = atom_positions(cfg);
    let detunings = vec![0.0; cfg.n_total()];
    assemble(cfg, positions, &detunings, None)
}

/// Builds one disordered realization. The draw for `trial_index` depends only
/// on `(spec.master_seed, trial_index)`.
pub fn build_disordered_matrix(
    cfg: &SystemConfig,
    spec: &DisorderSpec,
    trial_index: usize,
) -> Result<InteractionMatrix> {
    cfg.validate()?;
    spec.validate()?;
    if trial_index >= spec.trials {
        return Err(ConfigError::TrialIndex {
            index: trial_index,
            trials: spec.trials,
        }
        .into());
    }
    let n = cfg.n_total();
    let mut rng = trial_rng(spec.master_seed, trial_index as u64);
    let theta = sample_symmetric(&mut rng, spec.w_phase, n);
    let detunings = sample_symmetric(&mut rng, spec.delta_bar, n);
    let positions = atom_positions(cfg)
        .into_iter()
        .zip(&theta)
        .map(|(x, t)| x + t)
        .collect();
    let realization = DisorderRealization {
        theta,
        detunings: detunings.clone(),
        trial_index,
        master_seed: spec.master_seed,
    };
    assemble(cfg, positions, &detunings, Some(realization))
}

/// Independent ChaCha stream per trial.
pub(crate) fn trial_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

fn sample_symmetric(rng: &mut ChaCha8Rng, width: f64, n: usize) -> Vec<f64> {
    if width == 0.0 {
        return vec![0.0; n];
    }
    (0..n).map(|_| rng.random_range(-width..=width)).collect()
}

fn assemble(
    cfg: &SystemConfig,
    positions: Vec<f64>,
    detunings: &[f64],
    disorder: Option<DisorderRealization>,
) -> Result<InteractionMatrix> {
    let drive = drive_vector(cfg)?;
    let n = cfg.n_total();
    let gl = cfg.gamma_left();
    let gr = cfg.gamma_right();
    let loss = cfg.gamma / (2.0 * cfg.beta);
    // e^{i|x_mu - x_nu|} = e^{i x_far} e^{-i x_near}
    let phases: Vec<Complex64> = positions.iter().map(|&x| Complex64::cis(x)).collect();
    // Rate assignment follows site index, not the (possibly perturbed) order.
    let m = Mat::from_fn(n, n, |mu, nu| {
        if mu == nu {
            Complex64::new(-loss, cfg.delta + detunings[mu])
        } else {
            let rate = if mu < nu { gl } else { gr };
            let phase = if positions[mu] >= positions[nu] {
                phases[mu] * phases[nu].conj()
            } else {
                phases[nu] * phases[mu].conj()
            };
            -rate * phase
        }
    });
    Ok(InteractionMatrix {
        m,
        drive,
        positions,
        config_hash: config_hash(cfg),
        disorder,
        config: cfg.clone(),
    })
}

/// FNV-1a over the canonical JSON encoding of the config.
pub fn config_hash(cfg: &SystemConfig) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
