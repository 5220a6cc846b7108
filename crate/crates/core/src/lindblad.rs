//! Dense master-equation integration over the full `2^N` Hilbert space.
//!
//! Basis index bit `mu` set means atom `mu` is excited; index 0 is the
//! collective ground state. The generator is assembled term by term from the
//! operator definitions (drive, detuning, coherent exchange, collective jumps)
//! without reference to the interaction matrix, so comparisons against the
//! single-excitation model are independent.

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{atom_positions, SystemConfig};
use crate::dynamics::{evolve_eigen, evolve_ode, OdeOptions};
use crate::error::{Error, Result};
use crate::matrix::build_matrix;
use crate::spectral::decompose;

/// Largest atom number accepted (`dim = 64`).
pub const MAX_ATOMS: usize = 6;
/// RK4 step bound in units of `1/gamma`.
pub const MAX_STEP: f64 = 0.05;
/// Eigenvalues of `rho` below `-POSITIVITY_TOLERANCE` abort the run.
pub const POSITIVITY_TOLERANCE: f64 = 1e-6;
pub const TRACE_TOLERANCE: f64 = 1e-9;
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub n_atoms: usize,
    pub rho: Mat<Complex64>,
}

impl DensityMatrix {
    pub fn ground(n_atoms: usize) -> Self {
        let dim = 1 << n_atoms;
        let mut rho = Mat::zeros(dim, dim);
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        Self { n_atoms, rho }
    }

    /// `|psi><psi|` for a normalized state vector.
    pub fn pure(n_atoms: usize, psi: &[Complex64]) -> Result<Self> {
        let dim = 1 << n_atoms;
        if psi.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "state has {} components, expected {dim}",
                psi.len()
            )));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroState);
        }
        let rho = Mat::from_fn(dim, dim, |a, b| psi[a] * psi[b].conj() / (norm * norm));
        Ok(Self { n_atoms, rho })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|a| self.rho[(a, a)]).sum()
    }

    /// `max_{ab} |rho_ab - conj(rho_ba)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let dim = self.dim();
        let mut worst = 0.0f64;
        for a in 0..dim {
            for b in a..dim {
                worst = worst.max((self.rho[(a, b)] - self.rho[(b, a)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let dim = self.dim();
        let herm = Mat::from_fn(dim, dim, |a, b| {
            0.5 * (self.rho[(a, b)] + self.rho[(b, a)].conj())
        });
        let values = herm
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|_| Error::EigenFailed)?;
        Ok(values.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Site-resolved `<sigma_mu^dag sigma_mu>`.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.n_atoms)
            .map(|mu| {
                (0..self.dim())
                    .filter(|a| a & (1 << mu) != 0)
                    .map(|a| self.rho[(a, a)].re)
                    .sum()
            })
            .collect()
    }
}

/// Generator `L[rho] = -i[H, rho] - {K, rho}/2 + sum_{mu nu} C_{mu nu} sigma_nu rho sigma_mu^dag`
/// with `K = sum_{mu nu} C_{mu nu} sigma_mu^dag sigma_nu`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    n_atoms: usize,
    hamiltonian: Mat<Complex64>,
    anticommutator: Mat<Complex64>,
    /// `-iH - K/2`, so that `L[rho] = G rho + rho G^dag + J[rho]`.
    generator: Mat<Complex64>,
    /// Dense `C_{mu nu}`, row-major.
    jump_rates: Vec<Complex64>,
    gamma: f64,
}

/// Adds `coeff * sigma_mu^dag sigma_nu` to a dense operator.
fn add_hop(op: &mut Mat<Complex64>, mu: usize, nu: usize, coeff: Complex64) {
    let dim = op.nrows();
    for b in 0..dim {
        if b & (1 << nu) == 0 {
            continue;
        }
        let lowered = b & !(1 << nu);
        if lowered & (1 << mu) != 0 {
            continue;
        }
        let a = lowered | (1 << mu);
        op[(a, b)] += coeff;
    }
}

/// Adds `coeff * (sigma_mu + sigma_mu^dag)` to a dense operator.
fn add_flip(op: &mut Mat<Complex64>, mu: usize, coeff: Complex64) {
    for b in 0..op.nrows() {
        op[(b ^ (1 << mu), b)] += coeff;
    }
}

pub fn build_liouvillian(cfg: &SystemConfig) -> Result<Liouvillian> {
    cfg.validate()?;
    let n = cfg.n_total();
    if n > MAX_ATOMS {
        return Err(Error::TooLarge { n, max: MAX_ATOMS });
    }
    let dim = 1 << n;
    let x = atom_positions(cfg);
    let (gl, gr, gng) = (cfg.gamma_left(), cfg.gamma_right(), cfg.gamma_nonguided());
    let i = Complex64::i();

    let mut h = Mat::<Complex64>::zeros(dim, dim);
    for mu in 0..n {
        add_hop(&mut h, mu, mu, Complex64::from(-cfg.delta));
    }
    for (mu, driven) in cfg.driven_sites().into_iter().enumerate() {
        if driven {
            add_flip(&mut h, mu, Complex64::from(cfg.omega_rabi));
        }
    }
    // Coherent exchange: -i g/2 (e^{i|dx|} s_a^dag s_b - e^{-i|dx|} s_b^dag s_a),
    // with (a, b) = (mu, nu) for mu < nu under gamma_L and mu > nu under gamma_R.
    for mu in 0..n {
        for nu in 0..n {
            if mu == nu {
                continue;
            }
            let rate = if mu < nu { gl } else { gr };
            let phase = Complex64::cis((x[mu] - x[nu]).abs());
            add_hop(&mut h, mu, nu, -i * 0.5 * rate * phase);
            add_hop(&mut h, nu, mu, i * 0.5 * rate * phase.conj());
        }
    }

    let mut jump_rates = vec![ZERO; n * n];
    for mu in 0..n {
        for nu in 0..n {
            let dx = x[mu] - x[nu];
            let mut c = gl * Complex64::cis(-dx) + gr * Complex64::cis(dx);
            if mu == nu {
                c += gng;
            }
            jump_rates[mu * n + nu] = c;
        }
    }
    let mut k = Mat::<Complex64>::zeros(dim, dim);
    for mu in 0..n {
        for nu in 0..n {
            add_hop(&mut k, mu, nu, jump_rates[mu * n + nu]);
        }
    }
    let generator = Mat::from_fn(dim, dim, |a, b| -i * h[(a, b)] - 0.5 * k[(a, b)]);
    Ok(Liouvillian {
        n_atoms: n,
        hamiltonian: h,
        anticommutator: k,
        generator,
        jump_rates,
        gamma: cfg.gamma,
    })
}

impl Liouvillian {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        1 << self.n_atoms
    }

    pub fn hamiltonian(&self) -> &Mat<Complex64> {
        &self.hamiltonian
    }

    pub fn anticommutator(&self) -> &Mat<Complex64> {
        &self.anticommutator
    }

    /// `d rho / dt`.
    pub fn apply(&self, rho: &Mat<Complex64>) -> Mat<Complex64> {
        let g = &self.generator;
        let mut out = g * rho + rho * g.adjoint();
        let n = self.n_atoms;
        let dim = self.dim();
        // (sigma_nu rho sigma_mu^dag)_{ab} = rho_{a|nu, b|mu} for a without nu, b without mu.
        for mu in 0..n {
            for nu in 0..n {
                let c = self.jump_rates[mu * n + nu];
                for b in (0..dim).filter(|b| b & (1 << mu) == 0) {
                    let bb = b | (1 << mu);
                    for a in (0..dim).filter(|a| a & (1 << nu) == 0) {
                        out[(a, b)] += c * rho[(a | (1 << nu), bb)];
                    }
                }
            }
        }
        out
    }

    fn rk4_step(&self, rho: &Mat<Complex64>, h: f64) -> Mat<Complex64> {
        let dim = self.dim();
        let shifted =
            |k: &Mat<Complex64>, s: f64| Mat::from_fn(dim, dim, |a, b| rho[(a, b)] + s * k[(a, b)]);
        let k1 = self.apply(rho);
        let k2 = self.apply(&shifted(&k1, 0.5 * h));
        let k3 = self.apply(&shifted(&k2, 0.5 * h));
        let k4 = self.apply(&shifted(&k3, h));
        Mat::from_fn(dim, dim, |a, b| {
            rho[(a, b)] + h / 6.0 * (k1[(a, b)] + 2.0 * (k2[(a, b)] + k3[(a, b)]) + k4[(a, b)])
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    /// `populations[k][mu]` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

/// RK4 from an arbitrary initial state, recording every `stride`-th step.
pub fn evolve_from(
    liouvillian: &Liouvillian,
    initial: DensityMatrix,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<OracleTrajectory> {
    let limit = MAX_STEP / liouvillian.gamma;
    if !(dt > 0.0) || dt > limit {
        return Err(Error::StepTooLarge { dt, limit });
    }
    if !(t_final >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_final = {t_final}")));
    }
    if initial.n_atoms != liouvillian.n_atoms {
        return Err(Error::InvalidArgument("initial state size mismatch".into()));
    }
    let stride = stride.max(1);
    let steps = (t_final / dt).round() as usize;
    let mut state = initial;
    let mut out = OracleTrajectory {
        times: Vec::new(),
        populations: Vec::new(),
        max_trace_error: 0.0,
        max_hermiticity_error: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    for step in 0..=steps {
        if step > 0 {
            state.rho = liouvillian.rk4_step(&state.rho, dt);
        }
        if step % stride != 0 && step != steps {
            continue;
        }
        let t = step as f64 * dt;
        let lowest = state.min_eigenvalue()?;
        if lowest < -POSITIVITY_TOLERANCE {
            return Err(Error::PositivityLost {
                t,
                min_eigenvalue: lowest,
            });
        }
        out.min_eigenvalue = out.min_eigenvalue.min(lowest);
        out.max_trace_error = out.max_trace_error.max((state.trace() - 1.0).norm());
        out.max_hermiticity_error = out.max_hermiticity_error.max(state.hermiticity_error());
        out.times.push(t);
        out.populations.push(state.populations());
    }
    if out.max_trace_error > TRACE_TOLERANCE || out.max_hermiticity_error > HERMITICITY_TOLERANCE {
        log::warn!(
            "oracle drift: trace error {:.3e}, hermiticity error {:.3e}",
            out.max_trace_error,
            out.max_hermiticity_error
        );
    }
    Ok(out)
}

/// Site populations from the ground state, sampled every step.
pub fn evolve_rho(cfg: &SystemConfig, t_final: f64, dt: f64) -> Result<OracleTrajectory> {
    let liouvillian = build_liouvillian(cfg)?;
    evolve_from(
        &liouvillian,
        DensityMatrix::ground(cfg.n_total()),
        t_final,
        dt,
        1,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    /// `max_t max_mu |<n_mu> - |p_mu|^2| / max_mu |p_mu|^2`.
    pub max_relative_deviation: f64,
    pub worst_time: f64,
    pub samples: usize,
    pub trajectory: OracleTrajectory,
}

/// Master-equation populations against the single-excitation model over `(0, t_final]`.
pub fn compare_with_effective(
    cfg: &SystemConfig,
    t_final: f64,
    dt: f64,
) -> Result<OracleComparison> {
    let trajectory = evolve_rho(cfg, t_final, dt)?;
    let mat = build_matrix(cfg)?;
    let reference: Vec<Vec<f64>> = match decompose(&mat) {
        Ok(spec) => trajectory
            .times
            .iter()
            .map(|&t| evolve_eigen(&spec, t).map(|s| s.populations()))
            .collect::<Result<_>>()?,
        Err(Error::Defective { .. }) => {
            let opts = OdeOptions::with_dt(dt);
            evolve_ode(&mat, t_final, &opts)?
                .iter()
                .map(|s| s.populations())
                .collect()
        }
        Err(e) => return Err(e),
    };
    let mut worst = (0.0f64, 0.0f64);
    for ((&t, oracle), model) in trajectory
        .times
        .iter()
        .zip(&trajectory.populations)
        .zip(&reference)
    {
        let scale = model.iter().cloned().fold(0.0, f64::max);
        if t == 0.0 || scale == 0.0 {
            continue;
        }
        let dev = oracle
            .iter()
            .zip(model)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        if dev > worst.0 {
            worst = (dev, t);
        }
    }
    Ok(OracleComparison {
        max_relative_deviation: worst.0,
        worst_time: worst.1,
        samples: trajectory.times.len().saturating_sub(1),
        trajectory,
    })
}
