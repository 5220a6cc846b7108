//! Single-excitation amplitudes `p_mu(t)` under `dp/dt = M p - i Omega~`,
//! starting from the ground state.
//!
//! Three independent routes are provided: the closed-form eigenmode expansion,
//! fixed-step RK4 integration, and a direct linear solve for `t -> infinity`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::InteractionMatrix;
use crate::spectral::SpectralData;

/// Modes with `|E_n| / gamma` below this are treated as decoherence-free.
pub const DIVERGENT_ENERGY: f64 = 1e-12;
/// Pivot ratio below which the steady-state solve is declared singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;
/// Total population above which the linear model is flagged as outside the weak-drive regime.
pub const WEAK_POPULATION_LIMIT: f64 = 1e-2;
/// Default RK4 step in units of `1/gamma`.
pub const DEFAULT_DT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EigenExpansion,
    TimeIntegration,
    LinearSolve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationState {
    pub t: f64,
    pub amplitudes: Vec<Complex64>,
    pub method: Method,
}

impl ExcitationState {
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|p| p.norm_sqr()).collect()
    }

    pub fn total_population(&self) -> f64 {
        self.amplitudes.iter().map(|p| p.norm_sqr()).sum()
    }

    pub fn is_weak(&self) -> bool {
        self.total_population() < WEAK_POPULATION_LIMIT
    }
}

/// `exp(z) - 1` without cancellation for small `|z|`.
pub(crate) fn expm1_complex(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half_sin = (0.5 * y).sin();
    Complex64::new(
        x.exp_m1() * y.cos() - 2.0 * half_sin * half_sin,
        x.exp() * y.sin(),
    )
}

fn check_divergence(spec: &SpectralData) -> Result<()> {
    for n in 0..spec.len() {
        let magnitude = spec.lambdas[n].norm();
        if magnitude < DIVERGENT_ENERGY * spec.gamma && spec.drive_overlaps[n].norm() > 1e-12 {
            return Err(Error::DivergentMode { mode: n, magnitude });
        }
    }
    Ok(())
}

/// Per-mode steady coefficients `c_n = -Omega Delta_n / E_n`.
pub fn steady_coefficients(spec: &SpectralData) -> Result<Vec<Complex64>> {
    check_divergence(spec)?;
    Ok((0..spec.len())
        .map(|n| -spec.omega * spec.drive_overlaps[n] / spec.energy(n))
        .collect())
}

/// Amplitudes at time `t` from the eigenmode expansion.
pub fn evolve_eigen(spec: &SpectralData, t: f64) -> Result<ExcitationState> {
    let coeffs = steady_coefficients(spec)?;
    // 1 - exp(-i E t) = -expm1(lambda t)
    let weights: Vec<Complex64> = coeffs
        .iter()
        .zip(&spec.lambdas)
        .map(|(c, &l)| -c * expm1_complex(l * t))
        .collect();
    Ok(ExcitationState {
        t,
        amplitudes: combine_modes(spec, &weights),
        method: Method::EigenExpansion,
    })
}

/// Exact `t -> infinity` limit of the eigen expansion.
pub fn steady_state_eigen(spec: &SpectralData) -> Result<ExcitationState> {
    let coeffs = steady_coefficients(spec)?;
    Ok(ExcitationState {
        t: f64::INFINITY,
        amplitudes: combine_modes(spec, &coeffs),
        method: Method::EigenExpansion,
    })
}

pub(crate) fn combine_modes(spec: &SpectralData, weights: &[Complex64]) -> Vec<Complex64> {
    let n = spec.len();
    (0..n)
        .map(|mu| (0..n).map(|k| weights[k] * spec.right_vecs[(mu, k)]).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub dt: f64,
    /// Record every `stride`-th step (the final time is always recorded).
    pub stride: usize,
    /// Largest `|omega_n|` when known; tightens the step check.
    pub max_shift: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            stride: 1,
            max_shift: None,
        }
    }
}

impl OdeOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    fn step_limit(&self, mat: &InteractionMatrix) -> f64 {
        let cfg = &mat.config;
        let rate = (cfg.gamma / cfg.beta).max(self.max_shift.unwrap_or(0.0));
        0.1 / rate
    }
}

/// Dense row-major matrix-vector kernel for the RK4 loop.
struct Rhs {
    n: usize,
    m: Vec<Complex64>,
    source: Vec<Complex64>,
}

impl Rhs {
    fn new(mat: &InteractionMatrix) -> Self {
        let minus_i = Complex64::new(0.0, -1.0);
        Self {
            n: mat.dim(),
            m: mat.to_row_major(),
            source: mat.drive.iter().map(|w| minus_i * w).collect(),
        }
    }

    fn eval(&self, p: &[Complex64], out: &mut [Complex64]) {
        for (mu, o) in out.iter_mut().enumerate() {
            let row = &self.m[mu * self.n..(mu + 1) * self.n];
            *o = row.iter().zip(p).map(|(a, b)| a * b).sum::<Complex64>() + self.source[mu];
        }
    }
}

/// Fixed-step RK4 integrator for the linear amplitude equation.
pub struct Rk4 {
    rhs: Rhs,
    dt: f64,
    p: Vec<Complex64>,
    steps: u64,
    k: [Vec<Complex64>; 4],
    scratch: Vec<Complex64>,
}

impl Rk4 {
    pub fn new(mat: &InteractionMatrix, dt: f64) -> Self {
        let n = mat.dim();
        let zeros = vec![Complex64::new(0.0, 0.0); n];
        Self {
            rhs: Rhs::new(mat),
            dt,
            p: zeros.clone(),
            steps: 0,
            k: [zeros.clone(), zeros.clone(), zeros.clone(), zeros.clone()],
            scratch: zeros,
        }
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.p
    }

    pub fn step(&mut self) {
        let h = self.dt;
        let [k1, k2, k3, k4] = &mut self.k;
        let s = &mut self.scratch;
        self.rhs.eval(&self.p, k1);
        for i in 0..s.len() {
            s[i] = self.p[i] + 0.5 * h * k1[i];
        }
        self.rhs.eval(s, k2);
        for i in 0..s.len() {
            s[i] = self.p[i] + 0.5 * h * k2[i];
        }
        self.rhs.eval(s, k3);
        for i in 0..s.len() {
            s[i] = self.p[i] + h * k3[i];
        }
        self.rhs.eval(s, k4);
        for i in 0..s.len() {
            self.p[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        self.steps += 1;
    }

    fn snapshot(&self) -> ExcitationState {
        ExcitationState {
            t: self.time(),
            amplitudes: self.p.clone(),
            method: Method::TimeIntegration,
        }
    }
}

/// Integrates from `p(0) = 0` to `t_final`, sampling every `opts.stride` steps.
pub fn evolve_ode(
    mat: &InteractionMatrix,
    t_final: f64,
    opts: &OdeOptions,
) -> Result<Vec<ExcitationState>> {
    let limit = opts.step_limit(mat);
    if !(opts.dt > 0.0) || opts.dt > limit {
        return Err(Error::StepTooLarge { dt: opts.dt, limit });
    }
    if !(t_final >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_final = {t_final}")));
    }
    let stride = opts.stride.max(1);
    let n_steps = (t_final / opts.dt).round() as u64;
    let mut rk = Rk4::new(mat, opts.dt);
    let mut out = vec![rk.snapshot()];
    for i in 1..=n_steps {
        rk.step();
        if i % stride as u64 == 0 || i == n_steps {
            out.push(rk.snapshot());
        }
    }
    Ok(out)
}

/// Amplitudes at `t_final` only.
pub fn evolve_ode_final(mat: &InteractionMatrix, t_final: f64, dt: f64) -> Result<ExcitationState> {
    let opts = OdeOptions {
        dt,
        stride: usize::MAX,
        max_shift: None,
    };
    let traj = evolve_ode(mat, t_final, &opts)?;
    Ok(traj
        .into_iter()
        .last()
        .expect("trajectory holds the initial state"))
}

/// `p(infinity) = M^{-1} (i Omega~)` by LU with partial pivoting.
pub fn steady_state(mat: &InteractionMatrix) -> Result<ExcitationState> {
    let n = mat.dim();
    let lu = mat.m.partial_piv_lu();
    let u = lu.U();
    let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let p = u[(i, i)].norm();
        pmin = pmin.min(p);
        pmax = pmax.max(p);
    }
    let singular = || {
        let (l, d, r) = mat.config.spacings_pi();
        Error::SingularMatrix {
            xi_left_pi: l,
            xi_d_pi: d,
            xi_right_pi: r,
        }
    };
    if !(pmin > SINGULAR_PIVOT_RATIO * pmax) {
        return Err(singular());
    }
    let rhs = Mat::from_fn(n, 1, |mu, _| Complex64::i() * mat.drive[mu]);
    let x = lu.solve(rhs);
    let amplitudes: Vec<Complex64> = (0..n).map(|mu| x[(mu, 0)]).collect();
    if amplitudes
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(singular());
    }
    Ok(ExcitationState {
        t: f64::INFINITY,
        amplitudes,
        method: Method::LinearSolve,
    })
}
