//! Transport observables of the steady excitation profile.
//!
//! * `T_p`: right-group minus left-group share of the normalized steady profile.
//! * `tau`: mean time weighted by the infidelity `1 - F(t)` between the
//!   normalized instantaneous state and the normalized steady state.
//!
//! `tau` is computed by composite Simpson quadrature. With an eigenbasis the
//! integrand is evaluated mode by mode, and modes whose amplitude has decayed
//! below `cutoff * |p(inf)|` are frozen at their steady contribution so that
//! the step can grow as fast modes die out. Without one (defective `M`), the
//! RK4 trajectory is sampled on a uniform grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::dynamics::{
    combine_modes, expm1_complex, steady_coefficients, steady_state, steady_state_eigen, Method,
    Rk4,
};
use crate::error::{Error, Result};
use crate::matrix::{build_matrix, InteractionMatrix};
use crate::spectral::{decompose, eigenvalues, SpectralData};

/// Weight ratio separating the dominant group from the remaining modes.
pub const DOMINANCE_GAP: f64 = 3.0;
/// `tau` is rejected when the tail bound exceeds this fraction of `tau`.
pub const TAIL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauOptions {
    /// Quadrature points per period of the fastest live frequency.
    pub points_per_period: usize,
    /// Horizon in units of the slowest decay time, `T_max = horizon / min gamma_n`.
    pub horizon_decays: f64,
    /// Start of the quadrature grid in units of `1/gamma`.
    pub t_min: f64,
    /// Relative amplitude below which a mode counts as decayed.
    pub cutoff: f64,
    /// Horizon multiplier applied on the single retry.
    pub retry_factor: f64,
    /// RK4 step for the time-domain route, units of `1/gamma`.
    pub fallback_dt: f64,
    /// Upper bound on quadrature samples per attempt.
    pub max_samples: usize,
}

impl Default for TauOptions {
    fn default() -> Self {
        Self {
            points_per_period: 40,
            horizon_decays: 30.0,
            t_min: 1e-6,
            cutoff: 1e-10,
            retry_factor: 4.0,
            fallback_dt: 1e-2,
            max_samples: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauEstimate {
    /// Characteristic time in units of `1/gamma`.
    pub tau: f64,
    pub tail_error: f64,
    /// Profile is time independent; `tau = 0` by convention.
    pub degenerate: bool,
    pub horizon: f64,
    pub samples: usize,
    pub method: Method,
}

/// `P~_mu = |p_mu|^2 / sum |p|^2`.
pub fn normalized_profile(amplitudes: &[Complex64]) -> Result<Vec<f64>> {
    let total: f64 = amplitudes.iter().map(|p| p.norm_sqr()).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroState);
    }
    Ok(amplitudes.iter().map(|p| p.norm_sqr() / total).collect())
}

/// Profile of the state just after switch-on, `p ~ -i Omega~ t`.
pub fn small_time_profile(drive: &[Complex64]) -> Result<Vec<f64>> {
    normalized_profile(drive)
}

pub fn transport_parameter(profile: &[f64], n_left: usize) -> f64 {
    let left: f64 = profile[..n_left.min(profile.len())].iter().sum();
    let right: f64 = profile[n_left.min(profile.len())..].iter().sum();
    right - left
}

fn normalized(v: &[Complex64]) -> Result<Vec<Complex64>> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroState);
    }
    Ok(v.iter().map(|z| z / norm).collect())
}

/// `1 - |<u|psi>|^2 / |psi|^2` for unit `u`, evaluated from the component of
/// `psi` orthogonal to `u`.
fn infidelity(u: &[Complex64], psi: &[Complex64]) -> f64 {
    let overlap: Complex64 = u.iter().zip(psi).map(|(a, b)| a.conj() * b).sum();
    let total: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let perp: f64 = u
        .iter()
        .zip(psi)
        .map(|(a, b)| (b - overlap * a).norm_sqr())
        .sum();
    (perp / total).clamp(0.0, 1.0)
}

/// Running Simpson sums of `int g` and `int t g`.
#[derive(Default, Clone, Copy)]
struct Moments {
    zeroth: f64,
    first: f64,
    peak: f64,
    samples: usize,
}

impl Moments {
    fn simpson(&mut self, a: f64, b: f64, steps: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
        debug_assert!(steps >= 2 && steps.is_multiple_of(2));
        let h = (b - a) / steps as f64;
        let mut last = 0.0;
        for i in 0..=steps {
            let t = if i == steps { b } else { a + i as f64 * h };
            let w = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            } * h
                / 3.0;
            let v = g(t);
            self.zeroth += w * v;
            self.first += w * t * v;
            self.peak = self.peak.max(v);
            last = v;
        }
        self.samples += steps + 1;
        last
    }

    fn finish(&self, horizon: f64, g_end: f64, tail_rate: f64, method: Method) -> TauEstimate {
        if self.peak < 1e-24 || self.zeroth <= 0.0 {
            return TauEstimate {
                tau: 0.0,
                tail_error: 0.0,
                degenerate: true,
                horizon,
                samples: self.samples,
                method,
            };
        }
        let tau = self.first / self.zeroth;
        let tail_error = if g_end > 0.0 && tail_rate > 0.0 {
            let k = 2.0 * tail_rate;
            let tail0 = g_end / k;
            let tail1 = g_end * (horizon / k + 1.0 / (k * k));
            ((self.first + tail1) / (self.zeroth + tail0) - tau).abs()
        } else {
            0.0
        };
        TauEstimate {
            tau,
            tail_error,
            degenerate: false,
            horizon,
            samples: self.samples,
            method,
        }
    }
}

fn even_steps(length: f64, h: f64) -> usize {
    let n = (length / h).ceil().max(2.0) as usize;
    n + n % 2
}

/// Characteristic time from the eigen expansion.
pub fn characteristic_time(
    spec: &SpectralData,
    drive: &[Complex64],
    steady: &[Complex64],
    opts: &TauOptions,
) -> Result<TauEstimate> {
    let first = tau_eigen_attempt(spec, drive, steady, opts, 1.0)?;
    if first.degenerate || first.tail_error <= TAIL_TOLERANCE * first.tau {
        return Ok(first);
    }
    let second = tau_eigen_attempt(spec, drive, steady, opts, opts.retry_factor)?;
    if second.tail_error <= TAIL_TOLERANCE * second.tau {
        Ok(second)
    } else {
        Err(Error::NonConvergent {
            tau: second.tau,
            tail_error: second.tail_error,
        })
    }
}

fn tau_eigen_attempt(
    spec: &SpectralData,
    drive: &[Complex64],
    steady: &[Complex64],
    opts: &TauOptions,
    horizon_scale: f64,
) -> Result<TauEstimate> {
    let n = spec.len();
    let gamma = spec.gamma;
    let u = normalized(steady)?;
    let f0_profile = normalized(drive)?;
    let g0 = infidelity(&u, &f0_profile);
    let coeffs = steady_coefficients(spec)?;
    let min_rate = spec.min_decay_rate();
    if !(min_rate > 0.0) {
        return Err(Error::NonConvergent {
            tau: f64::INFINITY,
            tail_error: f64::INFINITY,
        });
    }
    let horizon = horizon_scale * opts.horizon_decays / min_rate;
    let t_min = opts.t_min / gamma;

    let steady_norm = combine_modes(spec, &coeffs)
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt();
    // Time after which mode k is negligible at the cutoff level.
    let death: Vec<f64> = (0..n)
        .map(|k| {
            let a = coeffs[k].norm();
            if a == 0.0 {
                0.0
            } else {
                ((a / (opts.cutoff * steady_norm)).ln() / spec.decay_rate(k)).max(0.0)
            }
        })
        .collect();

    let mut moments = Moments::default();
    // [0, t_min]: constant small-time infidelity.
    moments.zeroth += g0 * t_min;
    moments.first += g0 * 0.5 * t_min * t_min;
    moments.peak = g0;

    let last_death = death.iter().copied().fold(0.0, f64::max);
    let end = horizon.min(last_death);
    let mut cuts: Vec<f64> = death
        .iter()
        .copied()
        .filter(|&t| t > t_min && t < end)
        .collect();
    cuts.push(end);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    let mut g_end = 0.0;
    let mut a = t_min;
    for (seg, &b) in cuts.iter().enumerate() {
        if b <= a {
            continue;
        }
        let alive: Vec<usize> = (0..n).filter(|&k| death[k] > a).collect();
        let frozen: Vec<Complex64> = {
            let w: Vec<Complex64> = (0..n)
                .map(|k| {
                    if death[k] > a {
                        Complex64::new(0.0, 0.0)
                    } else {
                        coeffs[k]
                    }
                })
                .collect();
            combine_modes(spec, &w)
        };
        let mut rate = alive
            .iter()
            .map(|&k| spec.shift(k).abs().max(spec.decay_rate(k)))
            .fold(0.0, f64::max);
        if seg == 0 {
            rate = rate.max(gamma);
        }
        if rate == 0.0 {
            rate = gamma;
        }
        let h = 2.0 * PI / (opts.points_per_period as f64 * rate);
        let steps = even_steps(b - a, h);
        if moments.samples + steps > opts.max_samples {
            return Err(Error::NonConvergent {
                tau: f64::NAN,
                tail_error: f64::INFINITY,
            });
        }
        let columns: Vec<(Complex64, Complex64)> = alive
            .iter()
            .map(|&k| (coeffs[k], spec.lambdas[k]))
            .collect();
        g_end = moments.simpson(a, b, steps, |t| {
            psi.copy_from_slice(&frozen);
            for (&k, &(c, lambda)) in alive.iter().zip(&columns) {
                let w = -c * expm1_complex(lambda * t);
                for (mu, p) in psi.iter_mut().enumerate() {
                    *p += w * spec.right_vecs[(mu, k)];
                }
            }
            infidelity(&u, &psi)
        });
        a = b;
    }

    // Modes still above the cutoff at the horizon feed the tail bound.
    let (tail_g, tail_rate) = if end < horizon {
        (0.0, 0.0)
    } else {
        let rate = (0..n)
            .filter(|&k| death[k] > horizon)
            .map(|k| spec.decay_rate(k))
            .fold(f64::INFINITY, f64::min);
        (g_end, if rate.is_finite() { rate } else { 0.0 })
    };
    Ok(moments.finish(horizon, tail_g, tail_rate, Method::EigenExpansion))
}

/// Characteristic time from an RK4 trajectory; used when `M` is defective.
pub fn characteristic_time_ode(
    mat: &InteractionMatrix,
    steady: &[Complex64],
    min_decay_rate: f64,
    opts: &TauOptions,
) -> Result<TauEstimate> {
    let first = tau_ode_attempt(mat, steady, min_decay_rate, opts, 1.0)?;
    if first.degenerate || first.tail_error <= TAIL_TOLERANCE * first.tau {
        return Ok(first);
    }
    let second = tau_ode_attempt(mat, steady, min_decay_rate, opts, opts.retry_factor)?;
    if second.tail_error <= TAIL_TOLERANCE * second.tau {
        Ok(second)
    } else {
        Err(Error::NonConvergent {
            tau: second.tau,
            tail_error: second.tail_error,
        })
    }
}

fn tau_ode_attempt(
    mat: &InteractionMatrix,
    steady: &[Complex64],
    min_decay_rate: f64,
    opts: &TauOptions,
    horizon_scale: f64,
) -> Result<TauEstimate> {
    if !(min_decay_rate > 0.0) {
        return Err(Error::NonConvergent {
            tau: f64::INFINITY,
            tail_error: f64::INFINITY,
        });
    }
    let gamma = mat.gamma();
    let dt = opts.fallback_dt / gamma;
    let limit = 0.1 / (gamma / mat.config.beta);
    if dt > limit {
        return Err(Error::StepTooLarge { dt, limit });
    }
    let u = normalized(steady)?;
    let g0 = infidelity(&u, &normalized(&mat.drive)?);
    let horizon_target = horizon_scale * opts.horizon_decays / min_decay_rate;
    let mut steps = (horizon_target / dt).ceil() as usize;
    steps += steps % 2;
    if steps + 1 > opts.max_samples {
        return Err(Error::NonConvergent {
            tau: f64::NAN,
            tail_error: f64::INFINITY,
        });
    }
    let horizon = steps as f64 * dt;

    let mut rk = Rk4::new(mat, dt);
    let mut moments = Moments {
        peak: g0,
        ..Moments::default()
    };
    let mut g_end = g0;
    for i in 0..=steps {
        let t = i as f64 * dt;
        let g = if i == 0 {
            g0
        } else {
            infidelity(&u, rk.amplitudes())
        };
        let w = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        } * dt
            / 3.0;
        moments.zeroth += w * g;
        moments.first += w * t * g;
        moments.peak = moments.peak.max(g);
        g_end = g;
        if i < steps {
            rk.step();
        }
    }
    moments.samples = steps + 1;
    Ok(moments.finish(horizon, g_end, min_decay_rate, Method::TimeIntegration))
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeWeight {
    pub mode: usize,
    pub shift: f64,
    pub decay_rate: f64,
    pub energy_abs: f64,
    pub delta_abs: f64,
    /// `|Delta_n / E_n|`.
    pub weight: f64,
    /// `weight^2 / sum weight^2`: share of the steady population carried by mode `n`.
    pub share: f64,
    pub localization: f64,
    pub subradiant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSpectrum {
    /// Stored (ascending `|omega_n|`) order.
    pub modes: Vec<ModeWeight>,
    /// Dominant modes, heaviest first.
    pub dominant: Vec<usize>,
    /// Largest weight over second largest.
    pub dominance_ratio: f64,
}

/// Steady-state weights of every right eigenmode.
pub fn mode_decomposition(spec: &SpectralData) -> Result<ModeSpectrum> {
    steady_coefficients(spec)?;
    let n = spec.len();
    let weights: Vec<f64> = (0..n)
        .map(|k| (spec.drive_overlaps[k] / spec.energy(k)).norm())
        .collect();
    let total: f64 = weights.iter().map(|w| w * w).sum();
    let modes = (0..n)
        .map(|k| ModeWeight {
            mode: k,
            shift: spec.shift(k),
            decay_rate: spec.decay_rate(k),
            energy_abs: spec.lambdas[k].norm(),
            delta_abs: spec.drive_overlaps[k].norm(),
            weight: weights[k],
            share: if total > 0.0 {
                weights[k] * weights[k] / total
            } else {
                0.0
            },
            localization: spec.right_localization(k),
            subradiant: spec.is_subradiant(k),
        })
        .collect();

    let mut by_weight: Vec<usize> = (0..n).collect();
    by_weight.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let dominance_ratio = if n > 1 {
        weights[by_weight[0]] / weights[by_weight[1]]
    } else {
        f64::INFINITY
    };
    let group = (1..n.min(4))
        .find(|&k| weights[by_weight[k - 1]] >= DOMINANCE_GAP * weights[by_weight[k]])
        .unwrap_or(1);
    Ok(ModeSpectrum {
        modes,
        dominant: by_weight[..group].to_vec(),
        dominance_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    pub steady: Method,
    pub tau: Method,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominantMode {
    pub mode: usize,
    pub weight: f64,
    pub localization: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportResult {
    pub t_p: f64,
    /// Units of `1/gamma`.
    pub tau: f64,
    pub profile: Vec<f64>,
    /// Empty when the eigenbasis is unavailable.
    pub dominant_modes: Vec<DominantMode>,
    pub tail_error: f64,
    pub tau_degenerate: bool,
    pub method: Provenance,
    pub condition_number: Option<f64>,
    /// Relative disagreement between eigen and time-domain routes, reported
    /// for nearly defective matrices.
    pub eigen_error_estimate: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub tau: TauOptions,
}

/// `T_p` alone, from the linear-solve steady state.
pub fn transport_only(mat: &InteractionMatrix) -> Result<f64> {
    let steady = steady_state(mat)?;
    let profile = normalized_profile(&steady.amplitudes)?;
    Ok(transport_parameter(&profile, mat.n_left()))
}

pub fn evaluate(cfg: &SystemConfig, opts: &EvalOptions) -> Result<TransportResult> {
    evaluate_matrix(&build_matrix(cfg)?, opts)
}

/// Full observable set for one matrix, falling back to time integration when
/// the eigenbasis is defective.
pub fn evaluate_matrix(mat: &InteractionMatrix, opts: &EvalOptions) -> Result<TransportResult> {
    let steady = steady_state(mat)?;
    let profile = normalized_profile(&steady.amplitudes)?;
    let t_p = transport_parameter(&profile, mat.n_left());

    match decompose(mat) {
        Ok(spec) => {
            let est = characteristic_time(&spec, &mat.drive, &steady.amplitudes, &opts.tau)?;
            let modes = mode_decomposition(&spec)?;
            let dominant_modes = modes
                .dominant
                .iter()
                .map(|&k| DominantMode {
                    mode: k,
                    weight: modes.modes[k].weight,
                    localization: modes.modes[k].localization,
                })
                .collect();
            let eigen_error_estimate = if spec.near_defective() {
                let ode = characteristic_time_ode(
                    mat,
                    &steady.amplitudes,
                    spec.min_decay_rate(),
                    &opts.tau,
                )?;
                let eig_steady = steady_state_eigen(&spec)?;
                let scale = steady
                    .amplitudes
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                let amp_err = eig_steady
                    .amplitudes
                    .iter()
                    .zip(&steady.amplitudes)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
                    / scale;
                let tau_err = if est.tau > 0.0 {
                    (est.tau - ode.tau).abs() / est.tau
                } else {
                    0.0
                };
                Some(amp_err.max(tau_err))
            } else {
                None
            };
            Ok(TransportResult {
                t_p,
                tau: est.tau,
                profile,
                dominant_modes,
                tail_error: est.tail_error,
                tau_degenerate: est.degenerate,
                method: Provenance {
                    steady: Method::LinearSolve,
                    tau: est.method,
                },
                condition_number: Some(spec.condition_number),
                eigen_error_estimate,
            })
        }
        Err(Error::Defective { condition }) => {
            let rate = eigenvalues(mat)?
                .iter()
                .map(|l| -l.re)
                .fold(f64::INFINITY, f64::min);
            let est = characteristic_time_ode(mat, &steady.amplitudes, rate, &opts.tau)?;
            Ok(TransportResult {
                t_p,
                tau: est.tau,
                profile,
                dominant_modes: Vec::new(),
                tail_error: est.tail_error,
                tau_degenerate: est.degenerate,
                method: Provenance {
                    steady: Method::LinearSolve,
                    tau: est.method,
                },
                condition_number: Some(condition),
                eigen_error_estimate: None,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve_eigen;

    #[test]
    fn profile_normalization() {
        assert_eq!(
            normalized_profile(&[Complex64::new(0.0, 3.0)]).unwrap(),
            vec![1.0]
        );
        let p = normalized_profile(&[Complex64::new(0.7, 0.0), Complex64::new(0.0, 0.7)]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert!(matches!(
            normalized_profile(&[Complex64::new(0.0, 0.0); 3]),
            Err(Error::ZeroState)
        ));
    }

    #[test]
    fn transport_parameter_limits() {
        assert_eq!(transport_parameter(&[0.0, 0.0, 0.5, 0.5], 2), 1.0);
        assert_eq!(transport_parameter(&[0.25; 4], 2), 0.0);
        assert_eq!(transport_parameter(&[0.5, 0.5, 0.0], 2), -1.0);
    }

    #[test]
    fn single_atom_tau_is_degenerate() {
        let r = evaluate(&SystemConfig::new(1, 0), &EvalOptions::default()).unwrap();
        assert!(r.tau_degenerate);
        assert_eq!(r.tau, 0.0);
        assert_eq!(r.profile, vec![1.0]);
        assert_eq!(r.t_p, -1.0);
        assert_eq!(r.dominant_modes.len(), 1);
    }

    #[test]
    fn single_mode_spectrum() {
        let spec = decompose(&build_matrix(&SystemConfig::new(1, 0)).unwrap()).unwrap();
        let ms = mode_decomposition(&spec).unwrap();
        assert_eq!(ms.modes.len(), 1);
        assert!((ms.modes[0].share - 1.0).abs() < 1e-15);
        assert_eq!(ms.dominant, vec![0]);
    }

    /// Direct oracle: trapezoid on a very fine uniform grid
    /// built from `evolve_eigen` states.
    fn tau_brute_force(
        spec: &SpectralData,
        drive: &[Complex64],
        steady: &[Complex64],
        horizon: f64,
        dt: f64,
    ) -> f64 {
        let u = normalized(steady).unwrap();
        let steps = (horizon / dt) as usize;
        // At t -> 0 the state points along the drive.
        let d = normalized(drive).unwrap();
        let g0 = 1.0
            - u.iter()
                .zip(&d)
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex64>()
                .norm_sqr();
        let (mut num, mut den) = (0.0, 0.5 * dt * g0);
        for i in 1..=steps {
            let t = i as f64 * dt;
            let psi = evolve_eigen(spec, t).unwrap().amplitudes;
            let overlap: Complex64 = u.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
            let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            let g = 1.0 - overlap.norm_sqr() / norm;
            let w = if i == steps { 0.5 * dt } else { dt };
            num += w * t * g;
            den += w * g;
        }
        num / den
    }

    #[test]
    fn tau_matches_fine_grid_oracle() {
        let cfg = SystemConfig::new(3, 3).with_spacings_pi(1.3, 1.5, 1.7);
        let mat = build_matrix(&cfg).unwrap();
        let spec = decompose(&mat).unwrap();
        let steady = steady_state(&mat).unwrap();
        let est = characteristic_time(
            &spec,
            &mat.drive,
            &steady.amplitudes,
            &TauOptions::default(),
        )
        .unwrap();
        let brute = tau_brute_force(&spec, &mat.drive, &steady.amplitudes, est.horizon, 2e-3);
        assert!(
            (est.tau - brute).abs() < 1e-4 * brute,
            "{} vs {}",
            est.tau,
            brute
        );
    }

    #[test]
    fn eigen_and_time_domain_tau_agree() {
        let cfg = SystemConfig::new(3, 2).with_spacings_pi(1.2, 1.6, 1.4);
        let mat = build_matrix(&cfg).unwrap();
        let spec = decompose(&mat).unwrap();
        let steady = steady_state(&mat).unwrap();
        let opts = TauOptions {
            fallback_dt: 2e-3,
            ..TauOptions::default()
        };
        let a = characteristic_time(&spec, &mat.drive, &steady.amplitudes, &opts).unwrap();
        let b = characteristic_time_ode(&mat, &steady.amplitudes, spec.min_decay_rate(), &opts)
            .unwrap();
        assert!(
            (a.tau - b.tau).abs() < 1e-4 * a.tau,
            "{} vs {}",
            a.tau,
            b.tau
        );
    }

    #[test]
    fn tau_independent_of_drive_strength() {
        let cfg = SystemConfig::new(4, 4).with_spacings_pi(1.5, 1.5, 1.2);
        let a = evaluate(&cfg, &EvalOptions::default()).unwrap();
        let b = evaluate(&cfg.clone().with_omega(7e-3), &EvalOptions::default()).unwrap();
        assert!((a.tau - b.tau).abs() <= 1e-10 * a.tau);
        assert!((a.t_p - b.t_p).abs() <= 1e-12);
    }

    #[test]
    fn cascaded_config_uses_time_domain_route() {
        let cfg = SystemConfig::new(3, 3).with_directionality(1.0);
        let r = evaluate(&cfg, &EvalOptions::default()).unwrap();
        assert_eq!(r.method.tau, Method::TimeIntegration);
        assert!(r.t_p.is_finite() && r.tau.is_finite() && r.tau > 0.0);
        assert!(r.dominant_modes.is_empty());
    }
}
