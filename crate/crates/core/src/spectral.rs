//! Biorthonormal eigendecomposition of the interaction matrix.
//!
//! Right eigenvectors are stored as unit-norm columns; left eigenvectors are
//! the rows of the inverse right-eigenvector matrix, so that
//! `<phi_n^L | phi_m^R> = delta_nm` holds by construction. Modes are stored in
//! ascending `|omega_n|` order (ties broken by ascending `gamma_n`).

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::InteractionMatrix;

/// Eigenvector condition number above which the matrix is treated as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e12;
/// Condition number above which eigen-expansion results are cross-checked.
pub const NEAR_DEFECTIVE_CONDITION: f64 = 1e8;

const TIE_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Eigenvalues `lambda_n` of `M`.
    pub lambdas: Vec<Complex64>,
    /// Unit-norm right eigenvectors as columns.
    pub right_vecs: Mat<Complex64>,
    /// Left eigenvectors as rows, biorthonormal to `right_vecs`.
    pub left_vecs: Mat<Complex64>,
    /// `Delta_n = <phi_n^L | drive / omega>`.
    pub drive_overlaps: Vec<Complex64>,
    pub condition_number: f64,
    /// Solver index of each stored mode.
    pub ordering: Vec<usize>,
    /// Number of adjacent pairs whose `|omega_n|` tied and were ordered by `gamma_n`.
    pub ties_broken: usize,
    pub n_left: usize,
    pub gamma: f64,
    pub omega: f64,
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Complex eigenenergy `E_n = omega_n - i gamma_n = i lambda_n`.
    pub fn energy(&self, n: usize) -> Complex64 {
        Complex64::i() * self.lambdas[n]
    }

    pub fn energies(&self) -> Vec<Complex64> {
        (0..self.len()).map(|n| self.energy(n)).collect()
    }

    pub fn shift(&self, n: usize) -> f64 {
        -self.lambdas[n].im
    }

    pub fn decay_rate(&self, n: usize) -> f64 {
        -self.lambdas[n].re
    }

    pub fn is_subradiant(&self, n: usize) -> bool {
        self.decay_rate(n) < self.gamma
    }

    pub fn min_decay_rate(&self) -> f64 {
        (0..self.len())
            .map(|n| self.decay_rate(n))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn near_defective(&self) -> bool {
        self.condition_number > NEAR_DEFECTIVE_CONDITION
    }

    /// Fraction of `|phi_n^R|^2` on the right group.
    pub fn right_localization(&self, n: usize) -> f64 {
        let col = self.right_vecs.col(n);
        let total: f64 = (0..col.nrows()).map(|mu| col[mu].norm_sqr()).sum();
        let right: f64 = (self.n_left..col.nrows())
            .map(|mu| col[mu].norm_sqr())
            .sum();
        right / total
    }

    /// Mode indices sorted by ascending `|E_n|`.
    pub fn order_by_energy_magnitude(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.lambdas[a]
                .norm()
                .total_cmp(&self.lambdas[b].norm())
                .then(a.cmp(&b))
        });
        idx
    }

    /// Overlaps `<phi_n^L | v>` for an arbitrary vector.
    pub fn left_overlaps(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|k| (0..n).map(|mu| self.left_vecs[(k, mu)] * v[mu]).sum())
            .collect()
    }

    /// `max_{n,m} |<phi_n^L|phi_m^R> - delta_nm|`.
    pub fn biorthogonality_error(&self) -> f64 {
        let prod = &self.left_vecs * &self.right_vecs;
        let n = self.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// `max_n ||M phi_n - lambda_n phi_n|| / ||M||_F`.
    pub fn relative_residual(&self, m: &Mat<Complex64>) -> f64 {
        let scale = m.norm_l2().max(f64::MIN_POSITIVE);
        let mv = m * &self.right_vecs;
        (0..self.len())
            .map(|k| {
                (0..self.len())
                    .map(|mu| (mv[(mu, k)] - self.lambdas[k] * self.right_vecs[(mu, k)]).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
            / scale
    }
}

/// Full non-Hermitian eigendecomposition of `M`.
///
/// Returns [`Error::Defective`] when the right-eigenvector matrix has
/// condition number above [`DEFECTIVE_CONDITION`]; callers then fall back to
/// time-domain integration.
pub fn decompose(mat: &InteractionMatrix) -> Result<SpectralData> {
    let n = mat.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty interaction matrix".into()));
    }
    let evd = mat.m.eigen().map_err(|_| Error::EigenFailed)?;
    let raw_vals = evd.S();
    let raw_vecs = evd.U();

    let lambdas_raw: Vec<Complex64> = (0..n).map(|k| raw_vals[k]).collect();
    let gamma = mat.gamma();
    let order = mode_order(&lambdas_raw, gamma);
    let ties_broken = count_ties(&lambdas_raw, &order, gamma);

    let mut right = Mat::<Complex64>::zeros(n, n);
    for (slot, &k) in order.iter().enumerate() {
        let col = raw_vecs.col(k);
        let norm = col.norm_l2();
        // Fix the gauge: largest component real and positive.
        let pivot = (0..n)
            .max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm()))
            .unwrap_or(0);
        let phase = if col[pivot].norm() > 0.0 {
            col[pivot].conj() / col[pivot].norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for mu in 0..n {
            right[(mu, slot)] = col[mu] * phase / norm;
        }
    }

    let singular = right.singular_values().map_err(|_| Error::EigenFailed)?;
    let smax = singular.first().copied().unwrap_or(0.0);
    let smin = singular.last().copied().unwrap_or(0.0);
    let condition_number = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !condition_number.is_finite() || condition_number > DEFECTIVE_CONDITION {
        return Err(Error::Defective {
            condition: condition_number,
        });
    }

    let left = right
        .partial_piv_lu()
        .solve(Mat::<Complex64>::identity(n, n));
    let lambdas: Vec<Complex64> = order.iter().map(|&k| lambdas_raw[k]).collect();
    let omega = mat.omega();
    let unit_drive: Vec<Complex64> = mat.drive.iter().map(|z| z / omega).collect();

    let mut data = SpectralData {
        lambdas,
        right_vecs: right,
        left_vecs: left,
        drive_overlaps: Vec::new(),
        condition_number,
        ordering: order,
        ties_broken,
        n_left: mat.n_left(),
        gamma,
        omega,
    };
    data.drive_overlaps = data.left_overlaps(&unit_drive);
    Ok(data)
}

/// Eigenvalues only; still available when the matrix is defective.
pub fn eigenvalues(mat: &InteractionMatrix) -> Result<Vec<Complex64>> {
    mat.m.eigenvalues().map_err(|_| Error::EigenFailed)
}

fn mode_order(lambdas: &[Complex64], gamma: f64) -> Vec<usize> {
    let quantize = |x: f64| (x / (gamma * TIE_TOLERANCE)).round() as i64;
    let mut idx: Vec<usize> = (0..lambdas.len()).collect();
    idx.sort_by(|&a, &b| {
        let (la, lb) = (lambdas[a], lambdas[b]);
        quantize(la.im.abs())
            .cmp(&quantize(lb.im.abs()))
            .then(quantize(-la.re).cmp(&quantize(-lb.re)))
            .then((-la.im).total_cmp(&(-lb.im)))
            .then(a.cmp(&b))
    });
    idx
}

fn count_ties(lambdas: &[Complex64], order: &[usize], gamma: f64) -> usize {
    order
        .windows(2)
        .filter(|w| {
            (lambdas[w[0]].im.abs() - lambdas[w[1]].im.abs()).abs() <= gamma * TIE_TOLERANCE
        })
        .count()
}

/// Spectral isolation of the `k` modes closest to the origin.
#[derive(Debug, Clone, Serialize)]
pub struct IsolationReport {
    pub k: usize,
    /// `(mode index, |E_n|)` of the `k` smallest `|E_n|`, ascending.
    pub smallest: Vec<(usize, f64)>,
    /// `min_{n outside} |E_n| / max_{n inside} |E_n|`; infinite when every mode is inside.
    pub isolation_ratio: f64,
    /// Right-group localization of every mode, in stored order.
    pub localization: Vec<f64>,
    pub ties_broken: usize,
}

pub fn spectral_isolation_report(spec: &SpectralData, k: usize) -> Result<IsolationReport> {
    let n = spec.len();
    let k = if n == 1 { 1 } else { k };
    if k == 0 || (n > 1 && k >= n) {
        return Err(Error::InvalidArgument(format!(
            "isolation group size {k} must lie in [1, {n})"
        )));
    }
    let by_mag = spec.order_by_energy_magnitude();
    let smallest: Vec<(usize, f64)> = by_mag[..k]
        .iter()
        .map(|&m| (m, spec.lambdas[m].norm()))
        .collect();
    let inside_max = smallest.iter().map(|&(_, e)| e).fold(0.0, f64::max);
    let outside_min = by_mag[k..]
        .iter()
        .map(|&m| spec.lambdas[m].norm())
        .fold(f64::INFINITY, f64::min);
    Ok(IsolationReport {
        k,
        smallest,
        isolation_ratio: outside_min / inside_max,
        localization: (0..n).map(|m| spec.right_localization(m)).collect(),
        ties_broken: spec.ties_broken,
    })
}

/// Smallest group size `k < N` whose isolation ratio reaches `threshold`.
pub fn isolated_group_size(spec: &SpectralData, threshold: f64, max_k: usize) -> Option<usize> {
    (1..spec.len().min(max_k + 1)).find(|&k| {
        spectral_isolation_report(spec, k)
            .map(|r| r.isolation_ratio >= threshold)
            .unwrap_or(false)
    })
}
