//! Parameter scans, optimal-spacing searches and disorder ensembles.
//!
//! Every cell and trial is evaluated independently and collected in index
//! order, so results do not depend on scheduling or thread count.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DisorderSpec, SystemConfig};
use crate::dynamics::Method;
use crate::error::{ConfigError, Error, Result};
use crate::matrix::{build_disordered_matrix, build_matrix};
use crate::observables::{evaluate_matrix, transport_only, EvalOptions, TauOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Index-ordered map over `0..n`.
pub fn par_map<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    XiLeft,
    XiRight,
    XiD,
    Directionality,
    NTotal,
    Beta,
    WPhase,
    DeltaBar,
}

impl Axis {
    pub const ALL: [Axis; 8] = [
        Axis::XiLeft,
        Axis::XiRight,
        Axis::XiD,
        Axis::Directionality,
        Axis::NTotal,
        Axis::Beta,
        Axis::WPhase,
        Axis::DeltaBar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::XiLeft => "xi_left",
            Axis::XiRight => "xi_right",
            Axis::XiD => "xi_d",
            Axis::Directionality => "directionality",
            Axis::NTotal => "n_total",
            Axis::Beta => "beta",
            Axis::WPhase => "w_phase",
            Axis::DeltaBar => "delta_bar",
        }
    }

    /// Axis values are given in units of π.
    pub fn in_pi_units(self) -> bool {
        matches!(
            self,
            Axis::XiLeft | Axis::XiRight | Axis::XiD | Axis::WPhase
        )
    }

    fn is_spacing(self) -> bool {
        matches!(self, Axis::XiLeft | Axis::XiRight | Axis::XiD)
    }

    fn is_disorder(self) -> bool {
        matches!(self, Axis::WPhase | Axis::DeltaBar)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ConfigError::Sweep(format!("unknown axis `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub axis: Axis,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(axis: Axis, min: f64, max: f64, count: usize) -> Self {
        Self {
            axis,
            min,
            max,
            count,
        }
    }

    /// Evenly spaced values including both ends, in user units.
    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + i as f64 * step
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Sweep(format!("{}: {msg}", self.axis)));
        if self.count < 2 {
            return bad(format!("point count {} < 2", self.count));
        }
        if !self.min.is_finite() || !self.max.is_finite() {
            return bad("non-finite range".into());
        }
        if self.axis == Axis::NTotal {
            for v in self.values() {
                if (v - v.round()).abs() > 1e-9 || (v.round() as i64) % 2 != 0 || v < 2.0 {
                    return bad(format!("value {v} is not an even atom number"));
                }
            }
        }
        Ok(())
    }
}

/// Parses `axis=min:max:count`.
impl FromStr for AxisSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let err = || ConfigError::Sweep(format!("expected axis=min:max:count, got `{s}`"));
        let (name, range) = s.split_once('=').ok_or_else(err)?;
        let parts: Vec<&str> = range.split(':').collect();
        let [min, max, count] = parts.as_slice() else {
            return Err(err());
        };
        let spec = AxisSpec {
            axis: name.trim().parse()?,
            min: min.trim().parse().map_err(|_| err())?,
            max: max.trim().parse().map_err(|_| err())?,
            count: count.trim().parse().map_err(|_| err())?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub axes: Vec<AxisSpec>,
    /// Averages every cell over disorder realizations.
    pub per_point_disorder: Option<DisorderSpec>,
    /// Replaces the spacings of every cell with the optimum of an inner search.
    pub optimize_spacings: Option<OptimizeSpec>,
    pub compute_tau: bool,
    pub tau: TauOptions,
}

impl SweepSpec {
    pub fn new(base: SystemConfig, axes: Vec<AxisSpec>) -> Self {
        Self {
            base,
            axes,
            per_point_disorder: None,
            optimize_spacings: None,
            compute_tau: true,
            tau: TauOptions::default(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(ConfigError::Sweep(format!(
                "expected one or two axes, got {}",
                self.axes.len()
            )));
        }
        if self.axes.len() == 2 && self.axes[0].axis == self.axes[1].axis {
            return Err(ConfigError::Sweep("duplicate axis".into()));
        }
        for a in &self.axes {
            a.validate()?;
            if a.axis.is_disorder() && self.per_point_disorder.is_none() {
                return Err(ConfigError::Sweep(format!(
                    "{} axis requires per_point_disorder",
                    a.axis
                )));
            }
            if a.axis.is_spacing() && self.optimize_spacings.is_some() {
                return Err(ConfigError::Sweep(format!(
                    "{} axis conflicts with optimize_spacings",
                    a.axis
                )));
            }
        }
        if let Some(d) = &self.per_point_disorder {
            d.validate()?;
        }
        if let Some(o) = &self.optimize_spacings {
            o.validate()?;
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    /// Singular steady state at Bragg-type spacings.
    Bragg,
    /// Eigenbasis defective and the time-domain fallback also failed.
    Defective,
    /// `tau` integral did not converge; `t_p` is still reported.
    NonConvergent,
    /// Every disorder trial was excluded.
    AllExcluded,
    Invalid,
}

impl CellFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CellFlag::Bragg => "bragg",
            CellFlag::Defective => "defective",
            CellFlag::NonConvergent => "nonconvergent",
            CellFlag::AllExcluded => "all_excluded",
            CellFlag::Invalid => "invalid",
        }
    }

    fn of(err: &Error) -> Self {
        match err {
            Error::SingularMatrix { .. } | Error::DivergentMode { .. } | Error::ZeroState => {
                CellFlag::Bragg
            }
            Error::Defective { .. } | Error::EigenFailed | Error::EigenUnavailable(_) => {
                CellFlag::Defective
            }
            Error::NonConvergent { .. } => CellFlag::NonConvergent,
            _ => CellFlag::Invalid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantSummary {
    pub count: usize,
    pub weight: f64,
    pub localization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean_t_p: f64,
    pub se_t_p: f64,
    pub mean_tau: Option<f64>,
    pub se_tau: Option<f64>,
    pub trials: usize,
    pub used: usize,
    pub excluded: usize,
    pub excluded_bragg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// Axis coordinates in user units.
    pub coords: Vec<f64>,
    pub t_p: Option<f64>,
    pub tau: Option<f64>,
    pub flag: Option<CellFlag>,
    pub message: Option<String>,
    pub method: Option<Method>,
    pub dominant: Option<DominantSummary>,
    pub ensemble: Option<EnsembleStats>,
    /// Spacings in units of π chosen by the inner search.
    pub optimum_pi: Option<[f64; 3]>,
}

impl SweepCell {
    fn empty(coords: Vec<f64>) -> Self {
        Self {
            coords,
            t_p: None,
            tau: None,
            flag: None,
            message: None,
            method: None,
            dominant: None,
            ensemble: None,
            optimum_pi: None,
        }
    }

    fn flagged(mut self, err: &Error) -> Self {
        self.flag = Some(CellFlag::of(err));
        self.message = Some(err.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<AxisSpec>,
    pub axis_values: Vec<Vec<f64>>,
    /// Row-major: the last axis varies fastest.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn cell(&self, index: &[usize]) -> &SweepCell {
        let flat = index
            .iter()
            .zip(self.shape())
            .fold(0, |acc, (&i, n)| acc * n + i);
        &self.cells[flat]
    }
}

/// Per-cell seed derived from `(master_seed, cell)`.
pub fn cell_seed(master_seed: u64, cell: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(cell as u64);
    rng.next_u64()
}

fn apply_axis(cfg: &mut SystemConfig, disorder: &mut Option<DisorderSpec>, axis: Axis, value: f64) {
    match axis {
        Axis::XiLeft => cfg.xi_left = value * PI,
        Axis::XiRight => cfg.xi_right = value * PI,
        Axis::XiD => cfg.xi_d = value * PI,
        Axis::Directionality => cfg.directionality = value,
        Axis::NTotal => {
            let half = (value.round() as usize) / 2;
            cfg.n_left = half;
            cfg.n_right = half;
            if cfg.drive_mask.is_some() {
                cfg.drive_mask = None;
            }
        }
        Axis::Beta => cfg.beta = value,
        Axis::WPhase => {
            if let Some(d) = disorder {
                d.w_phase = value * PI;
            }
        }
        Axis::DeltaBar => {
            if let Some(d) = disorder {
                d.delta_bar = value;
            }
        }
    }
}

fn evaluate_cell(cfg: &SystemConfig, spec: &SweepSpec, mut cell: SweepCell) -> SweepCell {
    let opts = EvalOptions { tau: spec.tau };
    let mat = match build_matrix(cfg) {
        Ok(m) => m,
        Err(e) => return cell.flagged(&e),
    };
    if !spec.compute_tau {
        return match transport_only(&mat) {
            Ok(t_p) => {
                cell.t_p = Some(t_p);
                cell.method = Some(Method::LinearSolve);
                cell
            }
            Err(e) => cell.flagged(&e),
        };
    }
    match evaluate_matrix(&mat, &opts) {
        Ok(r) => {
            cell.t_p = Some(r.t_p);
            cell.tau = Some(r.tau);
            cell.method = Some(r.method.tau);
            if !r.dominant_modes.is_empty() {
                let total: f64 = r.dominant_modes.iter().map(|m| m.weight).sum();
                cell.dominant = Some(DominantSummary {
                    count: r.dominant_modes.len(),
                    weight: r.dominant_modes[0].weight,
                    localization: r
                        .dominant_modes
                        .iter()
                        .map(|m| m.weight * m.localization)
                        .sum::<f64>()
                        / total,
                });
            }
            cell
        }
        Err(e) => {
            let flag = CellFlag::of(&e);
            let mut cell = cell.flagged(&e);
            if flag == CellFlag::NonConvergent {
                cell.t_p = transport_only(&mat).ok();
            }
            cell
        }
    }
}

/// Evaluates every grid point. Cell failures are recorded as flags.
pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<SweepResult> {
    spec.validate()?;
    let axis_values: Vec<Vec<f64>> = spec.axes.iter().map(AxisSpec::values).collect();
    let shape = spec.shape();
    let total: usize = shape.iter().product();
    let cells = par_map(total, exec, |flat| {
        let mut index = vec![0; shape.len()];
        let mut rest = flat;
        for k in (0..shape.len()).rev() {
            index[k] = rest % shape[k];
            rest /= shape[k];
        }
        let coords: Vec<f64> = index
            .iter()
            .enumerate()
            .map(|(k, &i)| axis_values[k][i])
            .collect();
        let mut cfg = spec.base.clone();
        let mut disorder = spec.per_point_disorder.clone();
        for (a, &v) in spec.axes.iter().zip(&coords) {
            apply_axis(&mut cfg, &mut disorder, a.axis, v);
        }
        let mut cell = SweepCell::empty(coords);
        if let Some(opt) = &spec.optimize_spacings {
            // Inner search runs sequentially; the cells themselves are parallel.
            match optimize_spacings(&cfg, opt, Execution::Sequential) {
                Ok(o) => {
                    cfg.xi_left = o.xi_pi[0] * PI;
                    cfg.xi_d = o.xi_pi[1] * PI;
                    cfg.xi_right = o.xi_pi[2] * PI;
                    cell.optimum_pi = Some(o.xi_pi);
                }
                Err(e) => return cell.flagged(&e),
            }
        }
        match disorder {
            Some(mut d) => {
                d.master_seed = cell_seed(d.master_seed, flat);
                let stats = disorder_ensemble(
                    &cfg,
                    &d,
                    &EnsembleOptions {
                        compute_tau: spec.compute_tau,
                        tau: spec.tau,
                    },
                    Execution::Sequential,
                );
                match stats {
                    Ok(s) => {
                        cell.t_p = Some(s.mean_t_p);
                        cell.tau = s.mean_tau;
                        cell.ensemble = Some(s);
                        cell
                    }
                    Err(e) => cell.flagged(&e),
                }
            }
            None => evaluate_cell(&cfg, spec, cell),
        }
    });
    Ok(SweepResult {
        axes: spec.axes.clone(),
        axis_values,
        cells,
    })
}

/// Inner exhaustive search over `(xi_L, xi_D, xi_R)` in `[π, 2π)^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSpec {
    /// Coarse grid points per axis.
    pub resolution: usize,
    /// Subdivisions per coarse step in the refinement pass.
    pub refine: usize,
    /// Coarse local maxima within this of the coarse maximum are refined.
    pub candidate_window: f64,
    /// `T_p` values closer than this are ties, resolved by smaller `tau`.
    pub tie_tolerance: f64,
    pub tau: TauOptions,
}

impl Default for OptimizeSpec {
    fn default() -> Self {
        Self {
            resolution: 100,
            refine: 5,
            candidate_window: 0.02,
            tie_tolerance: 1e-9,
            tau: TauOptions::default(),
        }
    }
}

impl OptimizeSpec {
    pub fn with_resolution(resolution: usize) -> Self {
        Self {
            resolution,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.resolution < 2 || self.refine < 1 {
            return Err(ConfigError::Sweep(format!(
                "optimizer resolution {} / refine {} too small",
                self.resolution, self.refine
            )));
        }
        if !(self.candidate_window >= 0.0) || !(self.tie_tolerance >= 0.0) {
            return Err(ConfigError::Sweep("negative optimizer tolerance".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    /// `(xi_L, xi_D, xi_R)` in units of π.
    pub xi_pi: [f64; 3],
    pub t_p: f64,
    pub tau: f64,
    /// Refined candidates whose `T_p` tied the maximum.
    pub ties: usize,
    pub candidates: usize,
}

fn with_spacings(base: &SystemConfig, xi_pi: [f64; 3]) -> SystemConfig {
    base.clone().with_spacings_pi(xi_pi[0], xi_pi[1], xi_pi[2])
}

fn t_p_at(base: &SystemConfig, xi_pi: [f64; 3]) -> f64 {
    build_matrix(&with_spacings(base, xi_pi))
        .and_then(|m| transport_only(&m))
        .unwrap_or(f64::NEG_INFINITY)
}

pub fn optimize_spacings(
    base: &SystemConfig,
    spec: &OptimizeSpec,
    exec: Execution,
) -> Result<Optimum> {
    spec.validate()?;
    base.validate()?;
    let res = spec.resolution;
    let h = 1.0 / res as f64;
    let coord = |i: usize| 1.0 + i as f64 * h;
    let idx = |i: usize, j: usize, k: usize| (i * res + j) * res + k;

    let rows: Vec<Vec<f64>> = par_map(res, exec, |i| {
        let mut row = Vec::with_capacity(res * res);
        for j in 0..res {
            for k in 0..res {
                row.push(t_p_at(base, [coord(i), coord(j), coord(k)]));
            }
        }
        row
    });
    let grid: Vec<f64> = rows.into_iter().flatten().collect();
    let coarse_max = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if coarse_max == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(
            "no grid point yielded a steady state".into(),
        ));
    }

    // xi_D and xi_R are periodic over the window; xi_L is not.
    let wrap = |i: usize, d: i64| (i as i64 + d).rem_euclid(res as i64) as usize;
    let mut seeds = Vec::new();
    for i in 0..res {
        for j in 0..res {
            for k in 0..res {
                let v = grid[idx(i, j, k)];
                if v < coarse_max - spec.candidate_window {
                    continue;
                }
                let mut neighbours =
                    vec![grid[idx(i, wrap(j, 1), k)], grid[idx(i, wrap(j, -1), k)]];
                neighbours.push(grid[idx(i, j, wrap(k, 1))]);
                neighbours.push(grid[idx(i, j, wrap(k, -1))]);
                if i > 0 {
                    neighbours.push(grid[idx(i - 1, j, k)]);
                }
                if i + 1 < res {
                    neighbours.push(grid[idx(i + 1, j, k)]);
                }
                if neighbours.iter().all(|&n| n <= v) {
                    seeds.push([coord(i), coord(j), coord(k)]);
                }
            }
        }
    }

    let m = spec.refine as i64;
    let hh = h / spec.refine as f64;
    let refined: Vec<(f64, [f64; 3])> = par_map(seeds.len(), exec, |s| {
        let c = seeds[s];
        let mut best = (t_p_at(base, c), c);
        for a in -m..=m {
            for b in -m..=m {
                for d in -m..=m {
                    let p = [
                        (c[0] + a as f64 * hh).clamp(1.0, 2.0 - hh),
                        c[1] + b as f64 * hh,
                        c[2] + d as f64 * hh,
                    ];
                    let v = t_p_at(base, p);
                    if v > best.0 {
                        best = (v, p);
                    }
                }
            }
        }
        // Fold back into [π, 2π) using the π-periodicity of xi_D and xi_R.
        let fold = |x: f64| 1.0 + (x - 1.0).rem_euclid(1.0);
        (best.0, [best.1[0], fold(best.1[1]), fold(best.1[2])])
    });

    let top = refined
        .iter()
        .map(|r| r.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<[f64; 3]> = refined
        .iter()
        .filter(|r| r.0 >= top - spec.tie_tolerance)
        .map(|r| r.1)
        .collect();
    let opts = EvalOptions { tau: spec.tau };
    let scored: Vec<Option<(f64, f64)>> = par_map(tied.len(), exec, |s| {
        let r = build_matrix(&with_spacings(base, tied[s]))
            .and_then(|m| evaluate_matrix(&m, &opts))
            .ok()?;
        Some((r.tau, r.t_p))
    });
    let (best, (tau, t_p)) = scored
        .iter()
        .enumerate()
        .filter_map(|(s, v)| v.map(|v| (s, v)))
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::InvalidArgument("no tied optimum yielded a finite tau".into()))?;
    Ok(Optimum {
        xi_pi: tied[best],
        t_p,
        tau,
        ties: tied.len(),
        candidates: seeds.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub value: f64,
    pub optimum: Option<Optimum>,
    pub message: Option<String>,
}

/// Optimal spacings along a directionality or (even, equally split) atom-number axis.
pub fn optimal_config_scan(
    base: &SystemConfig,
    axis: &AxisSpec,
    spec: &OptimizeSpec,
    exec: Execution,
) -> Result<Vec<ScanPoint>> {
    axis.validate()?;
    if !matches!(axis.axis, Axis::Directionality | Axis::NTotal) {
        return Err(ConfigError::Sweep(format!(
            "optimal scan runs along directionality or n_total, not {}",
            axis.axis
        ))
        .into());
    }
    if axis.axis == Axis::Directionality && base.n_left != base.n_right {
        return Err(ConfigError::Sweep("optimal scan requires n_left = n_right".into()).into());
    }
    let values = axis.values();
    let mut points = Vec::with_capacity(values.len());
    for &v in &values {
        let mut cfg = base.clone();
        apply_axis(&mut cfg, &mut None, axis.axis, v);
        let point = match optimize_spacings(&cfg, spec, exec) {
            Ok(o) => ScanPoint {
                value: v,
                optimum: Some(o),
                message: None,
            },
            Err(e) => ScanPoint {
                value: v,
                optimum: None,
                message: Some(e.to_string()),
            },
        };
        log::info!("{} = {v}: {:?}", axis.axis, point.optimum);
        points.push(point);
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub compute_tau: bool,
    pub tau: TauOptions,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            compute_tau: true,
            tau: TauOptions::default(),
        }
    }
}

/// Mean and standard error, summed in index order about the first sample.
fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x0 = xs[0];
    let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Averages `T_p` (and `tau`) over disorder realizations. Failing trials are
/// excluded and counted.
pub fn disorder_ensemble(
    cfg: &SystemConfig,
    spec: &DisorderSpec,
    opts: &EnsembleOptions,
    exec: Execution,
) -> Result<EnsembleStats> {
    if spec.trials < 2 {
        return Err(ConfigError::TooFewTrials {
            min: 2,
            got: spec.trials,
        }
        .into());
    }
    spec.validate()?;
    cfg.validate()?;
    let eval = EvalOptions { tau: opts.tau };
    let outcomes: Vec<Result<(f64, Option<f64>)>> = par_map(spec.trials, exec, |trial| {
        let mat = build_disordered_matrix(cfg, spec, trial)?;
        if opts.compute_tau {
            let r = evaluate_matrix(&mat, &eval)?;
            Ok((r.t_p, Some(r.tau)))
        } else {
            Ok((transport_only(&mat)?, None))
        }
    });
    let mut t_ps = Vec::new();
    let mut taus = Vec::new();
    let mut excluded_bragg = 0;
    for (trial, o) in outcomes.iter().enumerate() {
        match o {
            Ok((t_p, tau)) => {
                t_ps.push(*t_p);
                taus.extend(*tau);
            }
            Err(e) => {
                if CellFlag::of(e) == CellFlag::Bragg {
                    excluded_bragg += 1;
                }
                log::debug!("trial {trial} excluded: {e}");
            }
        }
    }
    let excluded = spec.trials - t_ps.len();
    if excluded > 0 {
        log::warn!("{excluded} of {} disorder trials excluded", spec.trials);
    }
    if t_ps.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "all {} disorder trials failed",
            spec.trials
        )));
    }
    let (mean_t_p, se_t_p) = mean_and_se(&t_ps);
    let (mean_tau, se_tau) = if taus.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_and_se(&taus);
        (Some(m), Some(s))
    };
    Ok(EnsembleStats {
        mean_t_p,
        se_t_p,
        mean_tau,
        se_tau,
        trials: spec.trials,
        used: t_ps.len(),
        excluded,
        excluded_bragg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::evaluate;

    fn fig2_base() -> SystemConfig {
        SystemConfig::new(10, 10).with_spacings_pi(1.8, 1.5, 1.5)
    }

    #[test]
    fn axis_values_include_endpoints() {
        let a = AxisSpec::new(Axis::XiRight, 1.0, 2.0, 5);
        assert_eq!(a.values(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
    }

    #[test]
    fn parses_grid_flags() {
        let a: AxisSpec = "xi_right=1:2:500".parse().unwrap();
        assert_eq!(a, AxisSpec::new(Axis::XiRight, 1.0, 2.0, 500));
        assert!("xi_right=1:2".parse::<AxisSpec>().is_err());
        assert!("chirality=0:1:3".parse::<AxisSpec>().is_err());
        assert!("xi_left=1:2:1".parse::<AxisSpec>().is_err());
        assert!("n_total=8:12:3".parse::<AxisSpec>().is_ok());
        assert!("n_total=8:11:3".parse::<AxisSpec>().is_err());
    }

    #[test]
    fn smoke_grid() {
        let spec = SweepSpec::new(
            fig2_base(),
            vec![
                AxisSpec::new(Axis::XiLeft, 1.5, 1.8, 2),
                AxisSpec::new(Axis::XiRight, 1.0, 1.5, 2),
            ],
        );
        let r = run_sweep(&spec, Execution::Sequential).unwrap();
        assert_eq!(r.cells.len(), 4);
        for c in &r.cells {
            assert!(c.flag.is_none(), "{c:?}");
            assert!(c.t_p.unwrap().is_finite() && c.tau.unwrap().is_finite());
        }
        let direct = evaluate(
            &SystemConfig::new(10, 10).with_spacings_pi(1.8, 1.5, 1.0),
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.cell(&[1, 0]).t_p, Some(direct.t_p));
        assert_eq!(r.cell(&[1, 0]).coords, vec![1.8, 1.0]);
    }

    #[test]
    fn bragg_cells_are_flagged() {
        let base = SystemConfig::new(2, 2)
            .with_spacings_pi(1.0, 1.0, 1.0)
            .with_directionality(0.0);
        let spec = SweepSpec::new(base, vec![AxisSpec::new(Axis::Directionality, 0.0, 0.5, 2)]);
        let r = run_sweep(&spec, Execution::Sequential).unwrap();
        assert_eq!(r.cells[0].flag, Some(CellFlag::Bragg));
        assert!(r.cells[0].t_p.is_none());
        assert!(r.cells[1].flag.is_none(), "{:?}", r.cells[1]);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut spec = SweepSpec::new(
            SystemConfig::new(3, 3),
            vec![
                AxisSpec::new(Axis::XiRight, 1.0, 2.0, 4),
                AxisSpec::new(Axis::Directionality, 0.0, 1.0, 3),
            ],
        );
        spec.compute_tau = true;
        let a = run_sweep(&spec, Execution::Sequential).unwrap();
        let b = run_sweep(&spec, Execution::Parallel).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn clean_ensemble_matches_clean_value() {
        let cfg = SystemConfig::new(3, 3).with_spacings_pi(1.8, 1.5, 1.158);
        let spec = DisorderSpec {
            w_phase: 0.0,
            delta_bar: 0.0,
            trials: 5,
            master_seed: 7,
        };
        let s = disorder_ensemble(
            &cfg,
            &spec,
            &EnsembleOptions::default(),
            Execution::Sequential,
        )
        .unwrap();
        let clean = evaluate(&cfg, &EvalOptions::default()).unwrap();
        assert_eq!(s.mean_t_p, clean.t_p);
        assert_eq!(s.se_t_p, 0.0);
        assert_eq!(s.mean_tau, Some(clean.tau));
        assert_eq!(s.se_tau, Some(0.0));
        assert_eq!(s.excluded, 0);
    }

    #[test]
    fn ensemble_is_deterministic() {
        let cfg = SystemConfig::new(3, 3).with_spacings_pi(1.8, 1.5, 1.158);
        let spec = DisorderSpec {
            w_phase: 0.05 * PI,
            delta_bar: 0.02,
            trials: 16,
            master_seed: 11,
        };
        let opts = EnsembleOptions {
            compute_tau: false,
            ..EnsembleOptions::default()
        };
        let a = disorder_ensemble(&cfg, &spec, &opts, Execution::Sequential).unwrap();
        let b = disorder_ensemble(&cfg, &spec, &opts, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.se_t_p > 0.0);
        let other = DisorderSpec {
            master_seed: 12,
            ..spec
        };
        let c = disorder_ensemble(&cfg, &other, &opts, Execution::Sequential).unwrap();
        assert_ne!(a.mean_t_p, c.mean_t_p);
    }

    #[test]
    fn ensemble_needs_two_trials() {
        let spec = DisorderSpec {
            w_phase: 0.0,
            delta_bar: 0.0,
            trials: 1,
            master_seed: 0,
        };
        let err = disorder_ensemble(
            &SystemConfig::new(2, 2),
            &spec,
            &EnsembleOptions::default(),
            Execution::Sequential,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Config(ConfigError::TooFewTrials { min: 2, got: 1 })
        ));
    }

    #[test]
    fn disorder_axis_requires_ensemble() {
        let spec = SweepSpec::new(
            SystemConfig::new(2, 2),
            vec![AxisSpec::new(Axis::WPhase, 0.0, 0.1, 3)],
        );
        assert!(run_sweep(&spec, Execution::Sequential).is_err());
    }

    #[test]
    fn disorder_sweep_cells_use_distinct_streams() {
        let mut spec = SweepSpec::new(
            SystemConfig::new(2, 2).with_spacings_pi(1.8, 1.5, 1.2),
            vec![AxisSpec::new(Axis::DeltaBar, 0.05, 0.05, 2)],
        );
        spec.per_point_disorder = Some(DisorderSpec {
            w_phase: 0.0,
            delta_bar: 0.0,
            trials: 8,
            master_seed: 3,
        });
        spec.compute_tau = false;
        let r = run_sweep(&spec, Execution::Sequential).unwrap();
        assert_ne!(r.cells[0].t_p, r.cells[1].t_p);
        assert_eq!(r.cells[0].ensemble.as_ref().unwrap().used, 8);
    }

    #[test]
    fn optimum_beats_every_coarse_point() {
        let base = SystemConfig::new(2, 2);
        let spec = OptimizeSpec::with_resolution(8);
        let o = optimize_spacings(&base, &spec, Execution::Sequential).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    let p = [
                        1.0 + i as f64 / 8.0,
                        1.0 + j as f64 / 8.0,
                        1.0 + k as f64 / 8.0,
                    ];
                    assert!(t_p_at(&base, p) <= o.t_p + 1e-12);
                }
            }
        }
        assert!(o.xi_pi.iter().all(|&x| (1.0..2.0).contains(&x)));
        let direct = evaluate(&with_spacings(&base, o.xi_pi), &EvalOptions::default()).unwrap();
        assert!((direct.t_p - o.t_p).abs() < 1e-12);
    }

    #[test]
    fn scan_rejects_other_axes() {
        let axis = AxisSpec::new(Axis::Beta, 0.9, 1.0, 2);
        assert!(optimal_config_scan(
            &SystemConfig::new(2, 2),
            &axis,
            &OptimizeSpec::with_resolution(4),
            Execution::Sequential
        )
        .is_err());
    }
}
