//! CSV, JSON and gnuplot writers. Floats use Rust's shortest round-trip
//! formatting so identical inputs produce identical bytes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::ExcitationState;
use crate::error::Result;
use crate::lindblad::OracleTrajectory;
use crate::matrix::InteractionMatrix;
use crate::observables::{DominantMode, ModeSpectrum, Provenance, TransportResult};
use crate::sweep::{Axis, ScanPoint, SweepResult};

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per element: `row,col,re,im`.
pub fn write_matrix_csv<W: Write>(mat: &InteractionMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "re", "im"])?;
    let n = mat.dim();
    for i in 0..n {
        for j in 0..n {
            let z = mat.m[(i, j)];
            w.write_record([
                i.to_string(),
                j.to_string(),
                z.re.to_string(),
                z.im.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mode table in stored (ascending `|omega_n|`) order, rates in units of `gamma`.
pub fn write_modes_csv<W: Write>(modes: &ModeSpectrum, gamma: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n",
        "omega_over_gamma",
        "gamma_n_over_gamma",
        "abs_energy_over_gamma",
        "abs_delta",
        "weight",
        "share",
        "right_localization",
        "subradiant",
        "dominant",
    ])?;
    for m in &modes.modes {
        w.write_record([
            m.mode.to_string(),
            (m.shift / gamma).to_string(),
            (m.decay_rate / gamma).to_string(),
            (m.energy_abs / gamma).to_string(),
            m.delta_abs.to_string(),
            m.weight.to_string(),
            m.share.to_string(),
            m.localization.to_string(),
            m.subradiant.to_string(),
            modes.dominant.contains(&m.mode).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn population_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..n).map(|mu| format!("p{mu}")))
        .collect()
}

/// `t, |p_0|^2, ..., |p_{N-1}|^2`.
pub fn write_trajectory_csv<W: Write>(states: &[ExcitationState], out: W) -> Result<()> {
    let n = states.first().map_or(0, |s| s.amplitudes.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(population_header(n))?;
    for s in states {
        let row = std::iter::once(s.t.to_string())
            .chain(s.populations().into_iter().map(|p| p.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Same layout as [`write_trajectory_csv`], from master-equation populations.
pub fn write_oracle_csv<W: Write>(traj: &OracleTrajectory, out: W) -> Result<()> {
    let n = traj.populations.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(population_header(n))?;
    for (t, pops) in traj.times.iter().zip(&traj.populations) {
        let row = std::iter::once(t.to_string()).chain(pops.iter().map(f64::to_string));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per cell: axis values, `t_p`, `tau_gamma`, flag, then ensemble
/// and optimal-spacing columns (empty when unused).
pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = result
        .axes
        .iter()
        .map(|a| {
            if a.axis.in_pi_units() {
                format!("{}_pi", a.axis)
            } else {
                a.axis.to_string()
            }
        })
        .collect();
    header.extend(
        [
            "t_p",
            "tau_gamma",
            "flag",
            "se_t_p",
            "se_tau",
            "trials_used",
            "trials_excluded",
            "opt_xi_left_pi",
            "opt_xi_d_pi",
            "opt_xi_right_pi",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for c in &result.cells {
        let mut row: Vec<String> = c.coords.iter().map(f64::to_string).collect();
        row.push(opt(c.t_p));
        row.push(opt(c.tau));
        row.push(c.flag.map(|f| f.as_str().to_string()).unwrap_or_default());
        let e = c.ensemble.as_ref();
        row.push(opt(e.map(|e| e.se_t_p)));
        row.push(opt(e.and_then(|e| e.se_tau)));
        row.push(e.map(|e| e.used.to_string()).unwrap_or_default());
        row.push(e.map(|e| e.excluded.to_string()).unwrap_or_default());
        for k in 0..3 {
            row.push(opt(c.optimum_pi.map(|o| o[k])));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per scan value: optimal spacings (π units), `t_p`, `tau_gamma`,
/// tie and candidate counts. Failed points keep only the value and message.
pub fn write_scan_csv<W: Write>(axis: Axis, points: &[ScanPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        axis.name(),
        "xi_left_pi",
        "xi_d_pi",
        "xi_right_pi",
        "t_p",
        "tau_gamma",
        "ties",
        "candidates",
        "message",
    ])?;
    for p in points {
        let o = p.optimum.as_ref();
        let mut row = vec![p.value.to_string()];
        for k in 0..3 {
            row.push(opt(o.map(|o| o.xi_pi[k])));
        }
        row.push(opt(o.map(|o| o.t_p)));
        row.push(opt(o.map(|o| o.tau)));
        row.push(o.map(|o| o.ties.to_string()).unwrap_or_default());
        row.push(o.map(|o| o.candidates.to_string()).unwrap_or_default());
        row.push(p.message.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepField {
    TransportParameter,
    CharacteristicTime,
}

/// Gnuplot `nonuniform matrix` layout for two-axis sweeps (first axis along
/// rows), or two columns for one-axis sweeps. Missing values are `NaN`.
pub fn write_gnuplot_matrix<W: Write>(
    result: &SweepResult,
    field: SweepField,
    mut out: W,
) -> Result<()> {
    let value = |i: usize| {
        let c = &result.cells[i];
        match field {
            SweepField::TransportParameter => c.t_p,
            SweepField::CharacteristicTime => c.tau,
        }
        .map_or_else(|| "NaN".to_string(), |v| v.to_string())
    };
    match result.axis_values.as_slice() {
        [xs] => {
            for (i, x) in xs.iter().enumerate() {
                writeln!(out, "{x} {}", value(i))?;
            }
        }
        [rows, cols] => {
            let head: Vec<String> = cols.iter().map(f64::to_string).collect();
            writeln!(out, "{} {}", cols.len(), head.join(" "))?;
            for (i, y) in rows.iter().enumerate() {
                let vals: Vec<String> =
                    (0..cols.len()).map(|j| value(i * cols.len() + j)).collect();
                writeln!(out, "{y} {}", vals.join(" "))?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// On-disk form of a single-configuration result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub t_p: f64,
    pub tau_gamma: Option<f64>,
    pub profile: Vec<f64>,
    pub dominant_modes: Vec<DominantModeRecord>,
    pub tail_error: f64,
    pub tau_degenerate: bool,
    pub method: MethodRecord,
    pub condition_number: Option<f64>,
    pub eigen_error_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantModeRecord {
    pub mode: usize,
    pub weight: f64,
    pub right_localization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub steady: String,
    pub tau: String,
}

fn method_name(m: crate::dynamics::Method) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

impl From<&TransportResult> for ResultFile {
    fn from(r: &TransportResult) -> Self {
        let Provenance { steady, tau } = r.method;
        Self {
            t_p: r.t_p,
            tau_gamma: Some(r.tau),
            profile: r.profile.clone(),
            dominant_modes: r
                .dominant_modes
                .iter()
                .map(
                    |&DominantMode {
                         mode,
                         weight,
                         localization,
                     }| DominantModeRecord {
                        mode,
                        weight,
                        right_localization: localization,
                    },
                )
                .collect(),
            tail_error: r.tail_error,
            tau_degenerate: r.tau_degenerate,
            method: MethodRecord {
                steady: method_name(steady),
                tau: method_name(tau),
            },
            condition_number: r.condition_number,
            eigen_error_estimate: r.eigen_error_estimate,
        }
    }
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
