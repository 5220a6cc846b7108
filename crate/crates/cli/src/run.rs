use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use wqed_core::export::{self, ResultFile, SweepField};
use wqed_core::lindblad::compare_with_effective;
use wqed_core::{
    build_matrix, decompose, disorder_ensemble, evaluate, evolve_eigen, evolve_ode,
    mode_decomposition, optimal_config_scan, run_sweep, AxisSpec, ConfigFile, DisorderSpec,
    EnsembleOptions, EvalOptions, Execution, OdeOptions, OptimizeSpec, SweepSpec, SystemConfig,
    TauOptions,
};

use crate::args::{Command, DisorderArgs, SystemArgs, TrajectoryMethod};
use crate::error::CliError;

/// A command with every input resolved; enough to reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Eval {
        config: SystemConfig,
        compute_tau: bool,
    },
    Sweep {
        spec: SweepSpec,
        gnuplot: bool,
    },
    Scan {
        base: SystemConfig,
        axis: AxisSpec,
        optimize: OptimizeSpec,
    },
    Disorder {
        config: SystemConfig,
        disorder: DisorderSpec,
        options: EnsembleOptions,
    },
    Modes {
        config: SystemConfig,
    },
    Validate {
        config: SystemConfig,
        t_final: f64,
        dt: f64,
    },
    Matrix {
        config: SystemConfig,
    },
    Trajectory {
        config: SystemConfig,
        t_final: f64,
        every: f64,
        dt: f64,
        method: TrajectoryMethod,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Eval { .. } => "eval",
            Invocation::Sweep { .. } => "sweep",
            Invocation::Scan { .. } => "scan",
            Invocation::Disorder { .. } => "disorder",
            Invocation::Modes { .. } => "modes",
            Invocation::Validate { .. } => "validate",
            Invocation::Matrix { .. } => "matrix",
            Invocation::Trajectory { .. } => "trajectory",
        }
    }

    fn config(&self) -> &SystemConfig {
        match self {
            Invocation::Eval { config, .. }
            | Invocation::Disorder { config, .. }
            | Invocation::Modes { config }
            | Invocation::Validate { config, .. }
            | Invocation::Matrix { config }
            | Invocation::Trajectory { config, .. } => config,
            Invocation::Sweep { spec, .. } => &spec.base,
            Invocation::Scan { base, .. } => base,
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Invocation::Disorder { disorder, .. } => Some(disorder.master_seed),
            Invocation::Sweep { spec, .. } => {
                spec.per_point_disorder.as_ref().map(|d| d.master_seed)
            }
            _ => None,
        }
    }
}

/// Sidecar written next to the primary output as `<out>.manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Resolved configuration with spacings in units of π.
    pub config: ConfigFile,
    pub master_seed: Option<u64>,
    pub threads: Option<usize>,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    pub invocation: Invocation,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    ConfigFile::from_json(&text).map_err(|source| CliError::ConfigFile {
        path: path.to_owned(),
        source,
    })
}

fn resolve_system(args: &SystemArgs) -> Result<SystemConfig, CliError> {
    let mut cfg = load_config(&args.config)?.into_config();
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if args.override_weak_drive {
        cfg.override_weak_drive = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn disorder_spec(args: &DisorderArgs, trials: usize) -> DisorderSpec {
    DisorderSpec {
        w_phase: args.w_phase * PI,
        delta_bar: args.delta_bar,
        trials,
        master_seed: args.seed,
    }
}

/// Resolves parsed flags into an invocation plus its primary output path.
pub fn resolve(command: Command) -> Result<(Invocation, Option<PathBuf>), CliError> {
    Ok(match command {
        Command::Eval {
            system,
            out,
            no_tau,
        } => (
            Invocation::Eval {
                config: resolve_system(&system)?,
                compute_tau: !no_tau,
            },
            Some(out),
        ),
        Command::Sweep {
            system,
            grids,
            out,
            trials,
            disorder,
            optimize_resolution,
            no_tau,
            gnuplot,
        } => {
            let mut spec = SweepSpec::new(resolve_system(&system)?, grids);
            spec.per_point_disorder = trials.map(|t| disorder_spec(&disorder, t));
            spec.optimize_spacings = optimize_resolution.map(OptimizeSpec::with_resolution);
            spec.compute_tau = !no_tau;
            spec.validate()?;
            if let Some(d) = &spec.per_point_disorder {
                if d.trials < 2 {
                    return Err(wqed_core::ConfigError::TooFewTrials {
                        min: 2,
                        got: d.trials,
                    }
                    .into());
                }
            }
            (Invocation::Sweep { spec, gnuplot }, Some(out))
        }
        Command::Scan {
            system,
            grid,
            out,
            resolution,
        } => {
            let optimize = OptimizeSpec::with_resolution(resolution);
            optimize.validate()?;
            (
                Invocation::Scan {
                    base: resolve_system(&system)?,
                    axis: grid,
                    optimize,
                },
                Some(out),
            )
        }
        Command::Disorder {
            system,
            trials,
            disorder,
            out,
            no_tau,
        } => {
            let spec = disorder_spec(&disorder, trials);
            if trials < 2 {
                return Err(wqed_core::ConfigError::TooFewTrials {
                    min: 2,
                    got: trials,
                }
                .into());
            }
            spec.validate()?;
            (
                Invocation::Disorder {
                    config: resolve_system(&system)?,
                    disorder: spec,
                    options: EnsembleOptions {
                        compute_tau: !no_tau,
                        tau: TauOptions::default(),
                    },
                },
                Some(out),
            )
        }
        Command::Modes { system, out } => (
            Invocation::Modes {
                config: resolve_system(&system)?,
            },
            Some(out),
        ),
        Command::Validate {
            config,
            n,
            beta,
            t_final,
            dt,
            out,
        } => {
            let mut cfg = match &config {
                Some(path) => load_config(path)?.into_config(),
                None => SystemConfig::new(2, 1)
                    .with_spacings_pi(1.8, 1.5, 1.158)
                    .with_directionality(0.5),
            };
            if let Some(n) = n {
                if n == 0 {
                    return Err(CliError::Usage("--n must be at least 1".into()));
                }
                cfg.n_left = n.div_ceil(2);
                cfg.n_right = n / 2;
                cfg.drive_mask = None;
            }
            if let Some(beta) = beta {
                cfg.beta = beta;
            }
            cfg.validate()?;
            (
                Invocation::Validate {
                    config: cfg,
                    t_final,
                    dt,
                },
                out,
            )
        }
        Command::Matrix { system, out } => (
            Invocation::Matrix {
                config: resolve_system(&system)?,
            },
            Some(out),
        ),
        Command::Trajectory {
            system,
            t_final,
            every,
            dt,
            method,
            out,
        } => {
            if !(t_final > 0.0 && every > 0.0 && dt > 0.0) {
                return Err(CliError::Usage(
                    "--t-final, --every and --dt must be positive".into(),
                ));
            }
            (
                Invocation::Trajectory {
                    config: resolve_system(&system)?,
                    t_final,
                    every,
                    dt,
                    method,
                },
                Some(out),
            )
        }
        Command::Replay { .. } => unreachable!("replay is dispatched before resolution"),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })
}

fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn exec_mode() -> Execution {
    if cfg!(feature = "parallel") {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Runs an invocation, writing its outputs; returns the paths written.
pub fn execute(inv: &Invocation, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let exec = exec_mode();
    let mut written = Vec::new();
    let mut stdout = std::io::stdout().lock();
    let say = |w: &mut dyn Write, line: String| {
        let _ = writeln!(w, "{line}");
    };

    match inv {
        Invocation::Eval {
            config,
            compute_tau,
        } => {
            let out = out.expect("eval has an output");
            let result = if *compute_tau {
                ResultFile::from(&evaluate(config, &EvalOptions::default())?)
            } else {
                let mat = build_matrix(config)?;
                let steady = wqed_core::steady_state(&mat)?;
                let profile = wqed_core::normalized_profile(&steady.amplitudes)?;
                ResultFile {
                    t_p: wqed_core::transport_parameter(&profile, mat.n_left()),
                    tau_gamma: None,
                    profile,
                    dominant_modes: Vec::new(),
                    tail_error: 0.0,
                    tau_degenerate: false,
                    method: export::MethodRecord {
                        steady: "linear_solve".into(),
                        tau: String::new(),
                    },
                    condition_number: None,
                    eigen_error_estimate: None,
                }
            };
            export::write_json(&result, create(out)?)?;
            say(&mut stdout, format!("t_p = {}", result.t_p));
            if *compute_tau {
                say(
                    &mut stdout,
                    format!("tau_gamma = {}", result.tau_gamma.unwrap_or(f64::NAN)),
                );
            }
            written.push(out.to_owned());
        }
        Invocation::Sweep { spec, gnuplot } => {
            let out = out.expect("sweep has an output");
            let result = run_sweep(spec, exec)?;
            export::write_sweep_csv(&result, create(out)?)?;
            written.push(out.to_owned());
            if *gnuplot {
                let mut fields = vec![(SweepField::TransportParameter, ".t_p.dat")];
                if spec.compute_tau {
                    fields.push((SweepField::CharacteristicTime, ".tau.dat"));
                }
                for (field, suffix) in fields {
                    let path = with_suffix(out, suffix);
                    export::write_gnuplot_matrix(&result, field, create(&path)?)?;
                    written.push(path);
                }
            }
            let flagged = result.cells.iter().filter(|c| c.flag.is_some()).count();
            say(
                &mut stdout,
                format!("{} cells, {flagged} flagged", result.cells.len()),
            );
        }
        Invocation::Scan {
            base,
            axis,
            optimize,
        } => {
            let out = out.expect("scan has an output");
            let points = optimal_config_scan(base, axis, optimize, exec)?;
            export::write_scan_csv(axis.axis, &points, create(out)?)?;
            written.push(out.to_owned());
            for p in &points {
                match &p.optimum {
                    Some(o) => say(
                        &mut stdout,
                        format!(
                            "{} = {}: t_p = {}, tau_gamma = {}",
                            axis.axis, p.value, o.t_p, o.tau
                        ),
                    ),
                    None => say(
                        &mut stdout,
                        format!(
                            "{} = {}: {}",
                            axis.axis,
                            p.value,
                            p.message.as_deref().unwrap_or("failed")
                        ),
                    ),
                }
            }
        }
        Invocation::Disorder {
            config,
            disorder,
            options,
        } => {
            let out = out.expect("disorder has an output");
            let stats = disorder_ensemble(config, disorder, options, exec)?;
            export::write_json(&stats, create(out)?)?;
            written.push(out.to_owned());
            say(
                &mut stdout,
                format!(
                    "mean t_p = {} +/- {} ({} of {} trials used)",
                    stats.mean_t_p, stats.se_t_p, stats.used, stats.trials
                ),
            );
        }
        Invocation::Modes { config } => {
            let out = out.expect("modes has an output");
            let spec = decompose(&build_matrix(config)?)?;
            let modes = mode_decomposition(&spec)?;
            export::write_modes_csv(&modes, config.gamma, create(out)?)?;
            written.push(out.to_owned());
            say(
                &mut stdout,
                format!(
                    "{} dominant mode(s), dominance ratio {}",
                    modes.dominant.len(),
                    modes.dominance_ratio
                ),
            );
        }
        Invocation::Validate {
            config,
            t_final,
            dt,
        } => {
            let cmp = compare_with_effective(config, *t_final, *dt)?;
            if let Some(out) = out {
                export::write_oracle_csv(&cmp.trajectory, create(out)?)?;
                written.push(out.to_owned());
            }
            say(
                &mut stdout,
                format!("max relative deviation = {:e}", cmp.max_relative_deviation),
            );
            say(&mut stdout, format!("worst time = {}", cmp.worst_time));
        }
        Invocation::Matrix { config } => {
            let out = out.expect("matrix has an output");
            export::write_matrix_csv(&build_matrix(config)?, create(out)?)?;
            written.push(out.to_owned());
        }
        Invocation::Trajectory {
            config,
            t_final,
            every,
            dt,
            method,
        } => {
            let out = out.expect("trajectory has an output");
            let mat = build_matrix(config)?;
            let states = match method {
                TrajectoryMethod::Eigen => {
                    let spec = decompose(&mat)?;
                    let samples = (t_final / every).round() as usize;
                    (0..=samples)
                        .map(|k| evolve_eigen(&spec, k as f64 * every))
                        .collect::<Result<Vec<_>, _>>()?
                }
                TrajectoryMethod::Ode => {
                    let stride = ((every / dt).round() as usize).max(1);
                    evolve_ode(
                        &mat,
                        *t_final,
                        &OdeOptions {
                            dt: *dt,
                            stride,
                            ..OdeOptions::default()
                        },
                    )?
                }
            };
            export::write_trajectory_csv(&states, create(out)?)?;
            written.push(out.to_owned());
        }
    }
    Ok(written)
}

/// Executes and, when there is an output file, records a manifest beside it.
pub fn run_and_record(
    inv: &Invocation,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let start = Instant::now();
    let outputs = execute(inv, out)?;
    let Some(primary) = outputs.first() else {
        return Ok(());
    };
    let manifest = RunManifest {
        command: inv.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: ConfigFile::from(inv.config()),
        master_seed: inv.seed(),
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: outputs.clone(),
        invocation: inv.clone(),
    };
    let path = manifest_path(primary);
    export::write_json(&manifest, create(&path)?)?;
    Ok(())
}

pub fn replay(
    manifest: &Path,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(manifest).map_err(|source| CliError::Io {
        path: manifest.to_owned(),
        source,
    })?;
    let recorded: RunManifest =
        serde_json::from_str(&text).map_err(|source| CliError::ConfigFile {
            path: manifest.to_owned(),
            source,
        })?;
    let out = out.or_else(|| recorded.outputs.first().cloned());
    run_and_record(&recorded.invocation, out.as_deref(), threads)
}
