use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use flock_core::error::{IntegrateError, RunError, WaveError};
use flock_core::experiments::{
    comparison_run, comparison_table, convergence_slopes, ramp_horizon, run_grid, slopes_csv, study_csv, trace_csv,
    ComparisonConfig, TracePoint,
};
use flock_core::format::{fmt15, round15};
use flock_core::metrics::{measure, Series};
use flock_core::model::{normalize, normalize_stencils};
use flock_core::theory::{classify, optimize_energy_index, predict, signal_velocities};
use flock_core::waves::{default_width, wave_check};
use flock_core::{assemble, integrate_adaptive, BoundaryKind, IntegratorConfig, LeaderInput, Trajectory};

mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "flock", version, about = "Transients in damped oscillator arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (or directory for `compare`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form transient prediction as JSON.
    Predict {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the ramp or pulse response; writes the `t,y` orbit CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write per-agent positions relative to the leader to `<out>.trace.csv`.
        #[arg(long)]
        full_trace: bool,
    },
    /// Measure extrema, crossings, period and attenuation of a `t,y` CSV.
    Metrics {
        /// Orbit CSV as written by `simulate`.
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the validation grid; writes the study CSV and the slopes CSV.
    Study {
        #[command(flatten)]
        common: Common,
        /// Worker threads; all available cores when omitted.
        #[arg(long)]
        workers: Option<usize>,
        /// Keep N = 3200 in the grid.
        #[arg(long)]
        include_n3200: bool,
        /// Slopes CSV; defaults to `<out stem>_slopes.csv` next to `--out`.
        #[arg(long)]
        slopes: Option<PathBuf>,
    },
    /// Signal-velocity and traveling-wave check on the ring, as JSON.
    Wavecheck {
        #[command(flatten)]
        common: Common,
    },
    /// Minimize the energy index over ρ_{v,1}, as JSON.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Symmetric vs asymmetric comparison at N = 400; `--out` is a directory.
    Compare {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn features(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::Integrate(IntegrateError::Failed(_)) => 3,
            RunError::Metrics(_) => 4,
            RunError::Wave(WaveError::Overlapping(_) | WaveError::Wrapped(_) | WaveError::TooFewSnapshots(_)) => 4,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self {
            code: 1,
            message: format!("{e:#}"),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// JSON number rounded to 15 significant digits; non-finite values become
/// the strings "inf", "-inf" and "nan".
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(round15(x))
    } else {
        Value::String(fmt15(x))
    }
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().copied().map(num).collect())
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, value: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(common.config.as_deref()).map_err(Failure::config)?;
    cfg.integrator.validate().map_err(|e| Failure::config(e.to_string()))?;
    Ok(cfg)
}

fn cmd_predict(common: &Common) -> CmdResult {
    let cfg = load(common)?;
    let raw = cfg.params().map_err(Failure::config)?;
    let params = normalize_stencils(&raw)
        .map_err(|c| Failure::config(format!("parameters violate the necessary condition {c}")))?;
    let (_, time_scale) = normalize(&raw).map_err(|c| Failure::config(c.to_string()))?;
    let p = predict(&params, cfg.model.n, cfg.leader().v0(), cfg.run.terms).map_err(RunError::from)?;
    let class = classify(&raw);
    let classification = json!({
        "kind": serde_json::to_value(class.kind).expect("unit enum"),
        "attenuation": opt_num(class.attenuation),
        "flock_stable_symmetric_family": class.flock_stable_symmetric_family,
    });
    let doc = json!({
        "c_plus": num(p.velocities.c_plus),
        "c_minus": num(p.velocities.c_minus),
        "u": nums(&p.u),
        "T_cross": nums(&p.t_cross),
        "A": nums(&p.amplitudes),
        "period": num(p.period),
        "attenuation": num(p.attenuation),
        "I_E": num(p.energy_index),
        "classification": classification,
        "time_scale": num(time_scale),
        "N": p.n,
        "v0": num(p.v0),
    });
    emit_json(common.out.as_deref(), &doc)?;
    Ok(())
}

fn orbit_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,y\n");
    let (zn, z0) = (traj.series("z_N"), traj.series("z_0"));
    if let (Some(zn), Some(z0)) = (zn, z0) {
        for i in 0..traj.times.len() {
            out.push_str(&format!("{},{}\n", fmt15(traj.times[i]), fmt15(zn[i] - z0[i])));
        }
    }
    out
}

fn trace_points(traj: &Trajectory, leader: &LeaderInput, n: usize, agent_stride: usize) -> Vec<TracePoint> {
    let mut trace = Vec::new();
    if let Some(snaps) = &traj.snapshots {
        for (t, state) in snaps.times.iter().zip(&snaps.states) {
            let lead = leader.orbit(*t).0;
            for agent in (1..=n).step_by(agent_stride.max(1)) {
                trace.push(TracePoint {
                    t: *t,
                    agent,
                    position_rel_leader: state[agent - 1] - lead,
                });
            }
        }
    }
    trace
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_simulate(common: &Common, full_trace: bool) -> CmdResult {
    let cfg = load(common)?;
    let params = cfg.params().map_err(Failure::config)?;
    let boundary = cfg.boundary();
    if boundary == BoundaryKind::Periodic {
        return Err(Failure::config("simulate needs a leader; use wavecheck for the ring"));
    }
    if full_trace && common.out.is_none() {
        return Err(Failure::config("--full-trace needs --out"));
    }
    let leader = cfg.leader();
    let n = cfg.model.n;
    let sys = assemble(params, boundary, Some(leader), n).map_err(RunError::from)?;
    let t0 = match leader {
        LeaderInput::Ramp { .. } => 0.0,
        LeaderInput::Pulse { epsilon, .. } => -epsilon,
    };
    let t_end = match cfg.run.t_end {
        Some(t) => t,
        None => ramp_horizon(&params, n, cfg.run.horizon_factor)?,
    };
    let integrator = IntegratorConfig {
        snapshot_stride: if full_trace {
            Some(cfg.run.trace_stride.max(1))
        } else {
            cfg.integrator.snapshot_stride
        },
        ..cfg.integrator
    };
    let (traj, failure) = match integrate_adaptive(&sys, (t0, t_end), &integrator, &vec![0.0; 2 * n]) {
        Ok(traj) => (traj, None),
        Err(IntegrateError::Failed(f)) => {
            let note = format!("# status: integration_failure ({}) at t={}\n", f.reason, fmt15(f.t_last));
            (*f.partial, Some(note))
        }
        Err(e) => return Err(RunError::from(e).into()),
    };
    let mut text = orbit_csv(&traj);
    if let Some(note) = &failure {
        text.push_str(note);
    }
    emit(common.out.as_deref(), &text)?;
    if full_trace {
        let out = common.out.as_deref().expect("checked above");
        let trace = trace_points(&traj, &leader, n, cfg.run.trace_agent_stride);
        emit(Some(&sibling(out, ".trace.csv")), &trace_csv(&trace))?;
    }
    match failure {
        Some(note) => Err(Failure {
            code: 3,
            message: note.trim_start_matches("# status: ").trim_end().to_string(),
        }),
        None => Ok(()),
    }
}

fn read_orbit(path: &Path) -> Result<Series, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Failure::config(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "t" {
        return Err(Failure::config("orbit CSV must have the header t,y"));
    }
    let (mut ts, mut ys) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| Failure::config(e.to_string()))?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Failure::config(format!("{s:?}: {e}")));
        ts.push(parse(&record[0])?);
        ys.push(parse(&record[1])?);
    }
    if ts.len() < 3 {
        return Err(Failure::features("orbit CSV has fewer than 3 samples"));
    }
    let dt = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
    // the CSV carries 15 significant digits, so allow rounding of large t
    let off_grid = |(i, t): (usize, &f64)| (t - (ts[0] + i as f64 * dt)).abs() > 1e-6 * dt + 1e-12 * t.abs();
    if !(dt > 0.0) || ts.iter().enumerate().any(off_grid) {
        return Err(Failure::config("orbit CSV times must be uniformly spaced and increasing"));
    }
    Ok(Series::new(ts[0], dt, ys))
}

fn cmd_metrics(input: &Path, common: &Common) -> CmdResult {
    let y = read_orbit(input)?;
    let m = measure(&y);
    let doc = json!({
        "A": nums(&m.amplitudes),
        "t_extrema": nums(&m.t_extrema),
        "T_cross": nums(&m.t_cross),
        "period": opt_num(m.period),
        "attenuation": opt_num(m.attenuation),
        "complete": m.is_complete(),
    });
    emit_json(common.out.as_deref(), &doc)?;
    if m.is_complete() {
        Ok(())
    } else {
        Err(Failure::features(format!(
            "found {} extrema and {} crossings; period and attenuation need 3 of each",
            m.amplitudes.len(),
            m.t_cross.len()
        )))
    }
}

fn cmd_study(common: &Common, workers: Option<usize>, include_n3200: bool, slopes: Option<&Path>) -> CmdResult {
    let cfg = load(common)?;
    let study = cfg.study(include_n3200);
    study.validate().map_err(Failure::config)?;
    if workers == Some(0) {
        return Err(Failure::config("--workers must be positive"));
    }
    let rows = run_grid(&study, workers);
    emit(common.out.as_deref(), &study_csv(&rows))?;
    let report = convergence_slopes(&rows);
    let slopes_path = slopes
        .map(Path::to_path_buf)
        .or_else(|| common.out.as_deref().map(|o| sibling(o, "_slopes.csv")));
    if let Some(path) = slopes_path {
        emit(Some(&path), &slopes_csv(&report))?;
    }
    let m = &report.median;
    eprintln!(
        "{} rows; median slopes A1 {} T {} alpha {}; {} points omitted",
        rows.len(),
        flock_core::format::fmt_opt(m.a1),
        flock_core::format::fmt_opt(m.t),
        flock_core::format::fmt_opt(m.alpha),
        report.omitted.len()
    );
    Ok(())
}

fn cmd_wavecheck(common: &Common) -> CmdResult {
    let cfg = load(common)?;
    let params = cfg.params().map_err(Failure::config)?;
    let n = cfg.wave.n;
    let width = cfg.wave.width.unwrap_or_else(|| default_width(n));
    let r = wave_check(&params, n, width, cfg.wave.amplitude, &cfg.integrator)?;
    let doc = json!({
        "N": r.n,
        "width": num(r.width),
        "c_plus_emp": num(r.c_plus_emp),
        "c_minus_emp": num(r.c_minus_emp),
        "c_plus_pred": num(r.c_plus_pred),
        "c_minus_pred": num(r.c_minus_pred),
        "err_c_plus": num(r.err_c_plus),
        "err_c_minus": num(r.err_c_minus),
        "residual": num(r.residual),
        "window": { "t_start": num(r.window.t_start), "t_end": num(r.window.t_end) },
        "snapshots": r.snapshots,
    });
    emit_json(common.out.as_deref(), &doc)?;
    Ok(())
}

fn cmd_optimize(common: &Common) -> CmdResult {
    let cfg = load(common)?;
    let (g_x, g_v) = (cfg.model.g_x, cfg.model.g_v);
    let opt = optimize_energy_index(g_x, g_v, cfg.optimize.lo, cfg.optimize.hi).map_err(RunError::from)?;
    let c = signal_velocities(&flock_core::ModelParams::canonical(g_x, g_v, opt.rho_v1)).map_err(RunError::from)?;
    let doc = json!({
        "rho_v1": num(opt.rho_v1),
        "I_E": num(opt.energy_index),
        "attenuation": num(opt.attenuation),
        "c_plus": num(c.c_plus),
        "c_minus": num(c.c_minus),
        "range": [num(cfg.optimize.lo), num(cfg.optimize.hi)],
    });
    emit_json(common.out.as_deref(), &doc)?;
    Ok(())
}

fn cmd_compare(common: &Common) -> CmdResult {
    let cfg = load(common)?;
    let comparison = ComparisonConfig {
        integrator: cfg.integrator,
        agent_stride: cfg.run.trace_agent_stride.max(1),
        ..Default::default()
    };
    let cases = comparison_run(&comparison)?;
    let table = comparison_table(&cases);
    match common.out.as_deref() {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for case in &cases {
                let name = format!("trace_rho_v1_{}.csv", fmt15(case.rho_v1));
                emit(Some(&dir.join(name)), &trace_csv(&case.trace))?;
            }
            emit(Some(&dir.join("comparison.csv")), &table)?;
        }
        None => emit(None, &table)?,
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match &cli.command {
        Command::Predict { common } => cmd_predict(common),
        Command::Simulate { common, full_trace } => cmd_simulate(common, *full_trace),
        Command::Metrics { input, common } => cmd_metrics(input, common),
        Command::Study {
            common,
            workers,
            include_n3200,
            slopes,
        } => cmd_study(common, *workers, *include_n3200, slopes.as_deref()),
        Command::Wavecheck { common } => cmd_wavecheck(common),
        Command::Optimize { common } => cmd_optimize(common),
        Command::Compare { common } => cmd_compare(common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
