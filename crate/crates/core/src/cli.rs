//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 input-data error (unreadable or
//! invalid files), 3 numeric failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::autodiff::Dual;
use crate::geometry::{load_scene, Rect, Scene, Vec2};
use crate::optimize::{convergence_experiment, optimize_tx, ExperimentConfig, OptimizerConfig};
use crate::paths::{enumerate_candidates, write_trace_csv, Solver, SolverConfig, TraceRecord};
use crate::radio::{power_map, trace_all, GridSpec, RadioConfig};
use crate::smoothing::{check_properties, SmoothingConfig, SmoothingKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "drt2d", version, about = "Differentiable 2D radio ray tracer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Received power over a grid of receiver positions, as CSV.
    PowerMap(PowerMapArgs),
    /// Traced paths from a transmitter to one receiver, as CSV.
    Trace(TraceArgs),
    /// Optimize the transmitter position; writes the trajectory as CSV.
    Optimize(OptimizeArgs),
    /// Annealed versus fixed-sharpness optimization over random scenes.
    Experiment(ExperimentArgs),
    /// Check the smoothing-function properties for a list of sharpness values.
    CheckSmoothing(CheckSmoothingArgs),
}

/// Shared propagation flags for power-map and trace.
#[derive(Debug, Args)]
struct TraceRadioArgs {
    /// Smoothing sharpness.
    #[arg(long, default_value_t = 50.0)]
    alpha: f64,
    #[arg(long, default_value_t = SmoothingKind::HardSigmoid)]
    function: SmoothingKind,
    #[arg(long, default_value_t = Solver::Image)]
    solver: Solver,
    #[arg(long, default_value_t = 1)]
    max_order: usize,
    /// Reflection coefficient in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
}

/// Shared propagation and optimizer flags for optimize and experiment.
#[derive(Debug, Args)]
struct OptRadioArgs {
    /// Final smoothing sharpness (the fixed sharpness with --fixed-alpha).
    #[arg(long, default_value_t = 100.0)]
    alpha: f64,
    /// First sharpness of the annealing schedule.
    #[arg(long, default_value_t = 1.0)]
    alpha_start: f64,
    #[arg(long, default_value_t = SmoothingKind::HardSigmoid)]
    function: SmoothingKind,
    #[arg(long, default_value_t = Solver::Image)]
    solver: Solver,
    #[arg(long, default_value_t = 0)]
    max_order: usize,
    /// Reflection coefficient in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Length of the first step.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Length of the last step.
    #[arg(long, default_value_t = 0.0005)]
    final_step: f64,
}

#[derive(Debug, Args)]
struct PowerMapArgs {
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    radio: TraceRadioArgs,
    /// Grid size as WIDTHxHEIGHT cells over the unit square.
    #[arg(long, default_value = "128x128", value_parser = parse_grid)]
    grid: (usize, usize),
    /// Which of the scene's transmitters to use.
    #[arg(long, default_value_t = 0)]
    tx_index: usize,
    /// CSV output file (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a grayscale PPM image.
    #[arg(long)]
    ppm: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    radio: TraceRadioArgs,
    #[arg(long, default_value_t = 0)]
    tx_index: usize,
    #[arg(long, default_value_t = 0)]
    rx_index: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    radio: OptRadioArgs,
    /// Anneal the sharpness from --alpha-start to --alpha (default).
    #[arg(long, overrides_with = "fixed_alpha")]
    annealed: bool,
    /// Keep the sharpness fixed at --alpha.
    #[arg(long, overrides_with = "annealed")]
    fixed_alpha: bool,
    /// Initial position as X,Y (defaults to the scene's first transmitter,
    /// or the center of the unit square).
    #[arg(long, value_parser = parse_point)]
    init: Option<Vec2>,
    /// Trajectory CSV (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    radio: OptRadioArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_scenes: usize,
    #[arg(long, default_value_t = 2)]
    n_rx: usize,
    #[arg(long, default_value_t = 2)]
    n_walls: usize,
    /// Cells per axis of the reference grid search.
    #[arg(long, default_value_t = 50)]
    grid_resolution: usize,
    /// Fraction of the grid optimum that counts as success.
    #[arg(long, default_value_t = 0.9)]
    success_fraction: f64,
    /// Per-run CSV (the key=value summary always goes to standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckSmoothingArgs {
    /// Comma-separated sharpness values.
    #[arg(long, default_value = "1,10,100", value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Restrict to one function (both when omitted).
    #[arg(long)]
    function: Option<SmoothingKind>,
    /// Grid points for the monotonicity and symmetry checks.
    #[arg(long, default_value_t = 10_000)]
    points: usize,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((w, h))
}

fn parse_point(s: &str) -> Result<Vec2, String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("expected X,Y, got `{s}`"))?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y: {e}"))?;
    let p = Vec2::new(x, y);
    if !p.is_finite() {
        return Err("coordinates must be finite".into());
    }
    Ok(p)
}

fn radio_config(
    function: SmoothingKind,
    alpha: f64,
    gamma: f64,
    max_order: usize,
    solver: Solver,
) -> Result<RadioConfig, CliError> {
    let smoothing =
        SmoothingConfig::new(function, alpha).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut cfg = RadioConfig::new(smoothing, gamma, 1e-3, max_order)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.solver = solver;
    cfg.solver_config = SolverConfig::default();
    Ok(cfg)
}

fn read_scene(path: &Path) -> Result<Scene, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read scene {}: {e}", path.display())))?;
    load_scene(&text).map_err(|e| CliError::Input(format!("invalid scene {}: {e}", path.display())))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn write_err(e: io::Error) -> CliError {
    CliError::Input(format!("write failed: {e}"))
}

fn pick<T: Copy>(items: &[T], index: usize, what: &str) -> Result<T, CliError> {
    items.get(index).copied().ok_or_else(|| {
        CliError::Input(format!(
            "scene has {} {what}(s), index {index} is out of range",
            items.len()
        ))
    })
}

fn cmd_power_map(a: &PowerMapArgs) -> Result<(), CliError> {
    let r = &a.radio;
    let cfg = radio_config(r.function, r.alpha, r.gamma, r.max_order, r.solver)?;
    let scene = read_scene(&a.scene)?;
    let tx = pick(&scene.tx, a.tx_index, "transmitter")?;
    let mut out = open_output(a.out.as_deref())?;
    let mut ppm = a.ppm.as_deref().map(|p| open_output(Some(p))).transpose()?;
    let spec = GridSpec::new(Rect::unit_square(), a.grid.0, a.grid.1)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let grid = power_map(&scene, tx, &cfg, spec);
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numeric(
            "power map contains non-finite values".into(),
        ));
    }
    grid.write_csv(&mut out)
        .and_then(|_| out.flush())
        .map_err(write_err)?;
    if let Some(w) = ppm.as_mut() {
        grid.write_ppm(&mut *w)
            .and_then(|_| w.flush())
            .map_err(write_err)?;
    }
    Ok(())
}

fn cmd_trace(a: &TraceArgs) -> Result<(), CliError> {
    let r = &a.radio;
    let cfg = radio_config(r.function, r.alpha, r.gamma, r.max_order, r.solver)?;
    let scene = read_scene(&a.scene)?;
    let tx = pick(&scene.tx, a.tx_index, "transmitter")?;
    let rx = pick(&scene.rx, a.rx_index, "receiver")?;
    let mut out = open_output(a.out.as_deref())?;
    let candidates = enumerate_candidates(&scene, cfg.max_order);
    let traced = trace_all(tx.lift(), rx.lift(), &scene, &candidates, &cfg);
    let records: Vec<TraceRecord<'_>> = traced
        .iter()
        .enumerate()
        .map(|(index, t)| TraceRecord {
            index,
            candidate: &t.candidate,
            path: t.path.as_ref(),
            validity: t.validity.value(),
        })
        .collect();
    write_trace_csv(&mut out, &records)
        .and_then(|_| out.flush())
        .map_err(write_err)
}

fn optimizer_config(r: &OptRadioArgs, annealed: bool) -> OptimizerConfig {
    OptimizerConfig {
        n_iters: r.iters,
        step_size: r.step,
        final_step_size: r.final_step,
        alpha_start: r.alpha_start,
        alpha_end: r.alpha,
        annealed,
        solver: r.solver,
        ..OptimizerConfig::default()
    }
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<(), CliError> {
    let r = &a.radio;
    let cfg = radio_config(r.function, r.alpha, r.gamma, r.max_order, r.solver)?;
    let opt = optimizer_config(r, !a.fixed_alpha);
    opt.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let scene = read_scene(&a.scene)?;
    if scene.rx.is_empty() {
        return Err(CliError::Input("scene has no receivers".into()));
    }
    let mut out = open_output(a.out.as_deref())?;
    let init = a
        .init
        .or_else(|| scene.tx.first().copied())
        .unwrap_or(Vec2::new(0.5, 0.5));
    let traj =
        optimize_tx(&scene, init, &opt, &cfg).map_err(|e| CliError::Numeric(e.to_string()))?;
    if !traj.final_objective.is_finite() {
        return Err(CliError::Numeric("objective is not finite".into()));
    }
    traj.write_csv(&mut out)
        .and_then(|_| out.flush())
        .map_err(write_err)?;
    let summary = format!(
        "final_x={}\nfinal_y={}\nfinal_F={:e}\nconverged={}\n",
        traj.final_tx.x, traj.final_tx.y, traj.final_objective, traj.converged
    );
    if a.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<(), CliError> {
    let r = &a.radio;
    let radio = radio_config(r.function, r.alpha, r.gamma, r.max_order, r.solver)?;
    let optimizer = OptimizerConfig {
        success_fraction: a.success_fraction,
        ..optimizer_config(r, true)
    };
    optimizer
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if a.grid_resolution < 2 || a.n_scenes == 0 || a.n_rx == 0 {
        return Err(CliError::Usage(
            "--grid-resolution must be at least 2 and --n-scenes, --n-rx at least 1".into(),
        ));
    }
    let mut out = a.out.as_deref().map(|p| open_output(Some(p))).transpose()?;
    let cfg = ExperimentConfig {
        n_scenes: a.n_scenes,
        n_rx: a.n_rx,
        n_walls: a.n_walls,
        base_seed: a.seed,
        bounds: Rect::unit_square(),
        optimizer,
        radio,
        grid_resolution: a.grid_resolution,
    };
    let report = convergence_experiment(&cfg).map_err(|e| CliError::Numeric(e.to_string()))?;
    if let Some(w) = out.as_mut() {
        report
            .write_csv(&mut *w)
            .and_then(|_| w.flush())
            .map_err(write_err)?;
    }
    let mut stdout = io::stdout().lock();
    report.write_summary(&mut stdout).map_err(write_err)
}

fn cmd_check_smoothing(a: &CheckSmoothingArgs) -> Result<(), CliError> {
    let kinds = match a.function {
        Some(k) => vec![k],
        None => vec![SmoothingKind::Sigmoid, SmoothingKind::HardSigmoid],
    };
    let mut configs = Vec::new();
    for &kind in &kinds {
        for &alpha in &a.alpha {
            configs.push(
                SmoothingConfig::new(kind, alpha).map_err(|e| CliError::Usage(e.to_string()))?,
            );
        }
    }
    let mut all = true;
    let mut stdout = io::stdout().lock();
    for c in &configs {
        let rep = check_properties(c, a.points);
        all &= rep.passed();
        writeln!(stdout, "{rep}").map_err(write_err)?;
    }
    let e = std::f64::consts::E;
    let s1 = crate::smoothing::sigmoid(Dual::constant(1.0), 1.0).value();
    writeln!(
        stdout,
        "sigmoid(1; 1) = {s1} (e/(e+1) = {}, difference {:e})",
        e / (e + 1.0),
        (s1 - e / (e + 1.0)).abs()
    )
    .map_err(write_err)?;
    if all {
        Ok(())
    } else {
        Err(CliError::Numeric("smoothing property check failed".into()))
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::PowerMap(a) => cmd_power_map(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::CheckSmoothing(a) => cmd_check_smoothing(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("drt2d: {e}");
            e.exit_code()
        }
    }
}
