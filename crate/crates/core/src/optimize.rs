//! Transmitter placement by gradient ascent on the worst-served receiver's
//! power, with the smoothing sharpness annealed geometrically across
//! iterations, plus the randomized convergence experiment.
//!
//! Steps follow the normalized gradient, `tx += h_k * grad F / |grad F|`,
//! with the step length `h_k` decaying geometrically from `step_size` to
//! `final_step_size`. Where `|grad F|` falls below [`ZERO_GRADIENT`] the
//! transmitter does not move.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Dual;
use crate::geometry::{distance_to_wall, random_scene, Point2, Rect, Scene, Vec2};
use crate::paths::{enumerate_candidates, PathCandidate, Solver};
use crate::radio::{received_power_with, RadioConfig};
use crate::smoothing::{SmoothingConfig, SmoothingError, SmoothingKind};

/// Gradient norms below this count as a plateau.
pub const ZERO_GRADIENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("scene has no receivers")]
    NoReceivers,
    #[error("alpha schedule bounds must be positive and finite, got {0} and {1}")]
    InvalidSchedule(f64, f64),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("grid resolution must be at least 2 per axis, got {0}")]
    Resolution(usize),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
}

/// `min_i P_rx_i(tx)` using precomputed candidates; ties keep the lower
/// receiver index.
pub fn objective_with(
    tx: Point2,
    scene: &Scene,
    candidates: &[PathCandidate],
    cfg: &RadioConfig,
) -> Result<Dual, OptimizeError> {
    let mut best: Option<Dual> = None;
    for rx in &scene.rx {
        let p = received_power_with(tx, rx.lift(), scene, candidates, cfg);
        best = Some(match best {
            None => p,
            Some(b) => b.min(p),
        });
    }
    best.ok_or(OptimizeError::NoReceivers)
}

/// Worst-case received power over all receivers.
pub fn objective(tx: Point2, scene: &Scene, cfg: &RadioConfig) -> Result<Dual, OptimizeError> {
    let candidates = enumerate_candidates(scene, cfg.max_order);
    objective_with(tx, scene, &candidates, cfg)
}

/// `start * (end / start)^(k / (n - 1))` for `k = 0..n`; `[end]` when `n = 1`.
/// The last element is exactly `end`.
pub fn alpha_schedule(start: f64, end: f64, n: usize) -> Result<Vec<f64>, OptimizeError> {
    if !(start > 0.0 && end > 0.0 && start.is_finite() && end.is_finite()) {
        return Err(OptimizeError::InvalidSchedule(start, end));
    }
    Ok(match n {
        0 => Vec::new(),
        1 => vec![end],
        _ => {
            let ratio = end / start;
            let last = (n - 1) as f64;
            let mut v: Vec<f64> = (0..n)
                .map(|k| start * ratio.powf(k as f64 / last))
                .collect();
            v[n - 1] = end;
            v
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub n_iters: usize,
    /// Step length of the first iteration.
    pub step_size: f64,
    /// Step length of the last iteration.
    pub final_step_size: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub annealed: bool,
    pub solver: Solver,
    pub success_fraction: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            n_iters: 100,
            step_size: 0.05,
            final_step_size: 0.0005,
            alpha_start: 1.0,
            alpha_end: 100.0,
            annealed: true,
            solver: Solver::Image,
            success_fraction: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::InvalidConfig(m.to_string()));
        if self.n_iters == 0 {
            return bad("n_iters must be at least 1");
        }
        if !(self.alpha_start > 0.0 && self.alpha_end >= self.alpha_start) {
            return bad("need alpha_end >= alpha_start > 0");
        }
        if !(self.step_size > 0.0 && self.final_step_size > 0.0) {
            return bad("step sizes must be positive");
        }
        if !(self.success_fraction > 0.0 && self.success_fraction <= 1.0) {
            return bad("success_fraction must lie in (0, 1]");
        }
        Ok(())
    }

    fn steps(&self) -> Vec<f64> {
        alpha_schedule(self.step_size, self.final_step_size, self.n_iters)
            .expect("validated step sizes")
    }

    fn alphas(&self) -> Vec<f64> {
        if self.annealed {
            alpha_schedule(self.alpha_start, self.alpha_end, self.n_iters)
        } else {
            Ok(vec![self.alpha_end; self.n_iters])
        }
        .expect("validated alphas")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub tx: Vec2,
    pub alpha: f64,
    pub objective: f64,
    pub grad_norm: f64,
    /// The gradient was not finite and the step was skipped.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub final_tx: Vec2,
    /// Objective at the final position, evaluated at `alpha_end`.
    pub final_objective: f64,
    /// The run ended off any plateau: positive objective and non-vanishing
    /// gradient at `alpha_end`.
    pub converged: bool,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iter,x,y,alpha,F,grad_norm,skipped")?;
        for (k, r) in self.records.iter().enumerate() {
            writeln!(
                out,
                "{k},{},{},{},{:e},{:e},{}",
                r.tx.x, r.tx.y, r.alpha, r.objective, r.grad_norm, r.skipped
            )?;
        }
        Ok(())
    }
}

fn seeded_tx(p: Vec2) -> Point2 {
    Point2::seeded(p, 0, 2).expect("two seeds fit")
}

/// Gradient ascent of the objective over the transmitter position.
pub fn optimize_tx(
    scene: &Scene,
    init: Vec2,
    opt: &OptimizerConfig,
    radio: &RadioConfig,
) -> Result<Trajectory, OptimizeError> {
    opt.validate()?;
    if scene.rx.is_empty() {
        return Err(OptimizeError::NoReceivers);
    }
    let mut base = *radio;
    base.solver = opt.solver;
    let candidates = enumerate_candidates(scene, base.max_order);
    let mut pos = init;
    let mut records = Vec::with_capacity(opt.n_iters);
    for (alpha, step) in opt.alphas().into_iter().zip(opt.steps()) {
        let cfg = base.with_alpha(alpha)?;
        let f = objective_with(seeded_tx(pos), scene, &candidates, &cfg)?;
        let skipped = !f.is_finite();
        let grad_norm = if skipped { f64::NAN } else { f.grad_norm() };
        records.push(IterationRecord {
            tx: pos,
            alpha,
            objective: f.value(),
            grad_norm,
            skipped,
        });
        if !skipped && grad_norm >= ZERO_GRADIENT {
            let g = f.grad();
            pos = pos + Vec2::new(g[0], g[1]) * (step / grad_norm);
        }
    }
    let cfg = base.with_alpha(opt.alpha_end)?;
    let f = objective_with(seeded_tx(pos), scene, &candidates, &cfg)?;
    Ok(Trajectory {
        records,
        final_tx: pos,
        final_objective: f.value(),
        converged: f.value() > 0.0 && f.grad_norm() >= ZERO_GRADIENT,
    })
}

/// Exhaustive objective evaluation at the centers of a
/// `resolution x resolution` grid over `bounds`; returns the best cell center
/// (first in row-major order on ties) and its value.
pub fn grid_search_optimum(
    scene: &Scene,
    radio: &RadioConfig,
    bounds: Rect,
    resolution: usize,
) -> Result<(Vec2, f64), OptimizeError> {
    if resolution < 2 {
        return Err(OptimizeError::Resolution(resolution));
    }
    if scene.rx.is_empty() {
        return Err(OptimizeError::NoReceivers);
    }
    let candidates = enumerate_candidates(scene, radio.max_order);
    let (dx, dy) = (
        bounds.width() / resolution as f64,
        bounds.height() / resolution as f64,
    );
    let values: Vec<(Vec2, f64)> = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % resolution, k / resolution);
            let p = Vec2::new(
                bounds.min.x + (i as f64 + 0.5) * dx,
                bounds.min.y + (j as f64 + 0.5) * dy,
            );
            let f = objective_with(p.lift(), scene, &candidates, radio).map(|f| f.value());
            (p, f.unwrap_or(f64::NEG_INFINITY))
        })
        .collect();
    let mut best = values[0];
    for v in &values[1..] {
        if v.1 > best.1 {
            best = *v;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_scenes: usize,
    pub n_rx: usize,
    pub n_walls: usize,
    pub base_seed: u64,
    pub bounds: Rect,
    /// Annealed variant; the baseline uses the same settings with a fixed
    /// `alpha_end`.
    pub optimizer: OptimizerConfig,
    pub radio: RadioConfig,
    pub grid_resolution: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_scenes: 100,
            n_rx: 2,
            n_walls: 2,
            base_seed: 0,
            bounds: Rect::unit_square(),
            optimizer: OptimizerConfig::default(),
            radio: RadioConfig::with_smoothing(
                SmoothingConfig::new(SmoothingKind::HardSigmoid, 100.0).expect("valid alpha"),
                0,
            ),
            grid_resolution: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Annealed,
    Baseline,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Annealed => "annealed",
            Variant::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentRow {
    pub seed: u64,
    pub n_rx: usize,
    pub variant: Variant,
    pub init: Vec2,
    pub final_tx: Vec2,
    pub final_objective: f64,
    pub grid_optimum: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSummary {
    pub n_scenes: usize,
    pub annealed_rate: f64,
    pub baseline_rate: f64,
    /// `annealed_rate / baseline_rate` (infinite when the baseline never succeeds).
    pub ratio: f64,
    /// Fraction of baseline successes where the annealed run also succeeded
    /// (NaN when the baseline never succeeds).
    pub conditional_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "seed,n_rx,variant,init_x,init_y,final_x,final_y,final_F,grid_opt_F,success"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:e},{:e},{}",
                r.seed,
                r.n_rx,
                r.variant.name(),
                r.init.x,
                r.init.y,
                r.final_tx.x,
                r.final_tx.y,
                r.final_objective,
                r.grid_optimum,
                r.success
            )?;
        }
        Ok(())
    }

    /// Configuration and results as `key=value` lines.
    pub fn write_summary<W: Write>(&self, mut out: W) -> io::Result<()> {
        let c = &self.config;
        let o = &c.optimizer;
        let r = &c.radio;
        let s = &self.summary;
        let lines = [
            ("n_scenes", c.n_scenes.to_string()),
            ("n_rx", c.n_rx.to_string()),
            ("n_walls", c.n_walls.to_string()),
            ("base_seed", c.base_seed.to_string()),
            (
                "bounds",
                format!(
                    "{},{},{},{}",
                    c.bounds.min.x, c.bounds.min.y, c.bounds.max.x, c.bounds.max.y
                ),
            ),
            ("function", r.smoothing.kind.to_string()),
            ("max_order", r.max_order.to_string()),
            ("gamma", r.reflection_coeff().to_string()),
            ("solver", o.solver.to_string()),
            ("iters", o.n_iters.to_string()),
            ("step", o.step_size.to_string()),
            ("final_step", o.final_step_size.to_string()),
            ("alpha_start", o.alpha_start.to_string()),
            ("alpha_end", o.alpha_end.to_string()),
            ("success_fraction", o.success_fraction.to_string()),
            ("grid_resolution", c.grid_resolution.to_string()),
            ("annealed_rate", s.annealed_rate.to_string()),
            ("baseline_rate", s.baseline_rate.to_string()),
            ("ratio", s.ratio.to_string()),
            ("conditional_rate", s.conditional_rate.to_string()),
        ];
        for (k, v) in lines {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Uniform point in `bounds` at least `clearance` away from every wall.
pub fn sample_init<R: Rng>(scene: &Scene, bounds: Rect, clearance: f64, rng: &mut R) -> Vec2 {
    loop {
        let p = bounds.sample(rng);
        if scene
            .walls
            .iter()
            .all(|w| distance_to_wall(p, w) > clearance)
        {
            return p;
        }
    }
}

/// Runs both variants on `n_scenes` seeded random scenes. Scene `i` uses
/// seed `base_seed + i` for both its layout and its initial position.
pub fn convergence_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, OptimizeError> {
    if cfg.n_scenes == 0 {
        return Err(OptimizeError::InvalidConfig(
            "n_scenes must be at least 1".into(),
        ));
    }
    cfg.optimizer.validate()?;
    let annealed = OptimizerConfig {
        annealed: true,
        ..cfg.optimizer
    };
    let baseline = OptimizerConfig {
        annealed: false,
        ..cfg.optimizer
    };
    let mut hard = cfg.radio.with_alpha(cfg.optimizer.alpha_end)?;
    hard.solver = cfg.optimizer.solver;
    let per_scene: Vec<Result<[ExperimentRow; 2], OptimizeError>> = (0..cfg.n_scenes)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.base_seed.wrapping_add(i as u64);
            let scene = random_scene(seed, cfg.n_walls, cfg.n_rx, cfg.bounds);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let init = sample_init(&scene, cfg.bounds, cfg.radio.min_distance(), &mut rng);
            let (_, grid_opt) =
                grid_search_optimum(&scene, &hard, cfg.bounds, cfg.grid_resolution)?;
            let run =
                |variant: Variant, opt: &OptimizerConfig| -> Result<ExperimentRow, OptimizeError> {
                    let t = optimize_tx(&scene, init, opt, &cfg.radio)?;
                    Ok(ExperimentRow {
                        seed,
                        n_rx: cfg.n_rx,
                        variant,
                        init,
                        final_tx: t.final_tx,
                        final_objective: t.final_objective,
                        grid_optimum: grid_opt,
                        success: t.final_objective >= cfg.optimizer.success_fraction * grid_opt,
                    })
                };
            Ok([
                run(Variant::Annealed, &annealed)?,
                run(Variant::Baseline, &baseline)?,
            ])
        })
        .collect();
    let mut rows = Vec::with_capacity(2 * cfg.n_scenes);
    let (mut a, mut b, mut ab) = (0usize, 0usize, 0usize);
    for pair in per_scene {
        let [ra, rb] = pair?;
        a += ra.success as usize;
        b += rb.success as usize;
        ab += (ra.success && rb.success) as usize;
        rows.push(ra);
        rows.push(rb);
    }
    let n = cfg.n_scenes as f64;
    let summary = ExperimentSummary {
        n_scenes: cfg.n_scenes,
        annealed_rate: a as f64 / n,
        baseline_rate: b as f64 / n,
        ratio: if b > 0 {
            a as f64 / b as f64
        } else {
            f64::INFINITY
        },
        conditional_rate: if b > 0 {
            ab as f64 / b as f64
        } else {
            f64::NAN
        },
    };
    Ok(ExperimentReport {
        config: *cfg,
        rows,
        summary,
    })
}
