//! Smooth path validity, path gain, received power and power maps.
//!
//! Power is an incoherent sum over all path candidates up to the configured
//! order: each path contributes `V(P) * gain(P)`, where the validity `V(P)`
//! multiplies three smooth factors:
//!
//! - the solver residual mapped through [`residual_to_validity`],
//! - an "on the physical segment" factor per interaction point,
//! - an unobstructed factor per free sub-segment of the path.
//!
//! `gain(P) = gamma^(2 order) / max(length, eps)^2`, a scalar stand-in for
//! the product of reflection coefficients and spreading loss.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Dual;
use crate::geometry::{segment_intersection, Point2, Rect, Scene, Vec2, Wall};
use crate::paths::{
    enumerate_candidates, residual_to_validity, trace, PathCandidate, Solver, SolverConfig,
    TracedPath,
};
use crate::smoothing::{smooth, SmoothingConfig, SmoothingKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("reflection coefficient must lie in [0, 1], got {0}")]
    ReflectionCoeff(f64),
    #[error("minimum distance must be positive, got {0}")]
    MinDistance(f64),
    #[error("grid must have at least one cell per axis, got {0}x{1}")]
    EmptyGrid(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub smoothing: SmoothingConfig,
    reflection_coeff: f64,
    min_distance: f64,
    pub max_order: usize,
    pub solver: Solver,
    pub solver_config: SolverConfig,
}

pub const DEFAULT_REFLECTION_COEFF: f64 = 0.5;
pub const DEFAULT_MIN_DISTANCE: f64 = 1e-3;

impl RadioConfig {
    pub fn new(
        smoothing: SmoothingConfig,
        reflection_coeff: f64,
        min_distance: f64,
        max_order: usize,
    ) -> Result<Self, RadioError> {
        if !(0.0..=1.0).contains(&reflection_coeff) {
            return Err(RadioError::ReflectionCoeff(reflection_coeff));
        }
        if !(min_distance > 0.0 && min_distance.is_finite()) {
            return Err(RadioError::MinDistance(min_distance));
        }
        Ok(RadioConfig {
            smoothing,
            reflection_coeff,
            min_distance,
            max_order,
            solver: Solver::Image,
            solver_config: SolverConfig::default(),
        })
    }

    /// Defaults with the given smoothing and order: gamma 0.5, eps 1 mm,
    /// image-method solver.
    pub fn with_smoothing(smoothing: SmoothingConfig, max_order: usize) -> Self {
        Self::new(
            smoothing,
            DEFAULT_REFLECTION_COEFF,
            DEFAULT_MIN_DISTANCE,
            max_order,
        )
        .expect("defaults are valid")
    }

    pub fn reflection_coeff(&self) -> f64 {
        self.reflection_coeff
    }

    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self, crate::smoothing::SmoothingError> {
        Ok(RadioConfig {
            smoothing: self.smoothing.with_alpha(alpha)?,
            ..*self
        })
    }
}

impl Default for RadioConfig {
    fn default() -> Self {
        let s = SmoothingConfig::new(SmoothingKind::HardSigmoid, 50.0).expect("valid alpha");
        RadioConfig::with_smoothing(s, 1)
    }
}

fn is_const_zero(v: &Dual) -> bool {
    v.value() == 0.0 && v.grad().iter().all(|g| *g == 0.0)
}

/// `s(t) s(1 - t)`: close to 1 inside `[0, 1]`, close to 0 outside.
pub fn smooth_on_segment(t: Dual, cfg: &SmoothingConfig) -> Dual {
    smooth(t, cfg) * smooth(1.0 - t, cfg)
}

/// Smooth "segment `p`-`q` is not blocked": the product over walls not in
/// `skip` of `1 - I_w`, where `I_w` is the smooth indicator that both
/// crossing parameters lie in `[0, 1]`. Parallel walls never block.
pub fn smooth_obstruction_factor(
    p: Point2,
    q: Point2,
    scene: &Scene,
    skip: &[usize],
    cfg: &SmoothingConfig,
) -> Dual {
    let mut factor = Dual::constant(1.0);
    for (i, w) in scene.walls.iter().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        if let Some(hit) = crossing_indicator(p, q, w, cfg) {
            factor *= 1.0 - hit;
            if is_const_zero(&factor) {
                break;
            }
        }
    }
    factor
}

fn crossing_indicator(p: Point2, q: Point2, w: &Wall, cfg: &SmoothingConfig) -> Option<Dual> {
    let (t, u) = segment_intersection(p, q, w)?;
    let along_path = smooth_on_segment(t, cfg);
    if is_const_zero(&along_path) {
        return None;
    }
    let hit = along_path * smooth_on_segment(u, cfg);
    if is_const_zero(&hit) {
        None
    } else {
        Some(hit)
    }
}

/// Smooth validity `V(P)` of a traced path in `[0, 1]`.
pub fn path_validity(
    path: &TracedPath,
    candidate: &PathCandidate,
    scene: &Scene,
    cfg: &SmoothingConfig,
) -> Dual {
    let residual = residual_to_validity(path.residual_loss.max(Dual::constant(0.0)), cfg)
        .expect("clamped residual is non-negative");
    let mut v = residual;
    for t in &path.wall_params {
        if is_const_zero(&v) {
            return v;
        }
        v *= smooth_on_segment(*t, cfg);
    }
    let k = candidate.order();
    for seg in 0..=k {
        if is_const_zero(&v) {
            return v;
        }
        let mut skip = [usize::MAX; 2];
        if seg > 0 {
            skip[0] = candidate.walls[seg - 1];
        }
        if seg < k {
            skip[1] = candidate.walls[seg];
        }
        v *= smooth_obstruction_factor(path.points[seg], path.points[seg + 1], scene, &skip, cfg);
    }
    v
}

/// `gamma^(2 order) / max(length, eps)^2`.
pub fn path_gain(path: &TracedPath, cfg: &RadioConfig) -> Dual {
    let d = path.length.max(Dual::constant(cfg.min_distance));
    let coeff = cfg.reflection_coeff.powi(2 * path.order() as i32);
    d.powi(2).recip().scale(coeff)
}

/// Paths with their validities and gains for one tx/rx pair.
pub struct TracedCandidate {
    pub candidate: PathCandidate,
    pub path: Option<TracedPath>,
    pub validity: Dual,
    pub gain: Dual,
}

pub fn trace_all(
    tx: Point2,
    rx: Point2,
    scene: &Scene,
    candidates: &[PathCandidate],
    cfg: &RadioConfig,
) -> Vec<TracedCandidate> {
    candidates
        .iter()
        .map(|c| {
            let walls = c.resolve(scene);
            match trace(cfg.solver, tx, rx, &walls, &cfg.solver_config) {
                Ok(path) => {
                    let validity = path_validity(&path, c, scene, &cfg.smoothing);
                    let gain = path_gain(&path, cfg);
                    TracedCandidate {
                        candidate: c.clone(),
                        path: Some(path),
                        validity,
                        gain,
                    }
                }
                Err(_) => TracedCandidate {
                    candidate: c.clone(),
                    path: None,
                    validity: Dual::constant(0.0),
                    gain: Dual::constant(0.0),
                },
            }
        })
        .collect()
}

/// Received power using precomputed candidates (summed in candidate order).
pub fn received_power_with(
    tx: Point2,
    rx: Point2,
    scene: &Scene,
    candidates: &[PathCandidate],
    cfg: &RadioConfig,
) -> Dual {
    let mut total = Dual::constant(0.0);
    for c in candidates {
        let walls = c.resolve(scene);
        let Ok(path) = trace(cfg.solver, tx, rx, &walls, &cfg.solver_config) else {
            continue;
        };
        let v = path_validity(&path, c, scene, &cfg.smoothing);
        if is_const_zero(&v) {
            continue;
        }
        total += v * path_gain(&path, cfg);
    }
    total
}

/// Incoherent received power `sum_P V(P) gain(P)` over all candidates up to
/// `cfg.max_order`. Failed traces contribute nothing.
pub fn received_power(tx: Point2, rx: Point2, scene: &Scene, cfg: &RadioConfig) -> Dual {
    let candidates = enumerate_candidates(scene, cfg.max_order);
    received_power_with(tx, rx, scene, &candidates, cfg)
}

/// Cell-centered sampling grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub bounds: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(bounds: Rect, nx: usize, ny: usize) -> Result<Self, RadioError> {
        if nx == 0 || ny == 0 {
            return Err(RadioError::EmptyGrid(nx, ny));
        }
        Ok(GridSpec { bounds, nx, ny })
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            self.bounds.width() / self.nx as f64,
            self.bounds.height() / self.ny as f64,
        )
    }

    /// Center of cell `(i, j)`; `j = 0` is the bottom row.
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        let (dx, dy) = self.cell_size();
        Vec2::new(
            self.bounds.min.x + (i as f64 + 0.5) * dx,
            self.bounds.min.y + (j as f64 + 0.5) * dy,
        )
    }
}

/// Received power sampled on a grid of receiver positions, with the power
/// gradient with respect to the receiver position at each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    pub spec: GridSpec,
    /// Row-major, bottom row first: index `j * nx + i`.
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
    /// Largest value, used for normalization.
    pub normalization: f64,
}

impl PowerGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    pub fn gradient(&self, i: usize, j: usize) -> [f64; 2] {
        self.gradients[j * self.spec.nx + i]
    }

    pub fn normalized(&self, i: usize, j: usize) -> f64 {
        if self.normalization > 0.0 {
            self.value(i, j) / self.normalization
        } else {
            0.0
        }
    }

    /// Index `(i, j)` of the largest value (first in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best % self.spec.nx, best / self.spec.nx)
    }

    /// CSV with columns `x,y,power,normalized`, bottom row first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,power,normalized")?;
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                let c = self.spec.center(i, j);
                writeln!(
                    out,
                    "{},{},{:e},{}",
                    c.x,
                    c.y,
                    self.value(i, j),
                    self.normalized(i, j)
                )?;
            }
        }
        Ok(())
    }

    /// Binary PPM (P6) of the normalized values, gray, top row first.
    pub fn write_ppm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.spec.nx, self.spec.ny)?;
        let mut buf = Vec::with_capacity(3 * self.values.len());
        for j in (0..self.spec.ny).rev() {
            for i in 0..self.spec.nx {
                let g = (self.normalized(i, j).clamp(0.0, 1.0) * 255.0).round() as u8;
                buf.extend_from_slice(&[g, g, g]);
            }
        }
        out.write_all(&buf)
    }
}

/// Evaluates received power from `tx` at every cell center of `spec`.
pub fn power_map(scene: &Scene, tx: Vec2, cfg: &RadioConfig, spec: GridSpec) -> PowerGrid {
    let candidates = enumerate_candidates(scene, cfg.max_order);
    let txp = tx.lift();
    let cells: Vec<(f64, [f64; 2])> = (0..spec.nx * spec.ny)
        .into_par_iter()
        .map(|k| {
            let c = spec.center(k % spec.nx, k / spec.nx);
            let rx = Point2::seeded(c, 0, 2).expect("two seeds");
            let p = received_power_with(txp, rx, scene, &candidates, cfg);
            let g = p.grad();
            let grad = if g.len() == 2 {
                [g[0], g[1]]
            } else {
                [0.0, 0.0]
            };
            (p.value(), grad)
        })
        .collect();
    let values: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let normalization = values.iter().copied().fold(0.0, f64::max);
    PowerGrid {
        spec,
        values,
        gradients: cells.iter().map(|c| c.1).collect(),
        normalization,
    }
}
