//! Smooth surrogates for the unit step and a smooth Boolean algebra on top.
//!
//! Every surrogate `s(x; alpha)` maps the reals into `[0, 1]`, tends to 0 and 1
//! at the extremes, is non-decreasing, passes through `1/2` at the origin and
//! is point-symmetric about it. Sharpness enters only by scaling the argument,
//! `s(x; alpha) = s(alpha * x; 1)`, so the unit step is recovered as
//! `alpha -> infinity`.
//!
//! Conjunction is a product, not a minimum. A product of many factors that
//! are each slightly below 1 drifts below 1; in exchange the combined
//! indicator stays differentiable wherever its factors are.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Dual;

/// Exponents beyond this magnitude saturate the sigmoid to exactly 0 or 1.
pub const SIGMOID_CLAMP: f64 = 500.0;

/// Slack allowed when checking that smooth Boolean inputs lie in `[0, 1]`.
const UNIT_INTERVAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothingError {
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("unknown smoothing function `{0}` (expected `sigmoid` or `hard_sigmoid`)")]
    UnknownKind(String),
    #[error("smooth Boolean input {0} is outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKind {
    Sigmoid,
    HardSigmoid,
}

impl fmt::Display for SmoothingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SmoothingKind::Sigmoid => "sigmoid",
            SmoothingKind::HardSigmoid => "hard_sigmoid",
        })
    }
}

impl FromStr for SmoothingKind {
    type Err = SmoothingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(SmoothingKind::Sigmoid),
            "hard_sigmoid" | "hard-sigmoid" => Ok(SmoothingKind::HardSigmoid),
            other => Err(SmoothingError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub kind: SmoothingKind,
    alpha: f64,
    /// Cut-off used when a smooth value has to be turned back into a Boolean.
    pub threshold: f64,
}

impl SmoothingConfig {
    pub fn new(kind: SmoothingKind, alpha: f64) -> Result<Self, SmoothingError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(SmoothingError::InvalidAlpha(alpha));
        }
        Ok(SmoothingConfig {
            kind,
            alpha,
            threshold: 0.5,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Same kind and threshold, different sharpness.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, SmoothingError> {
        let mut c = Self::new(self.kind, alpha)?;
        c.threshold = self.threshold;
        Ok(c)
    }

    /// Thresholds a smooth truth value.
    pub fn to_bool(&self, v: f64) -> bool {
        v > self.threshold
    }
}

/// The hard step: 1 for strictly positive inputs, 0 otherwise.
pub fn unit_step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Logistic sigmoid `1 / (1 + exp(-alpha x))`.
pub fn sigmoid(x: Dual, alpha: f64) -> Dual {
    let z = x.scale(alpha);
    let zv = z.value();
    if zv > SIGMOID_CLAMP {
        return z.map_with_slope(1.0, 0.0);
    }
    if zv < -SIGMOID_CLAMP {
        return z.map_with_slope(0.0, 0.0);
    }
    // Evaluate on the side where the exponential cannot overflow.
    let s = if zv >= 0.0 {
        1.0 / (1.0 + (-zv).exp())
    } else {
        let e = zv.exp();
        e / (1.0 + e)
    };
    z.map_with_slope(s, s * (1.0 - s))
}

/// `min(max(0, x), 6)`.
pub fn relu6(x: Dual) -> Dual {
    Dual::constant(0.0).max(x).min(Dual::constant(6.0))
}

/// Piecewise-linear sigmoid `relu6(alpha x + 3) / 6`; exactly 0 below
/// `-3/alpha` and exactly 1 above `3/alpha`.
pub fn hard_sigmoid(x: Dual, alpha: f64) -> Dual {
    relu6(x.scale(alpha) + 3.0).scale(1.0 / 6.0)
}

/// Dispatches to the configured surrogate.
pub fn smooth(x: Dual, cfg: &SmoothingConfig) -> Dual {
    match cfg.kind {
        SmoothingKind::Sigmoid => sigmoid(x, cfg.alpha),
        SmoothingKind::HardSigmoid => hard_sigmoid(x, cfg.alpha),
    }
}

/// Smooth version of `a > b`.
pub fn smooth_greater_than(a: Dual, b: Dual, cfg: &SmoothingConfig) -> Dual {
    smooth(a - b, cfg)
}

fn check_unit(v: &Dual) -> Result<(), SmoothingError> {
    let x = v.value();
    if !(-UNIT_INTERVAL_SLACK..=1.0 + UNIT_INTERVAL_SLACK).contains(&x) {
        Err(SmoothingError::OutOfRange(x))
    } else {
        Ok(())
    }
}

pub fn smooth_and(values: &[Dual]) -> Result<Dual, SmoothingError> {
    values.iter().try_for_each(check_unit)?;
    Ok(values.iter().copied().product())
}

pub fn smooth_or(values: &[Dual]) -> Result<Dual, SmoothingError> {
    values.iter().try_for_each(check_unit)?;
    Ok(1.0 - values.iter().map(|v| 1.0 - *v).product::<Dual>())
}

pub fn smooth_not(v: Dual) -> Result<Dual, SmoothingError> {
    check_unit(&v)?;
    Ok(1.0 - v)
}

/// Outcome of the four defining properties for one kind and sharpness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyReport {
    pub kind: SmoothingKind,
    pub alpha: f64,
    /// `s(-1e6/alpha)` and `s(1e6/alpha)`.
    pub limits: (f64, f64),
    /// Number of grid steps where `s` decreased (or failed to increase, for
    /// the sigmoid inside its unsaturated range).
    pub monotonicity_violations: usize,
    pub center: f64,
    /// Largest `|(s(x) - s(0)) - (s(0) - s(-x))|` on the grid.
    pub symmetry_residual: f64,
}

impl PropertyReport {
    pub fn limits_ok(&self) -> bool {
        self.limits.0 < 1e-6 && self.limits.1 > 1.0 - 1e-6
    }

    pub fn monotone_ok(&self) -> bool {
        self.monotonicity_violations == 0
    }

    pub fn center_ok(&self) -> bool {
        self.center == 0.5
    }

    pub fn symmetry_ok(&self) -> bool {
        self.symmetry_residual < 1e-12
    }

    pub fn passed(&self) -> bool {
        self.limits_ok() && self.monotone_ok() && self.center_ok() && self.symmetry_ok()
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
        write!(
            f,
            "{} alpha={}: limits {} ({:e}, {:e}); monotone {} ({} violations); \
             s(0) {} ({}); symmetry {} ({:e}) => {}",
            self.kind,
            self.alpha,
            mark(self.limits_ok()),
            self.limits.0,
            self.limits.1,
            mark(self.monotone_ok()),
            self.monotonicity_violations,
            mark(self.center_ok()),
            self.center,
            mark(self.symmetry_ok()),
            self.symmetry_residual,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Checks the limit, monotonicity, center and symmetry properties on a
/// `points`-point grid spanning `[-10/alpha, 10/alpha]`.
pub fn check_properties(cfg: &SmoothingConfig, points: usize) -> PropertyReport {
    let s = |x: f64| smooth(Dual::constant(x), cfg).value();
    let a = cfg.alpha;
    let half = 10.0 / a;
    let n = points.max(2);
    let xs: Vec<f64> = (0..n)
        .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| s(x)).collect();
    let strict = cfg.kind == SmoothingKind::Sigmoid;
    let monotonicity_violations = ys
        .windows(2)
        .filter(|w| {
            let saturated = w[0] == 0.0 || w[1] == 1.0;
            w[1] < w[0] || (strict && !saturated && w[1] <= w[0])
        })
        .count();
    let center = s(0.0);
    let symmetry_residual = xs
        .iter()
        .map(|&x| ((s(x) - center) - (center - s(-x))).abs())
        .fold(0.0, f64::max);
    PropertyReport {
        kind: cfg.kind,
        alpha: a,
        limits: (s(-1e6 / a), s(1e6 / a)),
        monotonicity_violations,
        center,
        symmetry_residual,
    }
}
