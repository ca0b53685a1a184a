//! Forward-mode automatic differentiation over a small, fixed seed dimension.
//!
//! A [`Dual`] carries a value and its gradient with respect to up to
//! [`MAX_SEEDS`] parameters. Constants have seed dimension 0 and combine with
//! any other dimension; two non-constant operands must agree on dimension.
//!
//! Conventions at non-differentiable points:
//! - `min`/`max` ties propagate the gradient of the FIRST argument.
//! - `abs(0)` has zero gradient.
//! - `sqrt(0)` has zero gradient (the one-sided derivative is infinite).
//!
//! The `std::ops` operators panic on a seed-dimension mismatch, since that is
//! always a programming error. The `checked_*` methods report it, together
//! with division by zero and negative square roots, as an [`AdError`].

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

/// Largest supported number of differentiated parameters.
pub const MAX_SEEDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("seed index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("seed dimension {0} exceeds the supported maximum of {MAX_SEEDS}")]
    DimensionTooLarge(usize),
    #[error("seed dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
}

/// A value together with its gradient with respect to the seeded parameters.
#[derive(Clone, Copy, PartialEq)]
pub struct Dual {
    value: f64,
    grad: [f64; MAX_SEEDS],
    dim: u8,
}

impl fmt::Debug for Dual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({} ; {:?})", self.value, self.grad())
    }
}

impl Default for Dual {
    fn default() -> Self {
        Dual::constant(0.0)
    }
}

impl From<f64> for Dual {
    fn from(value: f64) -> Self {
        Dual::constant(value)
    }
}

fn join_dim(a: u8, b: u8) -> Result<u8, AdError> {
    match (a, b) {
        (0, d) | (d, 0) => Ok(d),
        (l, r) if l == r => Ok(l),
        (l, r) => Err(AdError::DimensionMismatch {
            left: l as usize,
            right: r as usize,
        }),
    }
}

impl Dual {
    pub const fn constant(value: f64) -> Self {
        Dual {
            value,
            grad: [0.0; MAX_SEEDS],
            dim: 0,
        }
    }

    /// Seeds `value` as parameter `index` out of `dim` differentiated parameters.
    pub fn variable(value: f64, index: usize, dim: usize) -> Result<Self, AdError> {
        if dim > MAX_SEEDS {
            return Err(AdError::DimensionTooLarge(dim));
        }
        if index >= dim {
            return Err(AdError::IndexOutOfRange { index, dim });
        }
        let mut grad = [0.0; MAX_SEEDS];
        grad[index] = 1.0;
        Ok(Dual {
            value,
            grad,
            dim: dim as u8,
        })
    }

    /// Builds a dual from an explicit gradient.
    pub fn with_grad(value: f64, grad: &[f64]) -> Result<Self, AdError> {
        if grad.len() > MAX_SEEDS {
            return Err(AdError::DimensionTooLarge(grad.len()));
        }
        let mut g = [0.0; MAX_SEEDS];
        g[..grad.len()].copy_from_slice(grad);
        Ok(Dual {
            value,
            grad: g,
            dim: grad.len() as u8,
        })
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim as usize]
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Drops the gradient, keeping only the value.
    #[inline]
    pub fn detach(&self) -> Self {
        Dual::constant(self.value)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad().iter().all(|g| g.is_finite())
    }

    /// Applies a scalar function given its value and derivative at
    /// `self.value()`.
    #[inline]
    pub fn map_with_slope(&self, value: f64, slope: f64) -> Self {
        let mut grad = [0.0; MAX_SEEDS];
        for (g, s) in grad.iter_mut().zip(self.grad.iter()) {
            *g = slope * s;
        }
        Dual {
            value,
            grad,
            dim: self.dim,
        }
    }

    /// `ca * self + cb * other`, value given separately.
    #[inline]
    fn combine(&self, other: &Self, value: f64, ca: f64, cb: f64) -> Result<Self, AdError> {
        let dim = join_dim(self.dim, other.dim)?;
        let grad = std::array::from_fn(|i| ca * self.grad[i] + cb * other.grad[i]);
        Ok(Dual { value, grad, dim })
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self, AdError> {
        self.combine(rhs, self.value + rhs.value, 1.0, 1.0)
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self, AdError> {
        self.combine(rhs, self.value - rhs.value, 1.0, -1.0)
    }

    pub fn checked_mul(&self, rhs: &Self) -> Result<Self, AdError> {
        self.combine(rhs, self.value * rhs.value, rhs.value, self.value)
    }

    pub fn checked_div(&self, rhs: &Self) -> Result<Self, AdError> {
        if rhs.value == 0.0 {
            return Err(AdError::DivisionByZero);
        }
        let q = self.value / rhs.value;
        self.combine(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }

    pub fn checked_sqrt(&self) -> Result<Self, AdError> {
        if self.value < 0.0 {
            return Err(AdError::NegativeSqrt(self.value));
        }
        Ok(self.sqrt())
    }

    pub fn checked_min(&self, rhs: &Self) -> Result<Self, AdError> {
        join_dim(self.dim, rhs.dim)?;
        Ok(self.min(*rhs))
    }

    pub fn checked_max(&self, rhs: &Self) -> Result<Self, AdError> {
        join_dim(self.dim, rhs.dim)?;
        Ok(self.max(*rhs))
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.map_with_slope(e, e)
    }

    pub fn ln(&self) -> Self {
        self.map_with_slope(self.value.ln(), 1.0 / self.value)
    }

    /// Square root; negative inputs yield NaN (use [`Dual::checked_sqrt`] to
    /// get an error instead).
    pub fn sqrt(&self) -> Self {
        let r = self.value.sqrt();
        if r == 0.0 {
            self.map_with_slope(0.0, 0.0)
        } else {
            self.map_with_slope(r, 0.5 / r)
        }
    }

    pub fn abs(&self) -> Self {
        let slope = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.map_with_slope(self.value.abs(), slope)
    }

    pub fn powi(&self, n: i32) -> Self {
        let slope = if n == 0 {
            0.0
        } else {
            n as f64 * self.value.powi(n - 1)
        };
        self.map_with_slope(self.value.powi(n), slope)
    }

    pub fn recip(&self) -> Self {
        let r = 1.0 / self.value;
        self.map_with_slope(r, -r * r)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map_with_slope(self.value * k, k)
    }

    /// Minimum; on a tie the first argument (`self`) wins.
    pub fn min(self, other: Self) -> Self {
        if other.value < self.value {
            other.with_dim_of(&self)
        } else {
            self.with_dim_of(&other)
        }
    }

    /// Maximum; on a tie the first argument (`self`) wins.
    pub fn max(self, other: Self) -> Self {
        if other.value > self.value {
            other.with_dim_of(&self)
        } else {
            self.with_dim_of(&other)
        }
    }

    /// Promotes a constant to the dimension of `other` so that min/max of a
    /// constant and a variable keep a consistent seed dimension.
    fn with_dim_of(mut self, other: &Self) -> Self {
        match join_dim(self.dim, other.dim) {
            Ok(d) => {
                self.dim = d;
                self
            }
            Err(e) => panic!("{e}"),
        }
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl $tr for Dual {
            type Output = Dual;
            #[inline]
            fn $method(self, rhs: Dual) -> Dual {
                match self.$checked(&rhs) {
                    Ok(v) => v,
                    Err(AdError::DivisionByZero) => {
                        // IEEE semantics for the unchecked operator.
                        let q = self.value / rhs.value;
                        self.combine(&rhs, q, 1.0 / rhs.value, -q / rhs.value)
                            .unwrap_or_else(|e| panic!("{e}"))
                    }
                    Err(e) => panic!("{e}"),
                }
            }
        }
        impl $tr<f64> for Dual {
            type Output = Dual;
            #[inline]
            fn $method(self, rhs: f64) -> Dual {
                self.$method(Dual::constant(rhs))
            }
        }
        impl $tr<Dual> for f64 {
            type Output = Dual;
            #[inline]
            fn $method(self, rhs: Dual) -> Dual {
                Dual::constant(self).$method(rhs)
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);
binop!(Div, div, checked_div);

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        self.map_with_slope(-self.value, -1.0)
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, rhs: Dual) {
        *self = *self + rhs;
    }
}

impl SubAssign for Dual {
    fn sub_assign(&mut self, rhs: Dual) {
        *self = *self - rhs;
    }
}

impl MulAssign for Dual {
    fn mul_assign(&mut self, rhs: Dual) {
        *self = *self * rhs;
    }
}

impl std::iter::Sum for Dual {
    fn sum<I: Iterator<Item = Dual>>(iter: I) -> Self {
        iter.fold(Dual::constant(0.0), |acc, x| acc + x)
    }
}

impl std::iter::Product for Dual {
    fn product<I: Iterator<Item = Dual>>(iter: I) -> Self {
        iter.fold(Dual::constant(1.0), |acc, x| acc * x)
    }
}

/// Evaluates `f` at `point` with every coordinate seeded, returning the value
/// and the exact gradient.
pub fn gradient<F, E>(f: F, point: &[f64]) -> Result<(f64, Vec<f64>), E>
where
    F: FnOnce(&[Dual]) -> Result<Dual, E>,
    E: From<AdError>,
{
    let dim = point.len();
    let vars = point
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual::variable(v, i, dim))
        .collect::<Result<Vec<_>, _>>()?;
    let out = f(&vars)?;
    if out.dim() != 0 && out.dim() != dim {
        return Err(AdError::DimensionMismatch {
            left: out.dim(),
            right: dim,
        }
        .into());
    }
    let mut grad = vec![0.0; dim];
    grad[..out.dim()].copy_from_slice(out.grad());
    Ok((out.value(), grad))
}
