//! Differentiable 2D radio ray tracing.
//!
//! Every discontinuous test in the tracer (occlusion, "is this point on the
//! wall", "did the solver converge") is replaced by a smooth surrogate of the
//! unit step whose sharpness `alpha` is configurable. Received power is then
//! continuous in the node positions and its gradient, computed by
//! forward-mode automatic differentiation, can drive antenna placement.
//! Annealing `alpha` upward during optimization recovers the hard model at
//! the end.

pub mod autodiff;
pub mod cli;
pub mod geometry;
mod linalg;
pub mod optimize;
pub mod paths;
pub mod radio;
pub mod smoothing;

pub use autodiff::{gradient, AdError, Dual};
pub use geometry::{load_scene, random_scene, serialize_scene, Point2, Rect, Scene, Vec2, Wall};
pub use paths::{PathCandidate, Solver, SolverConfig, TracedPath};
pub use radio::{PowerGrid, RadioConfig};
pub use smoothing::{SmoothingConfig, SmoothingKind};
