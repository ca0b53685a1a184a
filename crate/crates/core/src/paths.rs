//! Path candidates and the three path solvers.
//!
//! Every solver works on the infinite lines through the candidate's walls and
//! reports the points it found together with a residual loss that is zero
//! exactly when each point lies on its wall line and obeys the mirror law.
//! Whether the points fall on the physical segments is judged later, by the
//! smooth validity model.
//!
//! The iterative solvers run on detached values first and then take two
//! final Newton (or Gauss-Newton) steps with full dual numbers, so the
//! returned points carry derivatives with respect to the transmitter and
//! receiver coordinates.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Dual;
use crate::geometry::{
    mirror_point, point_on_wall, reflect, segment_intersection, Point2, Scene, Vec2, Wall,
};
use crate::linalg;
use crate::smoothing::{smooth, SmoothingConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("candidate is unreachable: backward ray parallel to wall line {0}")]
    Unreachable(usize),
    #[error("residual loss must be non-negative, got {0}")]
    NegativeLoss(f64),
    #[error("unknown solver `{0}` (expected `im`, `fpt` or `mpt`)")]
    UnknownSolver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    /// Image method.
    #[serde(rename = "im")]
    Image,
    /// Total-length minimization over wall parameters.
    #[serde(rename = "fpt")]
    Fermat,
    /// Residual minimization over free interaction points.
    #[serde(rename = "mpt")]
    MinPath,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Image => "im",
            Solver::Fermat => "fpt",
            Solver::MinPath => "mpt",
        })
    }
}

impl FromStr for Solver {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "im" => Ok(Solver::Image),
            "fpt" => Ok(Solver::Fermat),
            "mpt" => Ok(Solver::MinPath),
            other => Err(PathError::UnknownSolver(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Absolute stopping tolerance (meters scale).
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            tol: 1e-8,
        }
    }
}

/// Ordered wall indices a path interacts with; empty for line of sight.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathCandidate {
    pub walls: Vec<usize>,
}

impl PathCandidate {
    pub fn los() -> Self {
        PathCandidate { walls: Vec::new() }
    }

    pub fn order(&self) -> usize {
        self.walls.len()
    }

    pub fn resolve(&self, scene: &Scene) -> Vec<Wall> {
        self.walls.iter().map(|&i| scene.walls[i]).collect()
    }
}

impl fmt::Display for PathCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.walls.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

/// All wall sequences of length `0..=max_order` without immediate repeats
/// and with every consecutive pair visible, ordered by length and then
/// lexicographically.
pub fn enumerate_candidates(scene: &Scene, max_order: usize) -> Vec<PathCandidate> {
    let n = scene.walls.len();
    let mut out = vec![PathCandidate::los()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_order {
        let mut next = Vec::new();
        for seq in &frontier {
            for w in 0..n {
                let ok = match seq.last() {
                    None => true,
                    Some(&prev) => scene.visibility.visible(prev, w),
                };
                if ok {
                    let mut s = seq.clone();
                    s.push(w);
                    next.push(s);
                }
            }
        }
        out.extend(next.iter().map(|w| PathCandidate { walls: w.clone() }));
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    /// Transmitter, interaction points, receiver.
    pub points: Vec<Point2>,
    /// Parameter of each interaction point along its wall (`0` at `a`, `1` at `b`).
    pub wall_params: Vec<Dual>,
    pub residual_loss: Dual,
    pub length: Dual,
    /// Whether the iterative solver met its tolerance (always true for the
    /// image method).
    pub converged: bool,
}

impl TracedPath {
    fn assemble(points: Vec<Point2>, walls: &[Wall], converged: bool) -> Self {
        let wall_params = walls
            .iter()
            .zip(&points[1..])
            .map(|(w, p)| w.project(*p))
            .collect();
        TracedPath {
            residual_loss: mpt_loss(&points, walls),
            length: polyline_length(&points),
            points,
            wall_params,
            converged,
        }
    }

    pub fn order(&self) -> usize {
        self.wall_params.len()
    }
}

pub fn polyline_length(points: &[Point2]) -> Dual {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Residual cost of a path: for each interaction point, its squared distance
/// to the wall line plus the squared mismatch between the outgoing direction
/// and the mirror image of the incoming direction.
pub fn mpt_loss(points: &[Point2], walls: &[Wall]) -> Dual {
    debug_assert_eq!(points.len(), walls.len() + 2);
    let mut loss = Dual::constant(0.0);
    for (i, w) in walls.iter().enumerate() {
        let (prev, cur, next) = (points[i], points[i + 1], points[i + 2]);
        let d = w.signed_distance(cur);
        let incoming = (cur - prev).unit();
        let outgoing = (next - cur).unit();
        let e = outgoing - reflect(incoming, w.normal());
        loss += d * d + e.norm_sq();
    }
    loss
}

/// Maps a residual loss to a validity factor `2 (1 - s(loss))`: exactly 1 at
/// zero loss and decaying to 0 as the loss grows.
pub fn residual_to_validity(loss: Dual, cfg: &SmoothingConfig) -> Result<Dual, PathError> {
    if loss.value() < 0.0 || loss.value().is_nan() {
        return Err(PathError::NegativeLoss(loss.value()));
    }
    Ok((1.0 - smooth(loss, cfg)).scale(2.0))
}

/// Image method: mirror the transmitter across each wall line in turn, then
/// walk back from the receiver intersecting each wall line with the segment
/// toward the matching image.
pub fn image_method(tx: Point2, rx: Point2, walls: &[Wall]) -> Result<TracedPath, PathError> {
    let k = walls.len();
    let mut images = Vec::with_capacity(k + 1);
    images.push(tx);
    for w in walls {
        let last = *images.last().unwrap();
        images.push(mirror_point(last, w));
    }
    let mut points = vec![rx; k + 2];
    points[0] = tx;
    let mut current = rx;
    for i in (0..k).rev() {
        let (_, u) = segment_intersection(current, images[i + 1], &walls[i])
            .ok_or(PathError::Unreachable(i))?;
        current = point_on_wall(&walls[i], u);
        points[i + 1] = current;
    }
    Ok(TracedPath::assemble(points, walls, true))
}

/// Dispatches to the chosen solver. Only the image method can fail.
pub fn trace(
    solver: Solver,
    tx: Point2,
    rx: Point2,
    walls: &[Wall],
    cfg: &SolverConfig,
) -> Result<TracedPath, PathError> {
    match solver {
        Solver::Image => image_method(tx, rx, walls),
        Solver::Fermat => Ok(fermat_path_tracing(tx, rx, walls, cfg)),
        Solver::MinPath => Ok(min_path_tracing(tx, rx, walls, cfg)),
    }
}

fn wall_points(walls: &[Wall], t: &[Dual], tx: Point2, rx: Point2) -> Vec<Point2> {
    let mut pts = Vec::with_capacity(walls.len() + 2);
    pts.push(tx);
    pts.extend(walls.iter().zip(t).map(|(w, &ti)| point_on_wall(w, ti)));
    pts.push(rx);
    pts
}

/// Segment data shared by both iterative solvers.
struct Segment {
    len: Dual,
    unit: Point2,
}

fn segments(points: &[Point2]) -> Vec<Segment> {
    points
        .windows(2)
        .map(|p| {
            let v = p[1] - p[0];
            let len = v.norm();
            Segment {
                unit: v.unit(),
                len,
            }
        })
        .collect()
}

/// `d1^T (I - u u^T) d2 / len`, zero for a vanishing segment.
fn projected(seg: &Segment, d1: Vec2, d2: Vec2) -> Dual {
    if seg.len.value() < 1e-15 {
        return Dual::constant(0.0);
    }
    let u = seg.unit;
    (Dual::constant(d1.dot(d2)) - u.dot_v(d1) * u.dot_v(d2)) / seg.len
}

/// Gradient and Hessian of total path length with respect to the wall
/// parameters. Point `i` sits between segments `i` and `i + 1`.
fn fermat_system(
    walls: &[Wall],
    t: &[Dual],
    tx: Point2,
    rx: Point2,
) -> (Dual, Vec<Dual>, Vec<Dual>) {
    let k = walls.len();
    let pts = wall_points(walls, t, tx, rx);
    let segs = segments(&pts);
    let total: Dual = segs.iter().map(|s| s.len).sum();
    let mut g = vec![Dual::constant(0.0); k];
    let mut h = vec![Dual::constant(0.0); k * k];
    for i in 0..k {
        let d = walls[i].span();
        let (before, after) = (&segs[i], &segs[i + 1]);
        g[i] = before.unit.dot_v(d) - after.unit.dot_v(d);
        h[i * k + i] = projected(before, d, d) + projected(after, d, d);
        if i + 1 < k {
            let off = -projected(after, d, walls[i + 1].span());
            h[i * k + i + 1] = off;
            h[(i + 1) * k + i] = off;
        }
    }
    (total, g, h)
}

fn norm(v: &[Dual]) -> f64 {
    v.iter().map(|x| x.value() * x.value()).sum::<f64>().sqrt()
}

fn damped(h: &[Dual], k: usize, lambda: f64) -> Vec<Dual> {
    let mut a = h.to_vec();
    for i in 0..k {
        a[i * k + i] += Dual::constant(lambda);
    }
    a
}

/// Fermat path tracing: minimizes the total length over the wall parameters
/// (unbounded, i.e. on the infinite wall lines) with a damped Newton method
/// started at the wall midpoints. Total length is convex in the parameters,
/// so the stationary point found is the global minimizer.
pub fn fermat_path_tracing(
    tx: Point2,
    rx: Point2,
    walls: &[Wall],
    cfg: &SolverConfig,
) -> TracedPath {
    let k = walls.len();
    if k == 0 {
        return TracedPath::assemble(vec![tx, rx], walls, true);
    }
    let (txc, rxc) = (tx.detach(), rx.detach());
    let mut t = vec![Dual::constant(0.5); k];
    let mut converged = false;
    let mut lambda = 0.0;
    for _ in 0..cfg.max_iters {
        let (len, g, h) = fermat_system(walls, &t, txc, rxc);
        if norm(&g) < cfg.tol {
            converged = true;
            break;
        }
        let diag = (0..k)
            .map(|i| h[i * k + i].value().abs())
            .fold(0.0, f64::max);
        let rhs: Vec<Dual> = g.iter().map(|x| -*x).collect();
        let mut accepted = false;
        for _ in 0..40 {
            let Some(step) = linalg::solve(damped(&h, k, lambda), rhs.clone()) else {
                lambda = (lambda * 10.0).max(1e-10 * diag.max(1e-12));
                continue;
            };
            let trial: Vec<Dual> = t.iter().zip(&step).map(|(a, b)| *a + *b).collect();
            let trial_len = polyline_length(&wall_points(walls, &trial, txc, rxc));
            let slope: f64 = g
                .iter()
                .zip(&step)
                .map(|(a, b)| a.value() * b.value())
                .sum();
            if trial_len.value() <= len.value() + 1e-4 * slope {
                t = trial;
                lambda *= 0.1;
                if lambda < 1e-12 * diag {
                    lambda = 0.0;
                }
                accepted = true;
                break;
            }
            lambda = (lambda * 10.0).max(1e-6 * diag.max(1e-12));
        }
        if !accepted {
            break;
        }
    }
    if converged {
        for _ in 0..2 {
            let (_, g, h) = fermat_system(walls, &t, tx, rx);
            let rhs = g.iter().map(|x| -*x).collect();
            match linalg::solve(h, rhs) {
                Some(step) => t.iter_mut().zip(step).for_each(|(a, b)| *a += b),
                None => break,
            }
        }
    }
    TracedPath::assemble(wall_points(walls, &t, tx, rx), walls, converged)
}

/// Residual vector and its Jacobian with respect to the free interaction
/// points `(x1, y1, ..., xk, yk)`. Three residuals per interaction: signed
/// distance to the wall line, then the two components of the mirror-law
/// mismatch. Row-major `3k x 2k`.
fn min_path_system(walls: &[Wall], pts: &[Point2]) -> (Vec<Dual>, Vec<Dual>) {
    let k = walls.len();
    let cols = 2 * k;
    let segs = segments(pts);
    let mut r = Vec::with_capacity(3 * k);
    let mut jac = vec![Dual::constant(0.0); 3 * k * cols];
    let zero = Dual::constant(0.0);
    // Jacobian of a segment's unit vector w.r.t. its difference vector.
    let proj = |s: &Segment| -> [[Dual; 2]; 2] {
        if s.len.value() < 1e-15 {
            return [[zero; 2]; 2];
        }
        let inv = s.len.recip();
        let (ux, uy) = (s.unit.x, s.unit.y);
        [
            [(1.0 - ux * ux) * inv, -(ux * uy) * inv],
            [-(ux * uy) * inv, (1.0 - uy * uy) * inv],
        ]
    };
    for i in 0..k {
        let w = &walls[i];
        let n = w.normal();
        let refl = [
            [1.0 - 2.0 * n.x * n.x, -2.0 * n.x * n.y],
            [-2.0 * n.x * n.y, 1.0 - 2.0 * n.y * n.y],
        ];
        let (before, after) = (&segs[i], &segs[i + 1]);
        r.push(w.signed_distance(pts[i + 1]));
        let e = after.unit - reflect(before.unit, n);
        r.push(e.x);
        r.push(e.y);

        let row = 3 * i;
        jac[row * cols + 2 * i] = Dual::constant(n.x);
        jac[row * cols + 2 * i + 1] = Dual::constant(n.y);

        let ma = proj(after);
        let mb = proj(before);
        // R * M_before
        let mut rmb = [[zero; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                rmb[a][b] = mb[0][b].scale(refl[a][0]) + mb[1][b].scale(refl[a][1]);
            }
        }
        for a in 0..2 {
            let rr = (row + 1 + a) * cols;
            for b in 0..2 {
                jac[rr + 2 * i + b] = -ma[a][b] - rmb[a][b];
                if i + 1 < k {
                    jac[rr + 2 * (i + 1) + b] = ma[a][b];
                }
                if i > 0 {
                    jac[rr + 2 * (i - 1) + b] = rmb[a][b];
                }
            }
        }
    }
    (r, jac)
}

/// Normal equations `J^T J` and `-J^T r`.
fn normal_equations(r: &[Dual], jac: &[Dual], cols: usize) -> (Vec<Dual>, Vec<Dual>) {
    let rows = r.len();
    let mut jtj = vec![Dual::constant(0.0); cols * cols];
    let mut rhs = vec![Dual::constant(0.0); cols];
    for i in 0..rows {
        let row = &jac[i * cols..(i + 1) * cols];
        for a in 0..cols {
            if row[a].value() == 0.0 && row[a].dim() == 0 {
                continue;
            }
            rhs[a] -= row[a] * r[i];
            for b in 0..cols {
                jtj[a * cols + b] += row[a] * row[b];
            }
        }
    }
    (jtj, rhs)
}

fn with_free_points(pts: &[Point2], x: &[Dual]) -> Vec<Point2> {
    let mut out = pts.to_vec();
    for (i, p) in out[1..pts.len() - 1].iter_mut().enumerate() {
        *p = Point2::new(x[2 * i], x[2 * i + 1]);
    }
    out
}

fn sum_sq(r: &[Dual]) -> f64 {
    r.iter().map(|v| v.value() * v.value()).sum()
}

/// Wall parameters tried, in order, as starting points when the previous
/// start ends on a non-zero residual.
const MPT_STARTS: [f64; 3] = [0.5, 0.1, 0.9];

/// All-midpoint start first, then the first wall parameter and the shared
/// remaining parameter varied over `MPT_STARTS`.
fn mpt_starts(k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.5; k]];
    for a in MPT_STARTS {
        for b in MPT_STARTS {
            let mut v = vec![b; k];
            v[0] = a;
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

struct LmResult {
    x: Vec<Dual>,
    cost: f64,
    converged: bool,
}

/// Levenberg-Marquardt on detached values from the given wall parameters.
fn levenberg_marquardt(
    walls: &[Wall],
    tx: Point2,
    rx: Point2,
    start: &[Dual],
    cfg: &SolverConfig,
) -> LmResult {
    let cols = 2 * walls.len();
    let mut pts = wall_points(walls, start, tx, rx);
    let mut x: Vec<Dual> = pts[1..=walls.len()]
        .iter()
        .flat_map(|p| [p.x, p.y])
        .collect();
    let (mut r, mut jac) = min_path_system(walls, &pts);
    let mut cost = sum_sq(&r);
    let mut lambda = {
        let (jtj, _) = normal_equations(&r, &jac, cols);
        1e-3 * (0..cols)
            .map(|i| jtj[i * cols + i].value())
            .fold(0.0, f64::max)
    };
    let mut converged = cost < 1e-30;
    let mut iters = 0;
    while !converged && iters < cfg.max_iters {
        iters += 1;
        let (jtj, rhs) = normal_equations(&r, &jac, cols);
        let Some(step) = linalg::solve(damped(&jtj, cols, lambda), rhs) else {
            lambda = (lambda * 10.0).max(1e-12);
            continue;
        };
        let trial_x: Vec<Dual> = x.iter().zip(&step).map(|(a, b)| *a + *b).collect();
        let trial_pts = with_free_points(&pts, &trial_x);
        let (tr, tj) = min_path_system(walls, &trial_pts);
        let trial_cost = sum_sq(&tr);
        if trial_cost < cost {
            let step_norm = norm(&step);
            let scale = 1.0 + norm(&x);
            x = trial_x;
            pts = trial_pts;
            r = tr;
            jac = tj;
            cost = trial_cost;
            lambda *= 0.2;
            if cost < 1e-30 || step_norm < cfg.tol * scale {
                converged = true;
            }
        } else {
            lambda = (lambda * 5.0).max(1e-12);
            if lambda > 1e16 {
                // No descent direction left: stationary point.
                converged = true;
            }
        }
    }
    LmResult { x, cost, converged }
}

/// Min-path tracing: Levenberg-Marquardt on the residual system over free
/// interaction points, started at the wall midpoints and restarted from
/// other wall parameters while the residual stays non-zero.
pub fn min_path_tracing(tx: Point2, rx: Point2, walls: &[Wall], cfg: &SolverConfig) -> TracedPath {
    let k = walls.len();
    if k == 0 {
        return TracedPath::assemble(vec![tx, rx], walls, true);
    }
    let cols = 2 * k;
    let (txd, rxd) = (tx.detach(), rx.detach());
    let mut best: Option<LmResult> = None;
    for start in mpt_starts(k) {
        let start: Vec<Dual> = start.into_iter().map(Dual::constant).collect();
        let run = levenberg_marquardt(walls, txd, rxd, &start, cfg);
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
        if best.as_ref().is_some_and(|b| b.cost < 1e-20) {
            break;
        }
    }
    let LmResult {
        mut x,
        cost,
        converged,
    } = best.expect("at least one start");
    let mut pts = with_free_points(
        &wall_points(walls, &vec![Dual::constant(0.5); k], tx, rx),
        &x,
    );
    if cost < 1e-20 {
        // Zero-residual solution: plain Gauss-Newton steps propagate the
        // derivatives of the solution with respect to tx and rx.
        for _ in 0..2 {
            let (r, jac) = min_path_system(walls, &pts);
            let (jtj, rhs) = normal_equations(&r, &jac, cols);
            match linalg::solve(jtj, rhs) {
                Some(step) => {
                    x.iter_mut().zip(step).for_each(|(a, b)| *a += b);
                    pts = with_free_points(&pts, &x);
                }
                None => break,
            }
        }
    }
    TracedPath::assemble(pts, walls, converged)
}

/// One row of a trace dump.
pub struct TraceRecord<'a> {
    pub index: usize,
    pub candidate: &'a PathCandidate,
    pub path: Option<&'a TracedPath>,
    pub validity: f64,
}

/// Writes traced paths as CSV:
/// `candidate,order,wall_sequence,x0,y0,...,residual,validity,length`.
/// Point columns are padded to the highest order present; unreachable
/// candidates leave the point, residual and length cells empty.
pub fn write_trace_csv<W: Write>(mut out: W, records: &[TraceRecord<'_>]) -> io::Result<()> {
    let max_points = records
        .iter()
        .map(|r| r.candidate.order() + 2)
        .max()
        .unwrap_or(2);
    let mut header = vec![
        "candidate".to_string(),
        "order".into(),
        "wall_sequence".into(),
    ];
    for i in 0..max_points {
        header.push(format!("x{i}"));
        header.push(format!("y{i}"));
    }
    header.extend(["residual".into(), "validity".into(), "length".into()]);
    writeln!(out, "{}", header.join(","))?;
    for rec in records {
        let mut row = vec![
            rec.index.to_string(),
            rec.candidate.order().to_string(),
            rec.candidate.to_string(),
        ];
        let mut cells = 0;
        if let Some(p) = rec.path {
            for pt in &p.points {
                let v = pt.value();
                row.push(format!("{}", v.x));
                row.push(format!("{}", v.y));
                cells += 2;
            }
        }
        row.extend(std::iter::repeat_n(String::new(), 2 * max_points - cells));
        match rec.path {
            Some(p) => row.push(format!("{:e}", p.residual_loss.value())),
            None => row.push(String::new()),
        }
        row.push(format!("{}", rec.validity));
        match rec.path {
            Some(p) => row.push(format!("{}", p.length.value())),
            None => row.push(String::new()),
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
