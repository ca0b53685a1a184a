//! 2D scene model and exact geometric primitives.
//!
//! Scene data (walls, nodes) is stored in plain `f64` coordinates ([`Vec2`]).
//! Anything that may carry derivatives, such as traced interaction points,
//! uses [`Point2`], whose components are [`Dual`]s.
//!
//! Walls are thin segments that reflect from both sides.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Dual;

/// Relative determinant threshold below which two lines are treated as parallel.
pub const PARALLEL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Lifts to a constant [`Point2`].
    pub fn lift(self) -> Point2 {
        Point2::new(Dual::constant(self.x), Dual::constant(self.y))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A point (or free vector) whose coordinates may carry gradients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: Dual,
    pub y: Dual,
}

impl Point2 {
    pub fn new(x: Dual, y: Dual) -> Self {
        Point2 { x, y }
    }

    pub fn constant(x: f64, y: f64) -> Self {
        Vec2::new(x, y).lift()
    }

    /// Seeds both coordinates as parameters `offset` and `offset + 1` of `dim`.
    pub fn seeded(v: Vec2, offset: usize, dim: usize) -> Result<Self, crate::autodiff::AdError> {
        Ok(Point2::new(
            Dual::variable(v.x, offset, dim)?,
            Dual::variable(v.y, offset + 1, dim)?,
        ))
    }

    pub fn value(&self) -> Vec2 {
        Vec2::new(self.x.value(), self.y.value())
    }

    pub fn detach(&self) -> Point2 {
        self.value().lift()
    }

    pub fn dot(self, o: Point2) -> Dual {
        self.x * o.x + self.y * o.y
    }

    pub fn dot_v(self, o: Vec2) -> Dual {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> Dual {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> Dual {
        self.dot(self)
    }

    pub fn norm(self) -> Dual {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, k: Dual) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }

    /// Unit vector in the direction of `self`; the zero vector maps to zero.
    pub fn unit(self) -> Point2 {
        let n = self.norm();
        if n.value() == 0.0 {
            Point2::default()
        } else {
            self.scale(n.recip())
        }
    }

    pub fn distance(self, o: Point2) -> Dual {
        (o - self).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Add<Vec2> for Point2 {
    type Output = Point2;
    fn add(self, o: Vec2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub<Vec2> for Point2 {
    type Output = Point2;
    fn sub(self, o: Vec2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn unit_square() -> Self {
        Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec2 {
        Vec2::new(
            rng.gen_range(self.min.x..=self.max.x),
            rng.gen_range(self.min.y..=self.max.y),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub a: Vec2,
    pub b: Vec2,
    dir: Vec2,
    normal: Vec2,
    length: f64,
}

impl Wall {
    /// Builds a wall; `None` for a zero-length or non-finite segment.
    pub fn new(a: Vec2, b: Vec2) -> Option<Self> {
        let d = b - a;
        let length = d.norm();
        if !(length > 0.0 && length.is_finite() && a.is_finite() && b.is_finite()) {
            return None;
        }
        let dir = d * (1.0 / length);
        Some(Wall {
            a,
            b,
            dir,
            normal: Vec2::new(-dir.y, dir.x),
            length,
        })
    }

    /// `b - a`.
    pub fn span(&self) -> Vec2 {
        self.b - self.a
    }

    pub fn direction(&self) -> Vec2 {
        self.dir
    }

    /// Left-hand unit normal of `b - a`.
    pub fn normal(&self) -> Vec2 {
        self.normal
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Signed distance from the infinite line through the wall.
    pub fn signed_distance(&self, p: Point2) -> Dual {
        (p - self.a).dot_v(self.normal)
    }

    /// Wall parameter of the orthogonal projection of `p`.
    pub fn project(&self, p: Point2) -> Dual {
        (p - self.a)
            .dot_v(self.span())
            .scale(1.0 / (self.length * self.length))
    }
}

/// `a + t (b - a)`; `t` is not restricted to `[0, 1]`.
pub fn point_on_wall(w: &Wall, t: Dual) -> Point2 {
    let s = w.span();
    Point2::new(t * s.x + w.a.x, t * s.y + w.a.y)
}

/// Crossing of the line through `p`, `q` with the line through `w`.
///
/// Returns `(t, u)` with `p + t (q - p) = a + u (b - a)`, or `None` when the
/// lines are parallel to within [`PARALLEL_EPS`] relative to their lengths.
pub fn segment_intersection(p: Point2, q: Point2, w: &Wall) -> Option<(Dual, Dual)> {
    let r = q - p;
    let s = w.span();
    let denom = r.x * s.y - r.y * s.x;
    let scale = r.value().norm() * w.length();
    if !(denom.value().abs() > PARALLEL_EPS * scale) {
        return None;
    }
    let ap = Point2::constant(w.a.x, w.a.y) - p;
    let inv = denom.recip();
    let t = (ap.x * s.y - ap.y * s.x) * inv;
    let u = ap.cross(r) * inv;
    Some((t, u))
}

/// Reflection of `p` across the infinite line through `w`.
pub fn mirror_point(p: Point2, w: &Wall) -> Point2 {
    let n = w.normal();
    let d = w.signed_distance(p).scale(2.0);
    Point2::new(p.x - d * n.x, p.y - d * n.y)
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("reflect_direction expects unit vectors (|d| = {d_norm}, |n| = {n_norm})")]
pub struct NonUnitVector {
    pub d_norm: f64,
    pub n_norm: f64,
}

/// Mirror-law reflection `d - 2 (d . n) n` without a unit-length check.
pub fn reflect(d: Point2, n: Vec2) -> Point2 {
    let k = d.dot_v(n).scale(2.0);
    Point2::new(d.x - k * n.x, d.y - k * n.y)
}

/// Mirror-law reflection of unit direction `d` about unit normal `n`.
pub fn reflect_direction(d: Point2, n: Vec2) -> Result<Point2, NonUnitVector> {
    let d_norm = d.value().norm();
    let n_norm = n.norm();
    if (d_norm - 1.0).abs() > 1e-9 || (n_norm - 1.0).abs() > 1e-9 {
        return Err(NonUnitVector { d_norm, n_norm });
    }
    Ok(reflect(d, n))
}

/// Symmetric wall-to-wall visibility with a false diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Visibility {
    n: usize,
    cells: Vec<bool>,
}

impl Visibility {
    pub fn all_visible(n: usize) -> Self {
        let mut cells = vec![true; n * n];
        for i in 0..n {
            cells[i * n + i] = false;
        }
        Visibility { n, cells }
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self, SceneError> {
        let mut cells = vec![false; n * n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            if i >= n || j >= n {
                return Err(SceneError::Invalid(format!(
                    "visibility[{k}]: wall index out of range ({i}, {j}) for {n} walls"
                )));
            }
            if i == j {
                return Err(SceneError::Invalid(format!(
                    "visibility[{k}]: a wall cannot be paired with itself ({i})"
                )));
            }
            cells[i * n + j] = true;
            cells[j * n + i] = true;
        }
        Ok(Visibility { n, cells })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn visible(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    /// Visible pairs with `i < j`, in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.visible(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub walls: Vec<Wall>,
    pub tx: Vec<Vec2>,
    pub rx: Vec<Vec2>,
    pub visibility: Visibility,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("degenerate wall at walls[{0}]: endpoints coincide")]
    DegenerateWall(usize),
    #[error("non-finite coordinate at {0}")]
    NonFinite(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDocument {
    walls: Vec<[[f64; 2]; 2]>,
    tx: Vec<[f64; 2]>,
    rx: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    visibility: Option<Vec<[usize; 2]>>,
}

impl Scene {
    /// Validates and builds a scene; visibility defaults to all pairs.
    pub fn new(
        walls: Vec<(Vec2, Vec2)>,
        tx: Vec<Vec2>,
        rx: Vec<Vec2>,
        visibility: Option<Visibility>,
    ) -> Result<Self, SceneError> {
        let mut built = Vec::with_capacity(walls.len());
        for (i, (a, b)) in walls.into_iter().enumerate() {
            for (end, p) in [("0", a), ("1", b)] {
                if !p.is_finite() {
                    return Err(SceneError::NonFinite(format!("walls[{i}][{end}]")));
                }
            }
            built.push(Wall::new(a, b).ok_or(SceneError::DegenerateWall(i))?);
        }
        for (name, nodes) in [("tx", &tx), ("rx", &rx)] {
            if let Some(i) = nodes.iter().position(|p| !p.is_finite()) {
                return Err(SceneError::NonFinite(format!("{name}[{i}]")));
            }
        }
        let visibility = match visibility {
            Some(v) if v.len() != built.len() => {
                return Err(SceneError::Invalid(format!(
                    "visibility covers {} walls, scene has {}",
                    v.len(),
                    built.len()
                )))
            }
            Some(v) => v,
            None => Visibility::all_visible(built.len()),
        };
        Ok(Scene {
            walls: built,
            tx,
            rx,
            visibility,
        })
    }

    pub fn empty(tx: Vec<Vec2>, rx: Vec<Vec2>) -> Self {
        Scene::new(Vec::new(), tx, rx, None).expect("empty scene is valid")
    }

    /// Same walls and transmitters, different receivers.
    pub fn with_receivers(&self, rx: Vec<Vec2>) -> Self {
        Scene { rx, ..self.clone() }
    }
}

/// Parses a scene document (JSON).
pub fn load_scene(text: &str) -> Result<Scene, SceneError> {
    let doc: SceneDocument = serde_json::from_str(text)?;
    let walls = doc
        .walls
        .iter()
        .map(|[a, b]| (Vec2::new(a[0], a[1]), Vec2::new(b[0], b[1])))
        .collect::<Vec<_>>();
    let visibility = match &doc.visibility {
        Some(pairs) => {
            let pairs = pairs.iter().map(|[i, j]| (*i, *j)).collect::<Vec<_>>();
            Some(Visibility::from_pairs(walls.len(), &pairs)?)
        }
        None => None,
    };
    let pt = |p: &[f64; 2]| Vec2::new(p[0], p[1]);
    Scene::new(
        walls,
        doc.tx.iter().map(pt).collect(),
        doc.rx.iter().map(pt).collect(),
        visibility,
    )
}

/// Serializes a scene to its JSON document form. The visibility list is
/// omitted when it equals the default.
pub fn serialize_scene(scene: &Scene) -> String {
    let n = scene.walls.len();
    let visibility = if scene.visibility == Visibility::all_visible(n) {
        None
    } else {
        Some(
            scene
                .visibility
                .pairs()
                .into_iter()
                .map(|(i, j)| [i, j])
                .collect(),
        )
    };
    let doc = SceneDocument {
        walls: scene
            .walls
            .iter()
            .map(|w| [[w.a.x, w.a.y], [w.b.x, w.b.y]])
            .collect(),
        tx: scene.tx.iter().map(|p| [p.x, p.y]).collect(),
        rx: scene.rx.iter().map(|p| [p.x, p.y]).collect(),
        visibility,
    };
    serde_json::to_string_pretty(&doc).expect("scene documents always serialize")
}

/// Euclidean distance from `p` to the closed segment of `w`.
pub fn distance_to_wall(p: Vec2, w: &Wall) -> f64 {
    let t = ((p - w.a).dot(w.span()) / (w.length() * w.length())).clamp(0.0, 1.0);
    (p - (w.a + w.span() * t)).norm()
}

/// Minimum distance kept between sampled nodes and any wall.
pub const NODE_WALL_CLEARANCE: f64 = 1e-3;

/// Seeded random scene inside `bounds`: `n_walls` walls whose endpoints are
/// uniform in `bounds` with length in `[0.1, 0.5]` of the bounds diagonal,
/// one transmitter and `n_rx` receivers kept off the walls.
pub fn random_scene(seed: u64, n_walls: usize, n_rx: usize, bounds: Rect) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = bounds.diagonal();
    let (lo, hi) = (0.1 * diag, 0.5 * diag);
    let mut walls = Vec::with_capacity(n_walls);
    while walls.len() < n_walls {
        let a = bounds.sample(&mut rng);
        let b = bounds.sample(&mut rng);
        let len = (b - a).norm();
        if len >= lo && len <= hi {
            walls.push(Wall::new(a, b).expect("length checked"));
        }
    }
    let node = |rng: &mut ChaCha8Rng| loop {
        let p = bounds.sample(rng);
        if walls
            .iter()
            .all(|w| distance_to_wall(p, w) > NODE_WALL_CLEARANCE)
        {
            return p;
        }
    };
    let tx = vec![node(&mut rng)];
    let rx = (0..n_rx).map(|_| node(&mut rng)).collect();
    Scene {
        visibility: Visibility::all_visible(walls.len()),
        walls,
        tx,
        rx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall(ax: f64, ay: f64, bx: f64, by: f64) -> Wall {
        Wall::new(Vec2::new(ax, ay), Vec2::new(bx, by)).unwrap()
    }

    fn close(p: Point2, x: f64, y: f64) -> bool {
        (p.x.value() - x).abs() < 1e-12 && (p.y.value() - y).abs() < 1e-12
    }

    #[test]
    fn wall_frame() {
        let w = wall(0.0, 0.0, 2.0, 0.0);
        assert_eq!(w.length(), 2.0);
        assert_eq!(w.direction(), Vec2::new(1.0, 0.0));
        assert_eq!(w.normal(), Vec2::new(0.0, 1.0));
        assert!(Wall::new(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)).is_none());
    }

    #[test]
    fn points_on_wall() {
        let w = wall(0.0, 0.0, 1.0, 0.0);
        assert!(close(point_on_wall(&w, Dual::constant(0.0)), 0.0, 0.0));
        assert!(close(point_on_wall(&w, Dual::constant(1.0)), 1.0, 0.0));
        assert!(close(point_on_wall(&w, Dual::constant(0.5)), 0.5, 0.0));
        assert!(close(point_on_wall(&w, Dual::constant(2.0)), 2.0, 0.0));
    }

    #[test]
    fn intersections() {
        let (t, u) = segment_intersection(
            Point2::constant(0.0, 0.0),
            Point2::constant(2.0, 2.0),
            &wall(0.0, 2.0, 2.0, 0.0),
        )
        .unwrap();
        assert_eq!((t.value(), u.value()), (0.5, 0.5));
        assert!(segment_intersection(
            Point2::constant(0.0, 0.0),
            Point2::constant(1.0, 0.0),
            &wall(0.0, 1.0, 1.0, 1.0),
        )
        .is_none());
        let (t, u) = segment_intersection(
            Point2::constant(0.0, -1.0),
            Point2::constant(0.0, 1.0),
            &wall(-1.0, 0.0, 1.0, 0.0),
        )
        .unwrap();
        assert_eq!((t.value(), u.value()), (0.5, 0.5));
    }

    #[test]
    fn mirrors() {
        let xaxis = wall(-1.0, 0.0, 1.0, 0.0);
        assert!(close(
            mirror_point(Point2::constant(0.0, 1.0), &xaxis),
            0.0,
            -1.0
        ));
        assert!(close(
            mirror_point(Point2::constant(0.3, 0.0), &xaxis),
            0.3,
            0.0
        ));
        let yaxis = wall(0.0, -1.0, 0.0, 1.0);
        assert!(close(
            mirror_point(Point2::constant(2.0, 3.0), &yaxis),
            -2.0,
            3.0
        ));
    }

    #[test]
    fn reflections() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let n = Vec2::new(0.0, 1.0);
        let r = reflect_direction(Point2::constant(s, -s), n).unwrap();
        assert!(close(r, s, s));
        let r = reflect_direction(Point2::constant(1.0, 0.0), n).unwrap();
        assert!(close(r, 1.0, 0.0));
        let r = reflect_direction(Point2::constant(0.0, -1.0), n).unwrap();
        assert!(close(r, 0.0, 1.0));
        assert!(reflect_direction(Point2::constant(2.0, 0.0), n).is_err());
        assert!(reflect_direction(Point2::constant(1.0, 0.0), Vec2::new(0.0, 0.5)).is_err());
    }

    #[test]
    fn load_minimal_scene() {
        let s = load_scene(r#"{"walls": [[[0,0],[1,0]]], "tx": [[0,1]], "rx": [[1,1]]}"#).unwrap();
        assert_eq!(s.walls.len(), 1);
        assert_eq!(s.tx, vec![Vec2::new(0.0, 1.0)]);
        assert!(!s.visibility.visible(0, 0));
    }

    #[test]
    fn load_errors() {
        let e =
            load_scene(r#"{"walls": [[[0,0],[0,0]]], "tx": [[0,1]], "rx": [[1,1]]}"#).unwrap_err();
        assert!(e.to_string().contains("degenerate wall"), "{e}");
        let e = load_scene(r#"{"walls": [], "tx": [[0,1]]}"#).unwrap_err();
        assert!(e.to_string().contains("missing field"), "{e}");
        let e = load_scene(r#"{"walls": [], "tx": [], "rx": [], "extra": 1}"#).unwrap_err();
        assert!(e.to_string().contains("unknown field"), "{e}");
        let e = load_scene("{\"walls\": [],\n \"tx\": [[0, 1e999]], \"rx\": []}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e =
            load_scene(r#"{"walls": [[[0,0],[1,0]]], "tx": [], "rx": [], "visibility": [[0, 3]]}"#)
                .unwrap_err();
        assert!(e.to_string().contains("visibility[0]"), "{e}");
    }

    #[test]
    fn explicit_visibility() {
        let s = load_scene(
            r#"{"walls": [[[0,0],[1,0]], [[0,1],[1,1]], [[2,0],[2,1]]],
                "tx": [], "rx": [], "visibility": [[0, 2]]}"#,
        )
        .unwrap();
        assert!(s.visibility.visible(0, 2) && s.visibility.visible(2, 0));
        assert!(!s.visibility.visible(0, 1));
        let back = load_scene(&serialize_scene(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn random_scenes() {
        let b = Rect::unit_square();
        assert_eq!(random_scene(7, 3, 2, b), random_scene(7, 3, 2, b));
        assert_ne!(random_scene(7, 3, 2, b), random_scene(8, 3, 2, b));
        assert!(random_scene(1, 0, 1, b).walls.is_empty());
        let s = random_scene(3, 5, 4, b);
        assert_eq!(s.rx.len(), 4);
        let d = b.diagonal();
        for w in &s.walls {
            assert!(w.length() >= 0.1 * d && w.length() <= 0.5 * d);
            assert!(b.contains(w.a) && b.contains(w.b));
        }
        for p in s.rx.iter().chain(&s.tx) {
            assert!(b.contains(*p));
            assert!(s
                .walls
                .iter()
                .all(|w| distance_to_wall(*p, w) > NODE_WALL_CLEARANCE));
        }
    }
}
