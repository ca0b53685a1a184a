//! Independent oracles shared by the integration and acceptance tests. They
//! work on plain `f64` geometry and do not call the library's path or
//! validity code.

#![allow(dead_code)]

use drt2d::{Scene, Vec2};

pub const MARGIN: f64 = 1e-3;

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    Vec2::new(a.x - b.x, a.y - b.y)
}

fn len(a: Vec2) -> f64 {
    a.x.hypot(a.y)
}

pub fn mirror(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let d = sub(b, a);
    let l2 = d.x * d.x + d.y * d.y;
    let ap = sub(p, a);
    let k = (ap.x * d.x + ap.y * d.y) / l2;
    let foot = Vec2::new(a.x + k * d.x, a.y + k * d.y);
    Vec2::new(2.0 * foot.x - p.x, 2.0 * foot.y - p.y)
}

/// Crossing of segment `p -> q` with segment `a -> b` as `(t, u)` along
/// each, or `None` when parallel.
pub fn crossing(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> Option<(f64, f64)> {
    let r = sub(q, p);
    let s = sub(b, a);
    let den = cross(r, s);
    if den.abs() <= 1e-12 * len(r) * len(s) {
        return None;
    }
    let ap = sub(a, p);
    Some((cross(ap, s) / den, cross(ap, r) / den))
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = sub(b, a);
    let t = (((p.x - a.x) * d.x + (p.y - a.y) * d.y) / (d.x * d.x + d.y * d.y)).clamp(0.0, 1.0);
    len(sub(p, Vec2::new(a.x + t * d.x, a.y + t * d.y)))
}

/// Exact image-method interaction points, or `None` when the specular path
/// does not exist (a backward crossing falls outside its segment or wall).
pub fn exact_image_path(tx: Vec2, rx: Vec2, walls: &[(Vec2, Vec2)]) -> Option<Vec<Vec2>> {
    let k = walls.len();
    let mut images = vec![tx];
    for &(a, b) in walls {
        images.push(mirror(*images.last().unwrap(), a, b));
    }
    let mut pts = vec![rx; k + 2];
    pts[0] = tx;
    let mut cur = rx;
    for i in (0..k).rev() {
        let (a, b) = walls[i];
        let (t, u) = crossing(cur, images[i + 1], a, b)?;
        if !(t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0) {
            return None;
        }
        cur = Vec2::new(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y));
        pts[i + 1] = cur;
    }
    Some(pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exact {
    Valid,
    Invalid,
    /// Some decision quantity lies within the margin of its threshold.
    Ambiguous,
}

fn near(v: f64, scale: f64, margin: f64) -> bool {
    (v * scale).abs() < margin || ((1.0 - v) * scale).abs() < margin
}

fn inside(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

/// Hard validity of the specular path through `seq` (wall indices), with
/// every on-segment and occlusion decision made exactly. Decisions closer
/// than `margin` meters to their threshold make the answer ambiguous.
pub fn exact_validity(scene: &Scene, tx: Vec2, rx: Vec2, seq: &[usize], margin: f64) -> Exact {
    let walls: Vec<(Vec2, Vec2)> = scene.walls.iter().map(|w| (w.a, w.b)).collect();
    for &(a, b) in &walls {
        if point_segment_distance(tx, a, b) < margin || point_segment_distance(rx, a, b) < margin {
            return Exact::Ambiguous;
        }
    }
    let k = seq.len();
    let mut images = vec![tx];
    for &w in seq {
        let (a, b) = walls[w];
        images.push(mirror(*images.last().unwrap(), a, b));
    }
    let mut pts = vec![rx; k + 2];
    pts[0] = tx;
    let mut cur = rx;
    for i in (0..k).rev() {
        let (a, b) = walls[seq[i]];
        let target = images[i + 1];
        let Some((t, u)) = crossing(cur, target, a, b) else {
            return Exact::Ambiguous;
        };
        let (lp, lw) = (len(sub(target, cur)), len(sub(b, a)));
        if near(t, lp, margin) || near(u, lw, margin) {
            return Exact::Ambiguous;
        }
        if !inside(t) || !inside(u) {
            return Exact::Invalid;
        }
        cur = Vec2::new(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y));
        pts[i + 1] = cur;
    }
    let mut ambiguous = false;
    for s in 0..=k {
        let (p, q) = (pts[s], pts[s + 1]);
        let lp = len(sub(q, p));
        for (w, &(a, b)) in walls.iter().enumerate() {
            if (s > 0 && seq[s - 1] == w) || (s < k && seq[s] == w) {
                continue;
            }
            let Some((t, u)) = crossing(p, q, a, b) else {
                continue;
            };
            let lw = len(sub(b, a));
            let (nt, nu) = (near(t, lp, margin), near(u, lw, margin));
            let (it, iu) = (inside(t), inside(u));
            if (nt && (iu || nu)) || (nu && (it || nt)) {
                ambiguous = true;
            } else if it && iu {
                return Exact::Invalid;
            }
        }
    }
    if ambiguous {
        Exact::Ambiguous
    } else {
        Exact::Valid
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// One vertical wall in the middle of the unit square with the transmitter
/// to its left.
pub fn central_wall_scene() -> Scene {
    Scene::new(
        vec![(Vec2::new(0.5, 0.3), Vec2::new(0.5, 0.7))],
        vec![Vec2::new(0.2, 0.5)],
        vec![],
        None,
    )
    .expect("valid scene")
}
