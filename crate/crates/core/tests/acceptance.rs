//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the test
//! harness so the report is always printed.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use drt2d::optimize::{
    alpha_schedule, convergence_experiment, grid_search_optimum, optimize_tx, ExperimentConfig,
    OptimizerConfig,
};
use drt2d::paths::{enumerate_candidates, trace};
use drt2d::radio::{path_validity, power_map, received_power, GridSpec};
use drt2d::smoothing::{hard_sigmoid, sigmoid, smooth};
use drt2d::{
    random_scene, Dual, PathCandidate, Point2, RadioConfig, Rect, Scene, SmoothingConfig,
    SmoothingKind, Solver, SolverConfig, Vec2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    central_difference, central_wall_scene, exact_image_path, exact_validity, Exact, MARGIN,
};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn radio(kind: SmoothingKind, alpha: f64, max_order: usize) -> RadioConfig {
    RadioConfig::with_smoothing(SmoothingConfig::new(kind, alpha).unwrap(), max_order)
}

fn s(x: f64, kind: SmoothingKind, alpha: f64) -> f64 {
    smooth(
        Dual::constant(x),
        &SmoothingConfig::new(kind, alpha).unwrap(),
    )
    .value()
}

fn smoothing_exactness() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for kind in [SmoothingKind::Sigmoid, SmoothingKind::HardSigmoid] {
        for alpha in [1.0, 10.0, 100.0] {
            let half = 10.0 / alpha;
            let n = 10_000;
            let xs: Vec<f64> = (0..n)
                .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
                .collect();
            let ys: Vec<f64> = xs.iter().map(|&x| s(x, kind, alpha)).collect();
            let limits =
                s(-1e6 / alpha, kind, alpha) < 1e-6 && s(1e6 / alpha, kind, alpha) > 1.0 - 1e-6;
            let monotone = ys.windows(2).all(|w| {
                if kind == SmoothingKind::Sigmoid {
                    w[1] > w[0]
                } else {
                    w[1] >= w[0]
                }
            });
            let center = s(0.0, kind, alpha) == 0.5;
            let sym = xs
                .iter()
                .map(|&x| ((s(x, kind, alpha) - 0.5) - (0.5 - s(-x, kind, alpha))).abs())
                .fold(0.0, f64::max);
            let case_ok = limits && monotone && center && sym < 1e-12;
            if !case_ok {
                notes.push(format!(
                    "{kind} alpha={alpha}: limits={limits} monotone={monotone} center={center} sym={sym:e}"
                ));
            }
            ok &= case_ok;
        }
    }
    let e = std::f64::consts::E;
    let s11 = sigmoid(Dual::constant(1.0), 1.0).value();
    let s_err = (s11 - e / (e + 1.0)).abs();
    ok &= s_err < 1e-12;
    let mut sat = true;
    for alpha in [1.0, 10.0, 100.0] {
        let h = |x: f64| hard_sigmoid(Dual::constant(x), alpha).value();
        let edge = 3.0 / alpha;
        sat &= h(-edge) == 0.0 && h(edge) == 1.0;
        sat &= h(-edge * (1.0 - 1e-9)) > 0.0 && h(edge * (1.0 - 1e-9)) < 1.0;
        sat &= h(-2.0 * edge) == 0.0 && h(2.0 * edge) == 1.0;
    }
    ok &= sat;
    notes.push(format!(
        "|sigmoid(1;1) - e/(e+1)| = {s_err:e}; hard saturation at +-3/alpha: {sat}"
    ));
    (ok, notes.join("; "))
}

fn gradient_fidelity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (kind, alpha) in [
        (SmoothingKind::Sigmoid, 10.0),
        (SmoothingKind::HardSigmoid, 50.0),
    ] {
        let cfg = radio(kind, alpha, 1);
        for seed in 0..10u64 {
            let scene = random_scene(1000 + seed, 4, 1, Rect::unit_square());
            let rx = scene.rx[0];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut taken = 0;
            while taken < 10 {
                let tx = Rect::unit_square().sample(&mut rng);
                let clear = scene
                    .walls
                    .iter()
                    .all(|w| common::point_segment_distance(tx, w.a, w.b) > 1e-2)
                    && (tx - rx).norm() > 1e-2;
                if !clear {
                    continue;
                }
                let p = received_power(Point2::seeded(tx, 0, 2).unwrap(), rx.lift(), &scene, &cfg);
                if p.value() <= 0.0 {
                    continue;
                }
                let fd = central_difference(
                    |x| {
                        received_power(Point2::constant(x[0], x[1]), rx.lift(), &scene, &cfg)
                            .value()
                    },
                    &[tx.x, tx.y],
                    1e-6,
                );
                let g = p.grad();
                let num = (g[0] - fd[0]).hypot(g[1] - fd[1]);
                let den = fd[0].hypot(fd[1]);
                let rel = if den > 0.0 { num / den } else { num };
                worst = worst.max(rel);
                taken += 1;
                count += 1;
            }
        }
    }
    (
        worst < 1e-3,
        format!("{count} points (100 per smoothing kind), worst relative error {worst:e}"),
    )
}

fn solver_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut n1, mut n2) = (0, 0);
    let (mut worst_fpt, mut worst_mpt, mut worst_res): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let solver_cfg = SolverConfig::default();
    let mut seed = 0u64;
    while n1 + n2 < 200 {
        seed += 1;
        let scene = random_scene(5000 + seed, 3, 1, Rect::unit_square());
        let order = if n1 < 100 { 1 } else { 2 };
        let mut seq = vec![rng.gen_range(0..3usize)];
        if order == 2 {
            let mut w = rng.gen_range(0..3usize);
            while w == seq[0] {
                w = rng.gen_range(0..3usize);
            }
            seq.push(w);
        }
        let (tx, rx) = (scene.tx[0], scene.rx[0]);
        let segs: Vec<(Vec2, Vec2)> = seq
            .iter()
            .map(|&i| (scene.walls[i].a, scene.walls[i].b))
            .collect();
        let Some(oracle) = exact_image_path(tx, rx, &segs) else {
            continue;
        };
        let walls = PathCandidate { walls: seq.clone() }.resolve(&scene);
        let fpt = trace(Solver::Fermat, tx.lift(), rx.lift(), &walls, &solver_cfg).unwrap();
        let mpt = trace(Solver::MinPath, tx.lift(), rx.lift(), &walls, &solver_cfg).unwrap();
        for (i, o) in oracle.iter().enumerate() {
            worst_fpt = worst_fpt.max((fpt.points[i].value() - *o).norm());
            worst_mpt = worst_mpt.max((mpt.points[i].value() - *o).norm());
        }
        worst_res = worst_res.max(mpt.residual_loss.value());
        if order == 1 {
            n1 += 1;
        } else {
            n2 += 1;
        }
    }
    (
        worst_fpt < 1e-6 && worst_mpt < 1e-6 && worst_res < 1e-10,
        format!(
            "{n1} single + {n2} double reflections; max point error FPT {worst_fpt:e}, MPT {worst_mpt:e}; max MPT residual {worst_res:e}"
        ),
    )
}

fn hard_limit_oracle() -> Outcome {
    let mut report = Vec::new();
    let mut ok = true;
    for kind in [SmoothingKind::HardSigmoid, SmoothingKind::Sigmoid] {
        let cfg = SmoothingConfig::new(kind, 1e6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut counted, mut matched, mut excluded) = (0usize, 0usize, 0usize);
        let mut scene_seed = 0u64;
        let mut scene = random_scene(9000, 4, 1, Rect::unit_square());
        let mut candidates = enumerate_candidates(&scene, 2);
        while counted < 10_000 {
            if counted % 100 == 0 && counted / 100 != scene_seed as usize {
                scene_seed = (counted / 100) as u64;
                scene = random_scene(9000 + scene_seed, 4, 1, Rect::unit_square());
                candidates = enumerate_candidates(&scene, 2);
            }
            let tx = Rect::unit_square().sample(&mut rng);
            let rx = Rect::unit_square().sample(&mut rng);
            let mut exact = Vec::with_capacity(candidates.len());
            let mut ambiguous = false;
            for c in &candidates {
                match exact_validity(&scene, tx, rx, &c.walls, MARGIN) {
                    Exact::Ambiguous => {
                        ambiguous = true;
                        break;
                    }
                    e => exact.push(e == Exact::Valid),
                }
            }
            if ambiguous {
                excluded += 1;
                continue;
            }
            let agree = candidates.iter().zip(&exact).all(|(c, &e)| {
                let walls = c.resolve(&scene);
                let smooth_valid = match trace(
                    Solver::Image,
                    tx.lift(),
                    rx.lift(),
                    &walls,
                    &SolverConfig::default(),
                ) {
                    Ok(p) => cfg.to_bool(path_validity(&p, c, &scene, &cfg).value()),
                    Err(_) => false,
                };
                smooth_valid == e
            });
            counted += 1;
            matched += agree as usize;
        }
        let rate = matched as f64 / counted as f64;
        ok &= rate >= 0.999;
        report.push(format!(
            "{kind}: {matched}/{counted} probes agree ({:.4}%), {excluded} excluded near boundaries",
            100.0 * rate
        ));
    }
    (ok, report.join("; "))
}

fn transect_ratio(grid: &drt2d::PowerGrid, i: usize) -> f64 {
    let (_, dy) = grid.spec.cell_size();
    let mut worst: f64 = 0.0;
    for j in 0..grid.spec.ny - 1 {
        let jump = (grid.value(i, j + 1) - grid.value(i, j)).abs();
        let slope = grid.gradient(i, j)[1]
            .abs()
            .max(grid.gradient(i, j + 1)[1].abs());
        let r = if jump == 0.0 {
            0.0
        } else {
            jump / (slope * dy)
        };
        worst = worst.max(r);
    }
    worst
}

fn zero_gradient_shrinkage() -> Outcome {
    let scene = central_wall_scene();
    let tx = scene.tx[0];
    let spec = GridSpec::new(Rect::unit_square(), 128, 128).unwrap();
    let zero_fraction = |g: &drt2d::PowerGrid| {
        let z = g
            .gradients
            .iter()
            .filter(|d| d[0].hypot(d[1]) < 1e-9)
            .count();
        z as f64 / g.gradients.len() as f64
    };
    let soft = power_map(
        &scene,
        tx,
        &radio(SmoothingKind::HardSigmoid, 50.0, 1),
        spec,
    );
    let hard = power_map(&scene, tx, &radio(SmoothingKind::HardSigmoid, 1e6, 1), spec);
    let (zs, zh) = (zero_fraction(&soft), zero_fraction(&hard));
    let columns: Vec<usize> = [0.7, 0.8, 0.9]
        .iter()
        .map(|x| (x * 128.0) as usize)
        .collect();
    let rs: Vec<f64> = columns.iter().map(|&i| transect_ratio(&soft, i)).collect();
    let rh: Vec<f64> = columns.iter().map(|&i| transect_ratio(&hard, i)).collect();
    let ok = zs < zh && rs.iter().all(|r| *r < 10.0) && rh.iter().all(|r| *r > 10.0);
    (
        ok,
        format!(
            "zero-gradient fraction {zs:.4} (alpha=50) vs {zh:.4} (alpha=1e6); worst jump/(Lipschitz*step) on transects x=0.7,0.8,0.9: alpha=50 {rs:.3?}, alpha=1e6 {rh:.3?}"
        ),
    )
}

fn annealed_optimization() -> Outcome {
    let mut ok_range = true;
    let mut ok_dominate = true;
    let mut ok_cond = true;
    let mut lines = Vec::new();
    for n_rx in [2, 3, 4] {
        let cfg = ExperimentConfig {
            n_rx,
            ..ExperimentConfig::default()
        };
        let r = convergence_experiment(&cfg).unwrap().summary;
        ok_range &= (1.3..=2.5).contains(&r.ratio);
        ok_dominate &= r.annealed_rate > r.baseline_rate;
        ok_cond &= r.conditional_rate >= 0.9;
        lines.push(format!(
            "n_rx={n_rx}: annealed {:.2}, baseline {:.2}, ratio {:.3}, P(a|b) {:.3}",
            r.annealed_rate, r.baseline_rate, r.ratio, r.conditional_rate
        ));
    }
    (
        (ok_range || ok_dominate) && ok_cond,
        format!(
            "{}; ratio in [1.3, 2.5]: {ok_range}, annealed dominates: {ok_dominate}",
            lines.join("; ")
        ),
    )
}

fn schedule_reproduction() -> Outcome {
    let a = alpha_schedule(1.0, 100.0, 100).unwrap();
    let expect = [(20, 2.54), (40, 6.43), (60, 16.30), (80, 41.32)];
    let ok = a.len() == 100
        && a[0] == 1.0
        && a[99] == 100.0
        && expect.iter().all(|&(k, v)| (a[k] - v).abs() <= 0.01);
    (
        ok,
        format!(
            "endpoints {} and {}, samples {:.4} {:.4} {:.4} {:.4}",
            a[0], a[99], a[20], a[40], a[60], a[80]
        ),
    )
}

fn empty_scene_optimum() -> Outcome {
    let scene = Scene::empty(vec![], vec![Vec2::new(0.3, 0.5), Vec2::new(0.7, 0.5)]);
    let cfg = radio(SmoothingKind::HardSigmoid, 100.0, 0);
    let (best, best_f) = grid_search_optimum(&scene, &cfg, Rect::unit_square(), 101).unwrap();
    let opt = OptimizerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut close, mut within_value) = (0, 0);
    let n = 100;
    for _ in 0..n {
        let init = Rect::unit_square().sample(&mut rng);
        let t = optimize_tx(&scene, init, &opt, &cfg).unwrap();
        close += ((t.final_tx - best).norm() <= 1e-2) as usize;
        within_value += (t.final_objective >= 0.99 * best_f) as usize;
    }
    let ok = (best - Vec2::new(0.5, 0.5)).norm() < 1e-12 && close * 100 >= 95 * n;
    (
        ok,
        format!(
            "grid argmax ({:.3}, {:.3}); {close}/{n} inits end within 1e-2 of it, {within_value}/{n} within 1% of its value",
            best.x, best.y
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("smoothing exactness", smoothing_exactness),
        ("gradient fidelity", gradient_fidelity),
        ("solver equivalence", solver_equivalence),
        ("hard-limit oracle", hard_limit_oracle),
        ("zero-gradient shrinkage", zero_gradient_shrinkage),
        ("annealed optimization", annealed_optimization),
        ("schedule reproduction", schedule_reproduction),
        ("empty-scene optimum", empty_scene_optimum),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(_) => (false, "panicked".to_string()),
        };
        failures += (!ok) as usize;
        println!(
            "criterion {} {name}: {} ({detail}) [{:.1}s]",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
