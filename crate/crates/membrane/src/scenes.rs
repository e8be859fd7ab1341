//! Canonical test scenes and random scene generation.
//!
//! Scene B realizes the seven-domain nesting used throughout the test suite:
//! three rank-one domains `D1, D2, D3`, two of rank two (`D4, D5`), one of
//! rank three (`D6`) and one of rank four (`D7`), all with unit permeability
//! exponent.

use crate::geometry::{Domain, Point, Scene, Shape};
use num::rational::Rational64;
use rand::Rng;

fn interval(id: &str, a: f64, b: f64, exp: Rational64) -> Domain {
    Domain {
        id: id.to_string(),
        shape: Shape::Interval { a, b },
        permeability_exponent: exp,
    }
}

fn ball(id: &str, cx: f64, cy: f64, r: f64, exp: Rational64) -> Domain {
    Domain {
        id: id.to_string(),
        shape: Shape::Ball {
            center: Point::d2(cx, cy),
            radius: r,
        },
        permeability_exponent: exp,
    }
}

fn one() -> Rational64 {
    Rational64::from_integer(1)
}

/// 1D, single interval (0.3, 0.7), unit exponent.
pub fn scene_a() -> Scene {
    Scene::new(1, 1.0, vec![interval("D1", 0.3, 0.7, one())]).unwrap()
}

/// 1D realization of the seven-domain nested example.
pub fn scene_b() -> Scene {
    Scene::new(
        1,
        1.0,
        vec![
            interval("D1", 0.20, 0.30, one()),
            interval("D2", 0.50, 0.60, one()),
            interval("D3", 0.70, 0.90, one()),
            interval("D4", 0.15, 0.35, one()),
            interval("D5", 0.45, 0.65, one()),
            interval("D6", 0.10, 0.40, one()),
            interval("D7", 0.05, 0.95, one()),
        ],
    )
    .unwrap()
}

/// 2D, single ball of radius 0.25.
pub fn scene_c() -> Scene {
    Scene::new(2, 1.0, vec![ball("D1", 0.5, 0.5, 0.25, one())]).unwrap()
}

/// 2D, ball of radius 0.45 containing three unequal disjoint balls.
pub fn scene_d() -> Scene {
    Scene::new(
        2,
        1.0,
        vec![
            ball("T1", 0.32, 0.42, 0.10, one()),
            ball("T2", 0.65, 0.38, 0.08, one()),
            ball("T3", 0.52, 0.68, 0.12, one()),
            ball("D", 0.50, 0.50, 0.45, one()),
        ],
    )
    .unwrap()
}

pub fn scene_by_name(name: &str) -> Option<Scene> {
    match name {
        "A" | "a" | "scene-a" => Some(scene_a()),
        "B" | "b" | "scene-b" => Some(scene_b()),
        "C" | "c" | "scene-c" => Some(scene_c()),
        "D" | "d" | "scene-d" => Some(scene_d()),
        _ => None,
    }
}

/// Random valid 1D scene with up to `max_domains` intervals.
///
/// With `distinct_dyadic_exponents` the permeability exponents are distinct
/// powers of two, which makes every pair of chain orders comparable (no two
/// subset sums coincide), so classification and prediction never hit ties.
pub fn random_scene_1d<R: Rng>(rng: &mut R, max_domains: usize, distinct_dyadic_exponents: bool) -> Scene {
    let n = rng.gen_range(1..=max_domains.max(1));
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    // Recursively split: each new interval is nested inside an existing one or
    // placed in free space; rejection keeps separations comfortable.
    let mut attempts = 0;
    while intervals.len() < n && attempts < 200 {
        attempts += 1;
        let nest = !intervals.is_empty() && rng.gen_bool(0.6);
        let (lo, hi) = if nest {
            let (a, b) = intervals[rng.gen_range(0..intervals.len())];
            (a, b)
        } else {
            (0.0, 1.0)
        };
        let span = hi - lo;
        if span < 0.1 {
            continue;
        }
        let len = span * rng.gen_range(0.25..0.6);
        let a = lo + rng.gen_range(0.05..(span - len - 0.04).max(0.051));
        let b = a + len;
        if b >= hi - 0.02 {
            continue;
        }
        // Must nest or stay clear of every existing interval.
        let ok = intervals.iter().all(|&(x, y)| {
            let sep = 0.015;
            (a > x + sep && b < y - sep)
                || (x > a + sep && y < b - sep)
                || (b < x - sep)
                || (a > y + sep)
        });
        if ok && b < 0.99 {
            intervals.push((a, b));
        }
    }
    let domains: Vec<Domain> = intervals
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let exp = if distinct_dyadic_exponents {
                Rational64::new(1, 1 << (i % 8))
            } else {
                one()
            };
            interval(&format!("D{}", i + 1), a, b, exp)
        })
        .collect();
    Scene::new(1, 1.0, domains).unwrap()
}

/// Random valid 2D scene with nested/disjoint balls.
pub fn random_scene_2d<R: Rng>(rng: &mut R, max_domains: usize) -> Scene {
    let n = rng.gen_range(1..=max_domains.max(1));
    let mut balls: Vec<(f64, f64, f64)> = Vec::new();
    let mut attempts = 0;
    while balls.len() < n && attempts < 300 {
        attempts += 1;
        let nest = !balls.is_empty() && rng.gen_bool(0.5);
        let cand = if nest {
            let (cx, cy, r) = balls[rng.gen_range(0..balls.len())];
            let rr = r * rng.gen_range(0.3..0.6);
            let off = rng.gen_range(0.0..(r - rr - 0.02).max(1e-3));
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            (cx + off * th.cos(), cy + off * th.sin(), rr)
        } else {
            (
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.05..0.2),
            )
        };
        let (cx, cy, r) = cand;
        let ok = balls.iter().all(|&(x, y, s)| {
            let dx = crate::geometry::circle_dist(cx, x, 1.0);
            let dy = crate::geometry::circle_dist(cy, y, 1.0);
            let d = dx.hypot(dy);
            d > r + s + 0.02 || d + r < s - 0.02 || d + s < r - 0.02
        });
        if ok && r > 0.03 {
            balls.push((cx, cy, r));
        }
    }
    let domains: Vec<Domain> = balls
        .iter()
        .enumerate()
        .map(|(i, &(cx, cy, r))| ball(&format!("D{}", i + 1), cx, cy, r, one()))
        .collect();
    Scene::new(2, 1.0, domains).unwrap()
}
