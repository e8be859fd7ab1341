//! Near-membrane excursion statistics.
//!
//! From a start on a membrane, the process exits a collar of width `w`
//! around the start either outward or inward. The outward probability is of
//! order the membrane permeability (the two escape routes have equal
//! difficulty, so the asymmetric kick decides), the mean exit time is of
//! order `w^2`, and the exit location stays close to the start. Started deep
//! inside a trapping domain, the first outward passage through the collar
//! surface takes a time of order `w/eps` and lands approximately uniformly
//! on the membrane.
//!
//! The collar is the local tube around the start point. In 1D it is the
//! interval of half-width `w` centred on the starting membrane point (the
//! global equidistant surfaces can be empty when `w` exceeds the domain
//! half-length, while the local tube keeps the renewal structure intact); in
//! 2D it is the band of points within distance `w` of the membrane.

use super::engine::{Hit, Layout, Refine, SimulateError, StepEvent, Walker};
use super::streams::particle_rng;
use super::x_process::XSimConfig;
use crate::geometry::{circle_dist, signed_distance, ContainmentTree, Node, Point, Scene, Shape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Collar exponents: the collar width is `eps^alpha`, and exit locations are
/// compared against a tangential window `eps^beta`.
#[derive(Debug, Clone, Copy)]
pub struct CollarSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl CollarSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SimulateError> {
        if !(0.0 < beta && beta < alpha && alpha < 1.0) {
            return Err(SimulateError::InvalidConfig(format!(
                "collar exponents must satisfy 0 < beta < alpha < 1, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(CollarSpec { alpha, beta })
    }
}

/// One collar-exit sample.
#[derive(Debug, Clone, Copy)]
pub struct CollarExit {
    pub outward: bool,
    pub time: f64,
    /// Tangential displacement along the membrane between start and exit.
    pub dispersion: f64,
    /// Exit location parameter: circle coordinate in 1D, angle in 2D.
    pub location: f64,
}

/// Aggregate over membrane-start excursions.
#[derive(Debug, Clone)]
pub struct ExcursionSummary {
    pub epsilon: f64,
    pub collar_width: f64,
    pub outward_probability: f64,
    pub mean_exit_time: f64,
    /// Fraction of exits whose tangential dispersion stays within `eps^beta`
    /// (trivially 1 in 1D, where membranes are points).
    pub within_beta_window: f64,
    pub samples: Vec<CollarExit>,
}

/// Distance from each membrane point/circle of `membrane` to the nearest
/// other membrane feature of the scene.
fn nearest_foreign_feature(scene: &Scene, membrane: usize) -> f64 {
    let mut best = f64::INFINITY;
    match &scene.domains[membrane].shape {
        Shape::Interval { .. } => {
            let (a, b) = scene.interval_endpoints(membrane);
            // The sibling endpoint counts: an excursion box around one point
            // must not contain the other.
            best = best.min(circle_dist(a, b, scene.period));
            for k in 0..scene.domains.len() {
                if k == membrane {
                    continue;
                }
                let (c, d) = scene.interval_endpoints(k);
                for p in [a, b] {
                    for q in [c, d] {
                        best = best.min(circle_dist(p, q, scene.period));
                    }
                }
            }
        }
        Shape::Ball { center: c1, radius: r1 } => {
            for k in 0..scene.domains.len() {
                if k == membrane {
                    continue;
                }
                if let Shape::Ball { center: c2, radius: r2 } = &scene.domains[k].shape {
                    let d = crate::geometry::torus_dist(c1, c2, 2, scene.period);
                    best = best
                        .min((d - r1 - r2).abs())
                        .min((d + r2 - r1).abs())
                        .min((d + r1 - r2).abs());
                }
            }
        }
    }
    best
}

fn check_direction_collar(scene: &Scene, membrane: usize, width: f64) -> Result<(), SimulateError> {
    let mut closest = nearest_foreign_feature(scene, membrane);
    if scene.dimension == 2 {
        // Both equidistant surfaces must exist around the circle.
        if let Shape::Ball { radius, .. } = &scene.domains[membrane].shape {
            closest = closest.min(*radius).min(scene.period / 2.0 - radius);
        }
    }
    if width >= closest {
        return Err(SimulateError::CollarTooWide { width, closest });
    }
    Ok(())
}

fn check_escape_collar(scene: &Scene, membrane: usize, width: f64) -> Result<(), SimulateError> {
    // Only the outward surface matters; it must exist and stay clear of
    // other membranes.
    let mut closest = nearest_foreign_feature(scene, membrane);
    match &scene.domains[membrane].shape {
        Shape::Interval { a, b } => {
            let len = (b - a).rem_euclid(scene.period);
            closest = closest.min((scene.period - len) / 2.0);
        }
        Shape::Ball { radius, .. } => {
            closest = closest.min(scene.period / 2.0 - radius);
        }
    }
    if width >= closest {
        return Err(SimulateError::CollarTooWide { width, closest });
    }
    Ok(())
}

/// Start position on the membrane for excursion `i` (alternating endpoints
/// in 1D, golden-angle spread in 2D so starts cover the membrane evenly).
fn membrane_start(scene: &Scene, membrane: usize, i: u64) -> Point {
    match &scene.domains[membrane].shape {
        Shape::Interval { .. } => {
            let (a, b) = scene.interval_endpoints(membrane);
            Point::d1(if i % 2 == 0 { a } else { b })
        }
        Shape::Ball { center, radius } => {
            let th = (i as f64) * 2.399963229728653; // golden angle
            Point::d2(
                (center.0[0] + radius * th.cos()).rem_euclid(scene.period),
                (center.0[1] + radius * th.sin()).rem_euclid(scene.period),
            )
        }
    }
}

/// Tangential position parameter of a point relative to the membrane.
fn tangential_coord(scene: &Scene, membrane: usize, p: &Point) -> f64 {
    match &scene.domains[membrane].shape {
        Shape::Interval { .. } => p.0[0],
        Shape::Ball { center, .. } => {
            let period = scene.period;
            let mut rel = [0.0_f64; 2];
            for a in 0..2 {
                let mut d = (p.0[a] - center.0[a]).rem_euclid(period);
                if d > period / 2.0 {
                    d -= period;
                }
                rel[a] = d;
            }
            rel[1].atan2(rel[0])
        }
    }
}

/// One 1D excursion: absorb at `start +- width` on the circle; the exterior
/// side of the membrane counts as outward.
fn one_excursion_1d(
    scene: &Scene,
    layout: &Layout,
    cfg: &XSimConfig,
    membrane: usize,
    start: Point,
    rng: &mut ChaCha8Rng,
) -> Result<CollarExit, SimulateError> {
    let p_in = 1.0 / (1.0 + scene.permeability_at(membrane, cfg.epsilon));
    let mut walker = Walker::new(scene, layout, start, Node::Dom(membrane));
    walker.max_step = cfg.max_step;
    walker.refine = cfg.boundary_refine;
    walker.dt_floor = (cfg.jump_delta / 8.0) * (cfg.jump_delta / 8.0);
    // Resolve the first contact by hand: the start sits on the membrane.
    let feature = nearest_feature(layout, membrane, &start);
    let first_in = rng.gen::<f64>() < p_in;
    walker.pos = layout.jump_from(feature, &start, cfg.jump_delta, first_in);
    loop {
        if walker.t >= cfg.time_budget {
            return Err(SimulateError::TimeBudgetExceeded {
                budget: cfg.time_budget,
            });
        }
        match walker.step(f64::INFINITY, rng)? {
            StepEvent::Contact { hit, at, .. } => match hit {
                Hit::Membrane(f) => {
                    debug_assert_eq!(layout.feature_domain(f), membrane);
                    let inward = rng.gen::<f64>() < p_in;
                    walker.pos = layout.jump_from(f, &at, cfg.jump_delta, inward);
                }
                Hit::Absorber(_) => {
                    let outward = !scene.contains(membrane, &walker.pos);
                    return Ok(CollarExit {
                        outward,
                        time: walker.t,
                        dispersion: 0.0,
                        location: walker.pos.0[0],
                    });
                }
            },
            StepEvent::Moved { .. } => {}
        }
    }
}

/// One 2D excursion: exit when the distance to the membrane reaches `width`.
fn one_excursion_2d(
    scene: &Scene,
    layout: &Layout,
    cfg: &XSimConfig,
    membrane: usize,
    width: f64,
    start: Point,
    rng: &mut ChaCha8Rng,
) -> Result<CollarExit, SimulateError> {
    let p_in = 1.0 / (1.0 + scene.permeability_at(membrane, cfg.epsilon));
    let mut walker = Walker::new(scene, layout, start, Node::Dom(membrane));
    walker.max_step = cfg.max_step;
    walker.refine = cfg.boundary_refine;
    walker.dt_floor = (cfg.jump_delta / 8.0) * (cfg.jump_delta / 8.0);
    walker.refine_extra = Refine::Collar {
        domain: membrane,
        width,
    };
    let feature = nearest_feature(layout, membrane, &start);
    let first_in = rng.gen::<f64>() < p_in;
    walker.pos = layout.jump_from(feature, &start, cfg.jump_delta, first_in);
    let mut h = signed_distance(scene, membrane, &walker.pos);
    loop {
        if walker.t >= cfg.time_budget {
            return Err(SimulateError::TimeBudgetExceeded {
                budget: cfg.time_budget,
            });
        }
        let h_before = h;
        let before = walker.pos;
        match walker.step(f64::INFINITY, rng)? {
            StepEvent::Contact { hit, at, .. } => {
                let f = match hit {
                    Hit::Membrane(f) => f,
                    Hit::Absorber(_) => unreachable!(),
                };
                let inward = rng.gen::<f64>() < p_in;
                walker.pos = layout.jump_from(f, &at, cfg.jump_delta, inward);
                h = signed_distance(scene, membrane, &walker.pos);
            }
            StepEvent::Moved { dt } => {
                h = signed_distance(scene, membrane, &walker.pos);
                if h.abs() >= width {
                    let over = h.abs() - width;
                    let travelled = (h.abs() - h_before.abs()).abs().max(1e-300);
                    let frac_back = (over / travelled).min(1.0);
                    let time = walker.t - frac_back * dt;
                    return Ok(CollarExit {
                        outward: h > 0.0,
                        time,
                        dispersion: tangential_dispersion(scene, membrane, &start, &before),
                        location: tangential_coord(scene, membrane, &walker.pos),
                    });
                }
            }
        }
    }
}

fn tangential_dispersion(scene: &Scene, membrane: usize, from: &Point, to: &Point) -> f64 {
    match &scene.domains[membrane].shape {
        Shape::Interval { .. } => 0.0,
        Shape::Ball { radius, .. } => {
            let a1 = tangential_coord(scene, membrane, from);
            let a2 = tangential_coord(scene, membrane, to);
            let mut d = (a1 - a2).abs() % std::f64::consts::TAU;
            if d > std::f64::consts::PI {
                d = std::f64::consts::TAU - d;
            }
            d * radius
        }
    }
}

fn nearest_feature(layout: &Layout, membrane: usize, at: &Point) -> usize {
    match layout.dim {
        1 => {
            let mut best = (f64::INFINITY, 0);
            for (i, f) in layout.points.iter().enumerate() {
                if f.domain == membrane {
                    let d = circle_dist(f.pos, at.0[0], layout.period);
                    if d < best.0 {
                        best = (d, i);
                    }
                }
            }
            best.1
        }
        _ => layout
            .circles
            .iter()
            .position(|c| c.domain == membrane)
            .expect("membrane circle present"),
    }
}

/// Collar-excursion statistics from `n` membrane starts.
pub fn boundary_excursion_stats(
    scene: &Scene,
    tree: &ContainmentTree,
    cfg: &XSimConfig,
    membrane: usize,
    collar: CollarSpec,
    n: usize,
) -> Result<ExcursionSummary, SimulateError> {
    let _ = tree;
    cfg.validate(scene)?;
    let width = cfg.epsilon.powf(collar.alpha);
    check_direction_collar(scene, membrane, width)?;
    if width <= 2.0 * cfg.jump_delta {
        return Err(SimulateError::InvalidConfig(format!(
            "collar width {width} too close to jump_delta {}",
            cfg.jump_delta
        )));
    }
    let samples: Vec<CollarExit> = match scene.dimension {
        1 => {
            let (a, b) = scene.interval_endpoints(membrane);
            let layouts: Vec<Layout> = [a, b]
                .iter()
                .map(|&p| {
                    let mut l = Layout::new(scene);
                    l.absorbers = vec![
                        (p - width).rem_euclid(scene.period),
                        (p + width).rem_euclid(scene.period),
                    ];
                    l
                })
                .collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = particle_rng(cfg.rng_seed, i as u64);
                    let start = membrane_start(scene, membrane, i as u64);
                    let layout = &layouts[(i % 2) as usize];
                    one_excursion_1d(scene, layout, cfg, membrane, start, &mut rng)
                })
                .collect::<Result<_, _>>()?
        }
        _ => {
            let layout = Layout::new(scene);
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = particle_rng(cfg.rng_seed, i as u64);
                    let start = membrane_start(scene, membrane, i as u64);
                    one_excursion_2d(scene, &layout, cfg, membrane, width, start, &mut rng)
                })
                .collect::<Result<_, _>>()?
        }
    };
    let outward = samples.iter().filter(|s| s.outward).count() as f64 / n as f64;
    let mean_time = samples.iter().map(|s| s.time).sum::<f64>() / n as f64;
    let window = cfg.epsilon.powf(collar.beta);
    let within = samples
        .iter()
        .filter(|s| s.dispersion <= window)
        .count() as f64
        / n as f64;
    Ok(ExcursionSummary {
        epsilon: cfg.epsilon,
        collar_width: width,
        outward_probability: outward,
        mean_exit_time: mean_time,
        within_beta_window: within,
        samples,
    })
}

/// One deep-trap escape: from `start` inside the domain, run until the
/// process first reaches distance `width` outside it. Returns (time, exit
/// location parameter).
fn one_escape(
    scene: &Scene,
    layout: &Layout,
    cfg: &XSimConfig,
    membrane: usize,
    width: f64,
    start: Point,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), SimulateError> {
    let p_in = 1.0 / (1.0 + scene.permeability_at(membrane, cfg.epsilon));
    let mut walker = Walker::new(scene, layout, start, Node::Dom(membrane));
    walker.max_step = cfg.max_step;
    walker.refine = cfg.boundary_refine;
    walker.dt_floor = (cfg.jump_delta / 8.0) * (cfg.jump_delta / 8.0);
    walker.refine_extra = Refine::Collar {
        domain: membrane,
        width,
    };
    loop {
        if walker.t >= cfg.time_budget {
            return Err(SimulateError::TimeBudgetExceeded {
                budget: cfg.time_budget,
            });
        }
        match walker.step(f64::INFINITY, rng)? {
            StepEvent::Contact { hit, at, .. } => {
                let feature = match hit {
                    Hit::Membrane(f) => f,
                    Hit::Absorber(_) => unreachable!(),
                };
                let inward = rng.gen::<f64>() < p_in;
                walker.pos = layout.jump_from(feature, &at, cfg.jump_delta, inward);
            }
            StepEvent::Moved { .. } => {
                let h = signed_distance(scene, membrane, &walker.pos);
                if h >= width {
                    return Ok((walker.t, tangential_coord(scene, membrane, &walker.pos)));
                }
            }
        }
    }
}

/// Deep-trap escape samples: `n` independent first passages from inside the
/// domain to the outward collar surface at `eps^alpha`.
pub fn trap_escape_stats(
    scene: &Scene,
    cfg: &XSimConfig,
    membrane: usize,
    alpha: f64,
    start: Point,
    n: usize,
) -> Result<Vec<(f64, f64)>, SimulateError> {
    cfg.validate(scene)?;
    let width = cfg.epsilon.powf(alpha);
    check_escape_collar(scene, membrane, width)?;
    let layout = Layout::new(scene);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(cfg.rng_seed, i as u64);
            let mut start_i = start;
            if scene.dimension == 2 {
                // Spread interior starts a little so no single point
                // dominates the exit-law sample.
                let th = (i as f64) * 2.399963229728653;
                start_i = Point::d2(
                    start.0[0] + 1e-3 * th.cos(),
                    start.0[1] + 1e-3 * th.sin(),
                );
            }
            one_escape(scene, &layout, cfg, membrane, width, start_i, &mut rng)
        })
        .collect()
}
