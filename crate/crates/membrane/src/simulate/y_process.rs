//! The redistribution process.
//!
//! Brownian motion in `U = ambient \ (closures of the redistribution
//! children)`, specularly reflected at the ambient boundary (none when the
//! ambient is the whole torus). Touching a redistribution membrane resamples
//! the position from the uniform (volume) measure on that membrane and
//! pushes it a small offset back into `U`; touching any target membrane
//! absorbs. This is the limit of the membrane process observed with a clock
//! that skips the time spent inside the collapsed children.

use super::engine::{Hit, Layout, SimulateError, StepEvent, Walker};
use super::streams::particle_rng;
use crate::geometry::{ContainmentTree, Node, Point, Scene, Shape};
use crate::predictor::{HittingDistribution, HittingOracle, HittingQuery, PredictError, StartSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct YSimConfig {
    pub max_step: f64,
    pub boundary_refine: f64,
    /// Re-entry offset after a redistribution resample.
    pub push_off: f64,
    pub rng_seed: u64,
    pub time_budget: f64,
}

impl YSimConfig {
    pub fn for_scene(scene: &Scene) -> Self {
        let gap = scene.min_membrane_gap();
        YSimConfig {
            max_step: 1e-3,
            boundary_refine: 0.25,
            push_off: (gap / 40.0).min(2.5e-3),
            rng_seed: 42,
            time_budget: 1e4,
        }
    }

    fn dt_floor(&self) -> f64 {
        let f = self.push_off / 8.0;
        f * f
    }
}

/// Outcome of one redistribution-process run.
#[derive(Debug, Clone)]
pub struct YHit {
    /// Index into the query's target list.
    pub target: usize,
    pub time: f64,
    pub landing: Point,
}

enum Wall {
    None,
    Interval { a: f64, b: f64 },
    Ball { center: Point, radius: f64 },
}

struct YGeometry {
    wall: Wall,
    /// Scene domain index per query target / redistribution entry.
    target_idx: Vec<usize>,
    redist_idx: Vec<usize>,
}

fn y_geometry(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
) -> Result<YGeometry, SimulateError> {
    let wall = match query.ambient {
        Node::Root => Wall::None,
        Node::Dom(k) => match &scene.domains[k].shape {
            Shape::Interval { .. } => {
                let (a, b) = scene.interval_endpoints(k);
                Wall::Interval { a, b }
            }
            Shape::Ball { center, radius } => Wall::Ball {
                center: *center,
                radius: *radius,
            },
        },
    };
    let lookup = |ids: &[String]| -> Result<Vec<usize>, SimulateError> {
        ids.iter()
            .map(|id| {
                let idx = scene.index_of(id)?;
                if !tree.children_of(query.ambient).contains(&idx) {
                    return Err(SimulateError::InvalidConfig(format!(
                        "{id} is not a child of the ambient domain"
                    )));
                }
                Ok(idx)
            })
            .collect()
    };
    Ok(YGeometry {
        wall,
        target_idx: lookup(&query.targets)?,
        redist_idx: lookup(&query.redistribution)?,
    })
}

/// Uniform (volume-measure) point on the boundary of domain `k`.
fn sample_boundary(scene: &Scene, k: usize, rng: &mut ChaCha8Rng) -> Point {
    match &scene.domains[k].shape {
        Shape::Interval { .. } => {
            let (a, b) = scene.interval_endpoints(k);
            Point::d1(if rng.gen::<bool>() { a } else { b })
        }
        Shape::Ball { center, radius } => {
            let th = rng.gen::<f64>() * std::f64::consts::TAU;
            Point::d2(
                (center.0[0] + radius * th.cos()).rem_euclid(scene.period),
                (center.0[1] + radius * th.sin()).rem_euclid(scene.period),
            )
        }
    }
}

/// Push-off from the boundary of domain `k` at point `at`, into the ambient
/// region (away from the interior of `k`).
fn push_outward(scene: &Scene, k: usize, at: &Point, eta: f64) -> Point {
    match &scene.domains[k].shape {
        Shape::Interval { .. } => {
            let (a, b) = scene.interval_endpoints(k);
            let period = scene.period;
            let on_left = crate::geometry::circle_dist(at.0[0], a, period)
                < crate::geometry::circle_dist(at.0[0], b, period);
            let x = if on_left { a - eta } else { b + eta };
            Point::d1(x.rem_euclid(period))
        }
        Shape::Ball { center, radius } => {
            let period = scene.period;
            let mut rel = [0.0_f64; 2];
            for i in 0..2 {
                let mut d = (at.0[i] - center.0[i]).rem_euclid(period);
                if d > period / 2.0 {
                    d -= period;
                }
                rel[i] = d;
            }
            let norm = (rel[0] * rel[0] + rel[1] * rel[1]).sqrt().max(1e-300);
            let scale = (radius + eta) / norm;
            Point::d2(
                (center.0[0] + rel[0] * scale).rem_euclid(period),
                (center.0[1] + rel[1] * scale).rem_euclid(period),
            )
        }
    }
}

/// Specular fold at the ambient wall, following the actual displacement from
/// `before` to `after` (so an overshoot always reflects off the wall it
/// crossed, never the geometrically nearer one).
fn fold_move(wall: &Wall, before: &Point, after: &Point, period: f64) -> Point {
    match wall {
        Wall::None => *after,
        Wall::Interval { a, b } => {
            let len = (b - a).rem_euclid(period);
            // Unwrapped frame of the interval: the particle starts inside.
            let x0 = (before.0[0] - a).rem_euclid(period).min(len);
            let mut dx = (after.0[0] - before.0[0]).rem_euclid(period);
            if dx > period / 2.0 {
                dx -= period;
            }
            // Triangle-wave fold into [0, len], any number of reflections.
            let mut y = (x0 + dx).rem_euclid(2.0 * len);
            if y > len {
                y = 2.0 * len - y;
            }
            Point::d1((a + y).rem_euclid(period))
        }
        Wall::Ball { center, radius } => {
            let mut rel = [0.0_f64; 2];
            for i in 0..2 {
                let mut d = (after.0[i] - center.0[i]).rem_euclid(period);
                if d > period / 2.0 {
                    d -= period;
                }
                rel[i] = d;
            }
            let r = (rel[0] * rel[0] + rel[1] * rel[1]).sqrt();
            if r <= *radius {
                return *after;
            }
            let folded = 2.0 * radius - r;
            let scale = folded.max(0.0) / r;
            Point::d2(
                (center.0[0] + rel[0] * scale).rem_euclid(period),
                (center.0[1] + rel[1] * scale).rem_euclid(period),
            )
        }
    }
}

/// Run the redistribution process until a target membrane absorbs it.
pub fn run_y_until_hit(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
    cfg: &YSimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<YHit, SimulateError> {
    let geo = y_geometry(scene, tree, query)?;
    let mut layout = Layout::new(scene);
    let mut relevant: Vec<usize> = geo.target_idx.clone();
    relevant.extend_from_slice(&geo.redist_idx);
    layout.retain_domains(&relevant);
    run_y_with(scene, query, &geo, &layout, cfg, rng)
}

fn run_y_with(
    scene: &Scene,
    query: &HittingQuery,
    geo: &YGeometry,
    layout: &Layout,
    cfg: &YSimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<YHit, SimulateError> {
    let period = scene.period;

    // Resolve the start.
    let mut pos = match &query.start {
        StartSpec::Point(p) => p.reduced(scene.dimension, period),
        StartSpec::Boundary(id) => {
            let idx = scene.index_of(id)?;
            sample_boundary(scene, idx, rng)
        }
        StartSpec::WeightedBoundary(_, atoms) => {
            let total: f64 = atoms.iter().map(|(_, w)| w).sum();
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = atoms[atoms.len() - 1].0;
            for (p, w) in atoms {
                if u < *w {
                    chosen = *p;
                    break;
                }
                u -= w;
            }
            chosen.reduced(scene.dimension, period)
        }
    };

    // A start on/inside a target is immediate absorption; a start inside a
    // redistribution child resamples its boundary first.
    for (t, &k) in geo.target_idx.iter().enumerate() {
        if scene.contains(k, &pos)
            || crate::geometry::signed_distance(scene, k, &pos).abs() <= 1e-12 * period
        {
            return Ok(YHit {
                target: t,
                time: 0.0,
                landing: pos,
            });
        }
    }
    for &k in &geo.redist_idx {
        if scene.contains(k, &pos)
            || crate::geometry::signed_distance(scene, k, &pos).abs() <= 1e-12 * period
        {
            let resampled = sample_boundary(scene, k, rng);
            pos = push_outward(scene, k, &resampled, cfg.push_off);
            break;
        }
    }

    let mut walker = Walker::new(scene, layout, pos, Node::Root);
    walker.max_step = cfg.max_step;
    walker.refine = cfg.boundary_refine;
    walker.dt_floor = cfg.dt_floor();
    if let Wall::Ball { center, radius } = &geo.wall {
        // Radially folding a long step flattens the wall to its tangent and
        // biases transport along it; shrink steps near the curve, down to a
        // wall-specific floor.
        let sigma_min = radius / 64.0;
        walker.refine_extra = super::engine::Refine::CurvedWall {
            center: *center,
            radius: *radius,
            floor: sigma_min * sigma_min,
        };
    }

    loop {
        if walker.t >= cfg.time_budget {
            return Err(SimulateError::TimeBudgetExceeded {
                budget: cfg.time_budget,
            });
        }
        let before = walker.pos;
        match walker.step(f64::INFINITY, rng)? {
            StepEvent::Contact { hit, at, .. } => {
                let k = match hit {
                    Hit::Membrane(f) => layout.feature_domain(f),
                    Hit::Absorber(_) => unreachable!("Y runs use no bare absorbers"),
                };
                if let Some(t) = geo.target_idx.iter().position(|&d| d == k) {
                    return Ok(YHit {
                        target: t,
                        time: walker.t,
                        landing: at,
                    });
                }
                let resampled = sample_boundary(scene, k, rng);
                walker.pos = push_outward(scene, k, &resampled, cfg.push_off);
            }
            StepEvent::Moved { .. } => {
                let folded = fold_move(&geo.wall, &before, &walker.pos, period);
                if folded.0 != walker.pos.0 {
                    // The fold may sweep across a membrane; check the folded
                    // leg and resolve the first contact on it.
                    let mut d = [0.0_f64; 2];
                    for a in 0..scene.dimension {
                        let mut diff = (folded.0[a] - before.0[a]).rem_euclid(period);
                        if diff > period / 2.0 {
                            diff -= period;
                        }
                        d[a] = diff;
                    }
                    if let Some((_, hit, at)) = layout.first_crossing(&before, d) {
                        let k = match hit {
                            Hit::Membrane(f) => layout.feature_domain(f),
                            Hit::Absorber(_) => unreachable!(),
                        };
                        if let Some(t) = geo.target_idx.iter().position(|&d| d == k) {
                            return Ok(YHit {
                                target: t,
                                time: walker.t,
                                landing: at,
                            });
                        }
                        let resampled = sample_boundary(scene, k, rng);
                        walker.pos = push_outward(scene, k, &resampled, cfg.push_off);
                    } else {
                        walker.pos = folded;
                    }
                }
            }
        }
    }
}

/// Empirical hitting distribution over the query's targets from `n`
/// independent runs, with landing atoms aggregated per target (two endpoint
/// atoms in 1D, none in 2D where the landing measure is effectively
/// continuous).
pub fn run_y_many(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
    cfg: &YSimConfig,
    n: usize,
) -> Result<(HittingDistribution, Vec<YHit>), SimulateError> {
    let geo = y_geometry(scene, tree, query)?;
    let mut layout = Layout::new(scene);
    let mut relevant: Vec<usize> = geo.target_idx.clone();
    relevant.extend_from_slice(&geo.redist_idx);
    layout.retain_domains(&relevant);

    let hits: Vec<YHit> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(cfg.rng_seed, i as u64);
            run_y_with(scene, query, &geo, &layout, cfg, &mut rng)
        })
        .collect::<Result<_, _>>()?;

    let mut mass: BTreeMap<String, f64> = BTreeMap::new();
    let mut landing: BTreeMap<String, Vec<(Point, f64)>> = BTreeMap::new();
    for id in &query.targets {
        mass.insert(id.clone(), 0.0);
    }
    let w = 1.0 / n as f64;
    for h in &hits {
        let id = &query.targets[h.target];
        *mass.get_mut(id).unwrap() += w;
        if scene.dimension == 1 {
            let k = geo.target_idx[h.target];
            let (a, b) = scene.interval_endpoints(k);
            let da = crate::geometry::circle_dist(h.landing.0[0], a, scene.period);
            let db = crate::geometry::circle_dist(h.landing.0[0], b, scene.period);
            let p = Point::d1(if da <= db { a } else { b });
            let atoms = landing.entry(id.clone()).or_default();
            match atoms.iter_mut().find(|(q, _)| q.0[0] == p.0[0]) {
                Some((_, m)) => *m += w,
                None => atoms.push((p, w)),
            }
        }
    }
    Ok((HittingDistribution { mass, landing }, hits))
}

/// Monte Carlo estimator of hitting distributions as an oracle.
pub struct McY<'a> {
    pub scene: &'a Scene,
    pub tree: &'a ContainmentTree,
    pub cfg: YSimConfig,
    pub particles: usize,
}

impl HittingOracle for McY<'_> {
    fn resolve(&self, query: &HittingQuery) -> Result<HittingDistribution, PredictError> {
        let (dist, _) = run_y_many(self.scene, self.tree, query, &self.cfg, self.particles)
            .map_err(|e| PredictError::OracleFailure(e.to_string()))?;
        Ok(dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_tree;
    use crate::scenes;

    fn q(
        tree: &ContainmentTree,
        ambient: &str,
        s: &[&str],
        t: &[&str],
        start: StartSpec,
    ) -> HittingQuery {
        HittingQuery {
            ambient: tree.node_of(ambient).unwrap(),
            redistribution: s.iter().map(|x| x.to_string()).collect(),
            targets: t.iter().map(|x| x.to_string()).collect(),
            start,
        }
    }

    #[test]
    fn symmetric_split_between_flanking_membranes() {
        let scene = scenes::scene_b();
        let tree = build_tree(&scene).unwrap();
        let query = q(
            &tree,
            "D7",
            &[],
            &["D6", "D5", "D3"],
            StartSpec::Point(Point::d1(0.425)),
        );
        let cfg = YSimConfig::for_scene(&scene);
        let (dist, _) = run_y_many(&scene, &tree, &query, &cfg, 4000).unwrap();
        let se = (0.25_f64 / 4000.0).sqrt();
        assert!((dist.mass["D6"] - 0.5).abs() < 4.0 * se, "{:?}", dist.mass);
        assert!((dist.mass["D5"] - 0.5).abs() < 4.0 * se);
        assert_eq!(dist.mass["D3"], 0.0);
    }

    #[test]
    fn redistribution_shields_the_far_target() {
        // With D3 collapsed, everything right of 0.65 funnels into D5.
        let scene = scenes::scene_b();
        let tree = build_tree(&scene).unwrap();
        let query = q(
            &tree,
            "D7",
            &["D3"],
            &["D6", "D5"],
            StartSpec::Point(Point::d1(0.675)),
        );
        let cfg = YSimConfig::for_scene(&scene);
        let (dist, _) = run_y_many(&scene, &tree, &query, &cfg, 500).unwrap();
        assert!((dist.mass["D5"] - 1.0).abs() < 1e-12);
        assert_eq!(dist.mass["D6"], 0.0);
    }

    #[test]
    fn redistribution_resampling_is_uniform_on_the_membrane() {
        // Post-redistribution positions on a 2D membrane pass a chi-square
        // test against the uniform angular law.
        let scene = scenes::scene_d();
        let tree = build_tree(&scene).unwrap();
        let k = scene.index_of("T3").unwrap();
        let mut rng = particle_rng(11, 0);
        let mut counts = [0usize; 12];
        let n = 6000;
        for _ in 0..n {
            let p = sample_boundary(&scene, k, &mut rng);
            let c = match &scene.domains[k].shape {
                Shape::Ball { center, .. } => *center,
                _ => unreachable!(),
            };
            let th = (p.0[1] - c.0[1]).atan2(p.0[0] - c.0[0]);
            let bin = (((th + std::f64::consts::PI) / std::f64::consts::TAU * 12.0) as usize)
                .min(11);
            counts[bin] += 1;
        }
        let expected = n as f64 / 12.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(stat < 31.3, "chi-square {stat} on 11 dof"); // 0.999 quantile
    }

    #[test]
    fn collapsed_component_averages_its_sides() {
        // With D5 collapsed, its constant value is the mean of the two
        // flanking absorber values, so a start at 0.425 hits the rank-three
        // membrane with probability 0.75 exactly. The estimate must also be
        // insensitive to halving the re-entry offset.
        let scene = scenes::scene_b();
        let tree = build_tree(&scene).unwrap();
        let query = q(
            &tree,
            "D7",
            &["D5"],
            &["D6", "D3"],
            StartSpec::Point(Point::d1(0.425)),
        );
        let n = 20_000;
        let mut estimates = Vec::new();
        for (i, eta) in [1.25e-3, 0.625e-3].iter().enumerate() {
            let mut cfg = YSimConfig::for_scene(&scene);
            cfg.push_off = *eta;
            cfg.rng_seed = 50 + i as u64;
            let (dist, _) = run_y_many(&scene, &tree, &query, &cfg, n).unwrap();
            estimates.push(dist.mass["D6"]);
        }
        let se = (0.75_f64 * 0.25 / n as f64).sqrt();
        for e in &estimates {
            assert!((e - 0.75).abs() < 4.0 * se + 3e-3, "{estimates:?}");
        }
        let ci = 3.0 * (2.0_f64).sqrt() * se;
        assert!(
            (estimates[0] - estimates[1]).abs() < ci + 3e-3,
            "push-off sensitivity: {estimates:?}"
        );
    }

    #[test]
    fn two_dimensional_symmetric_targets() {
        let scene = crate::geometry::Scene::new(
            2,
            1.0,
            vec![
                crate::geometry::Domain {
                    id: "T1".into(),
                    shape: Shape::Ball {
                        center: Point::d2(0.35, 0.5),
                        radius: 0.1,
                    },
                    permeability_exponent: num::rational::Rational64::from_integer(1),
                },
                crate::geometry::Domain {
                    id: "T2".into(),
                    shape: Shape::Ball {
                        center: Point::d2(0.65, 0.5),
                        radius: 0.1,
                    },
                    permeability_exponent: num::rational::Rational64::from_integer(1),
                },
                crate::geometry::Domain {
                    id: "D".into(),
                    shape: Shape::Ball {
                        center: Point::d2(0.5, 0.5),
                        radius: 0.45,
                    },
                    permeability_exponent: num::rational::Rational64::from_integer(1),
                },
            ],
        )
        .unwrap();
        let tree = build_tree(&scene).unwrap();
        let query = q(
            &tree,
            "D",
            &[],
            &["T1", "T2"],
            StartSpec::Point(Point::d2(0.5, 0.25)),
        );
        let mut cfg = YSimConfig::for_scene(&scene);
        cfg.max_step = 2e-3;
        let n = 3000;
        let (dist, _) = run_y_many(&scene, &tree, &query, &cfg, n).unwrap();
        let se = (0.25_f64 / n as f64).sqrt();
        assert!((dist.mass["T1"] - 0.5).abs() < 4.0 * se, "{:?}", dist.mass);
    }
}
