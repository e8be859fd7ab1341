//! Statistical experiments tying the simulators to the solvers and the
//! predictor: the end-to-end metastable-limit check, per-lemma rate
//! estimates, and trace-clock consistency.

use super::stats::{chi_square, ks_statistic, loglog_slope, tv_distance, wilson_interval};
use crate::asymptotics::ExponentQ;
use crate::geometry::{build_tree, locate_cell_unchecked, ContainmentTree, Node, Point, Scene, Shape};
use crate::predictor::{predict, HittingOracle, HittingQuery, MixtureMeasure, PredictError};
use crate::simulate::{
    boundary_excursion_stats, run_x_to_time_many, run_x_until_hit_many, run_y_many,
    trap_escape_stats, CollarSpec, SimulateError, XSimConfig, YSimConfig,
};
use crate::solve::one_d::Analytic1d;
use crate::solve::two_d::Fd2d;
use crate::solve::SolveError;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient samples: needed {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Asymptotics(#[from] crate::asymptotics::AsymptoticsError),
}

/// Overrides for the simulator knobs used by an experiment.
#[derive(Debug, Clone, Default)]
pub struct SimOverrides {
    pub jump_delta: Option<f64>,
    pub max_step: Option<f64>,
    pub boundary_refine: Option<f64>,
    pub time_budget: Option<f64>,
}

impl SimOverrides {
    pub fn apply(&self, cfg: &mut XSimConfig) {
        if let Some(v) = self.jump_delta {
            cfg.jump_delta = v;
        }
        if let Some(v) = self.max_step {
            cfg.max_step = v;
        }
        if let Some(v) = self.boundary_refine {
            cfg.boundary_refine = v;
        }
        if let Some(v) = self.time_budget {
            cfg.time_budget = v;
        }
    }
}

/// A full end-to-end experiment: simulate to `eps^{-b}` along a ladder of
/// epsilons and compare final-position laws against the predicted mixtures.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scene: Scene,
    /// Strictly decreasing.
    pub epsilon_ladder: Vec<f64>,
    pub b: ExponentQ,
    pub starts: Vec<Point>,
    pub particles: usize,
    pub seed: u64,
    pub tv_tolerance: f64,
    pub sim: SimOverrides,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<(), VerifyError> {
        if self.particles < 1000 {
            return Err(VerifyError::InvalidSpec(format!(
                "particle count {} below the minimum of 1000",
                self.particles
            )));
        }
        if self.epsilon_ladder.is_empty()
            || self.epsilon_ladder.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(VerifyError::InvalidSpec(
                "epsilon ladder must be non-empty and strictly decreasing".into(),
            ));
        }
        Ok(())
    }
}

/// Comparison of one (epsilon, start) run against the prediction.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub epsilon: f64,
    pub b: ExponentQ,
    pub start: [f64; 2],
    pub t_final: f64,
    /// Empirical leaf-domain masses; mass outside every leaf is keyed
    /// "transient".
    pub empirical: BTreeMap<String, f64>,
    pub predicted: MixtureMeasure,
    pub tv: f64,
    /// 95% Wilson intervals per reported key.
    pub wilson: BTreeMap<String, (f64, f64)>,
    pub pass: bool,
}

/// Pick the hitting oracle matching the scene dimension.
pub fn default_oracle<'a>(
    scene: &'a Scene,
    tree: &'a ContainmentTree,
) -> Box<dyn HittingOracle + 'a> {
    match scene.dimension {
        1 => Box::new(Analytic1d { scene, tree }),
        _ => Box::new(Fd2d {
            scene,
            tree,
            spacing: scene.period / 64.0,
        }),
    }
}

/// Classify a final position by leaf membership.
fn classify_final(scene: &Scene, tree: &ContainmentTree, p: &Point) -> String {
    match locate_cell_unchecked(scene, tree, p).expect("descent is total") {
        Node::Dom(i) if tree.children[i].is_empty() => scene.domains[i].id.clone(),
        _ => "transient".to_string(),
    }
}

/// Run the end-to-end comparison for every (epsilon, start) pair.
pub fn end_to_end(spec: &ExperimentSpec) -> Result<Vec<ComparisonReport>, VerifyError> {
    spec.validate()?;
    let scene = &spec.scene;
    let tree = build_tree(scene)?;
    let oracle = default_oracle(scene, &tree);
    let mut reports = Vec::new();
    for &eps in &spec.epsilon_ladder {
        let t_final = eps.powf(-spec.b.to_f64());
        let mut cfg = XSimConfig::for_scene(scene, eps);
        cfg.rng_seed = spec.seed;
        spec.sim.apply(&mut cfg);
        if cfg.time_budget < t_final {
            cfg.time_budget = t_final * (1.0 + 1e-9);
        }
        for &start in &spec.starts {
            let predicted = predict(scene, &tree, spec.b, &start, oracle.as_ref())?;
            let results = run_x_to_time_many(scene, &tree, &cfg, start, t_final, spec.particles)?;
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for r in &results {
                *counts.entry(classify_final(scene, &tree, &r.final_position)).or_insert(0) += 1;
            }
            let n = spec.particles as f64;
            let empirical: BTreeMap<String, f64> =
                counts.iter().map(|(k, &c)| (k.clone(), c as f64 / n)).collect();
            let tv = tv_distance(&empirical, &predicted.weights);
            let wilson = counts
                .iter()
                .map(|(k, &c)| (k.clone(), wilson_interval(c, spec.particles as u64, 0.95)))
                .collect();
            reports.push(ComparisonReport {
                epsilon: eps,
                b: spec.b,
                start: start.0,
                t_final,
                empirical,
                predicted,
                tv,
                wilson,
                pass: tv <= spec.tv_tolerance,
            });
        }
    }
    Ok(reports)
}

/// Chi-square uniformity check of sample positions within one leaf domain.
/// 1D leaves are binned by position, 2D leaves by equal-area annuli.
pub fn within_cell_uniformity(
    scene: &Scene,
    leaf: usize,
    positions: &[Point],
    bins: usize,
) -> Result<(f64, f64), VerifyError> {
    let inside: Vec<&Point> = positions.iter().filter(|p| scene.contains(leaf, p)).collect();
    if inside.len() < 50 {
        return Err(VerifyError::InsufficientSamples {
            needed: 50,
            got: inside.len(),
        });
    }
    let mut counts = vec![0u64; bins];
    match &scene.domains[leaf].shape {
        Shape::Interval { a, b } => {
            let len = (b - a).rem_euclid(scene.period);
            for p in &inside {
                let off = (p.0[0] - a).rem_euclid(scene.period);
                let bin = ((off / len * bins as f64) as usize).min(bins - 1);
                counts[bin] += 1;
            }
        }
        Shape::Ball { center, radius } => {
            for p in &inside {
                let d = crate::geometry::torus_dist(p, center, 2, scene.period);
                let u = (d / radius).powi(2); // uniform in [0,1) under the flat law
                let bin = ((u * bins as f64) as usize).min(bins - 1);
                counts[bin] += 1;
            }
        }
    }
    let expected = vec![inside.len() as f64 / bins as f64; bins];
    Ok(chi_square(&counts, &expected))
}

/// Parameters of the lemma suite.
#[derive(Debug, Clone)]
pub struct LemmaSuiteParams {
    /// Epsilons for the exit-direction slope, strictly decreasing.
    pub direction_epsilons: Vec<f64>,
    pub direction_alpha: f64,
    pub direction_n: usize,
    /// Epsilon pair (coarse, fine) for the exit-time ratio.
    pub time_epsilons: (f64, f64),
    pub time_alpha: f64,
    pub time_n: usize,
    /// Epsilons for the trap-escape slope.
    pub escape_epsilons: Vec<f64>,
    pub escape_alpha: f64,
    pub escape_n: usize,
    /// Return-probability check: epsilon, time exponent, particles.
    pub return_epsilon: f64,
    pub return_b: f64,
    pub return_n: usize,
    pub seed: u64,
    pub beta: f64,
}

impl LemmaSuiteParams {
    /// Desk-scale defaults for the single-interval scene.
    pub fn desk_defaults() -> Self {
        LemmaSuiteParams {
            direction_epsilons: vec![0.2, 0.1, 0.05, 0.025],
            direction_alpha: 0.6,
            direction_n: 20_000,
            time_epsilons: (0.1, 0.025),
            time_alpha: 0.5,
            time_n: 4_000,
            escape_epsilons: vec![0.05, 0.025, 0.0125],
            escape_alpha: 0.5,
            escape_n: 400,
            return_epsilon: 0.02,
            return_b: 0.5,
            return_n: 2_000,
            seed: 42,
            beta: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaSuiteReport {
    /// (epsilon, outward probability) per ladder point.
    pub direction_points: Vec<(f64, f64)>,
    pub direction_slope: f64,
    pub direction_r2: f64,
    /// (epsilon, mean collar-exit time) at the ratio pair.
    pub exit_time_points: Vec<(f64, f64)>,
    /// Observed ratio of exit times against the predicted `(e1/e2)^(2a)`.
    pub exit_time_ratio: f64,
    pub exit_time_ratio_expected: f64,
    pub escape_points: Vec<(f64, f64)>,
    pub escape_slope: f64,
    pub escape_slope_expected: f64,
    pub return_probability: f64,
}

/// Statistical rate checks near a single membrane: exit direction and
/// time, trap escape, and the return probability at a mid-regime horizon.
pub fn lemma_suite(scene: &Scene, params: &LemmaSuiteParams) -> Result<LemmaSuiteReport, VerifyError> {
    let tree = build_tree(scene)?;
    let membrane = 0usize;
    let collar = CollarSpec::new(params.direction_alpha, params.beta)?;

    let mut direction_points = Vec::new();
    for (i, &eps) in params.direction_epsilons.iter().enumerate() {
        let mut cfg = XSimConfig::for_scene(scene, eps);
        // Distinct stream per ladder point: correlated draws would tilt the
        // whole fitted line rather than average out.
        cfg.rng_seed = params.seed.wrapping_add(1000 + i as u64);
        let s = boundary_excursion_stats(scene, &tree, &cfg, membrane, collar, params.direction_n)?;
        direction_points.push((eps, s.outward_probability));
    }
    let (direction_slope, direction_r2) = loglog_slope(
        &direction_points.iter().map(|p| p.0).collect::<Vec<_>>(),
        &direction_points.iter().map(|p| p.1).collect::<Vec<_>>(),
    );

    let time_collar = CollarSpec::new(params.time_alpha, params.beta.min(params.time_alpha / 2.0))?;
    let mut exit_time_points = Vec::new();
    for (i, &eps) in [params.time_epsilons.0, params.time_epsilons.1].iter().enumerate() {
        let mut cfg = XSimConfig::for_scene(scene, eps);
        cfg.rng_seed = params.seed.wrapping_add(2000 + i as u64);
        let s = boundary_excursion_stats(scene, &tree, &cfg, membrane, time_collar, params.time_n)?;
        exit_time_points.push((eps, s.mean_exit_time));
    }
    let exit_time_ratio = exit_time_points[0].1 / exit_time_points[1].1;
    let exit_time_ratio_expected =
        (params.time_epsilons.0 / params.time_epsilons.1).powf(2.0 * params.time_alpha);

    let interior = interior_point(scene, membrane);
    let mut escape_points = Vec::new();
    for (i, &eps) in params.escape_epsilons.iter().enumerate() {
        let mut cfg = XSimConfig::for_scene(scene, eps);
        cfg.rng_seed = params.seed.wrapping_add(3000 + i as u64);
        let samples = trap_escape_stats(scene, &cfg, membrane, params.escape_alpha, interior, params.escape_n)?;
        let mean = samples.iter().map(|(t, _)| t).sum::<f64>() / samples.len() as f64;
        escape_points.push((eps, mean));
    }
    let (escape_slope, _) = loglog_slope(
        &escape_points.iter().map(|p| p.0).collect::<Vec<_>>(),
        &escape_points.iter().map(|p| p.1).collect::<Vec<_>>(),
    );

    // Return probability: start on the membrane, run to t = eps^{-b}.
    let eps = params.return_epsilon;
    let mut cfg = XSimConfig::for_scene(scene, eps);
    cfg.rng_seed = params.seed + 3;
    let t = eps.powf(-params.return_b);
    if cfg.time_budget < t {
        cfg.time_budget = t * (1.0 + 1e-9);
    }
    let start = match &scene.domains[membrane].shape {
        Shape::Interval { a, .. } => Point::d1(*a),
        Shape::Ball { center, radius } => Point::d2(center.0[0] + radius, center.0[1]),
    };
    let results = run_x_to_time_many(scene, &tree, &cfg, start, t, params.return_n)?;
    let inside = results
        .iter()
        .filter(|r| {
            scene.contains(membrane, &r.final_position)
                || crate::geometry::signed_distance(scene, membrane, &r.final_position)
                    <= cfg.jump_delta
        })
        .count();
    let return_probability = inside as f64 / params.return_n as f64;

    Ok(LemmaSuiteReport {
        direction_points,
        direction_slope,
        direction_r2,
        exit_time_points,
        exit_time_ratio,
        exit_time_ratio_expected,
        escape_points,
        escape_slope,
        escape_slope_expected: params.escape_alpha - 1.0,
        return_probability,
    })
}

fn interior_point(scene: &Scene, k: usize) -> Point {
    match &scene.domains[k].shape {
        Shape::Interval { a, b } => Point::d1(((a + b) / 2.0).rem_euclid(scene.period)),
        Shape::Ball { center, .. } => *center,
    }
}

/// Deep-trap exit-law samples: exit angles (2D) or exit coordinates (1D) of
/// the first passage to the outward collar surface, with the p-value of a
/// KS test against the uniform law on the membrane.
pub fn exit_law_uniformity(
    scene: &Scene,
    eps: f64,
    membrane: usize,
    alpha: f64,
    n: usize,
    seed: u64,
    start: Point,
) -> Result<(f64, f64, Vec<f64>), VerifyError> {
    let mut cfg = XSimConfig::for_scene(scene, eps);
    cfg.rng_seed = seed;
    let samples = trap_escape_stats(scene, &cfg, membrane, alpha, start, n)?;
    let locations: Vec<f64> = samples.iter().map(|(_, loc)| *loc).collect();
    let (stat, p) = match &scene.domains[membrane].shape {
        Shape::Ball { .. } => ks_statistic(&locations, |th| {
            (th + std::f64::consts::PI) / std::f64::consts::TAU
        }),
        Shape::Interval { .. } => {
            // Two exit points only; compare the split instead.
            let (a, _) = scene.interval_endpoints(membrane);
            let near_a = locations
                .iter()
                .filter(|&&x| {
                    crate::geometry::circle_dist(x, a, scene.period) < scene.period / 4.0
                })
                .count();
            chi_square(
                &[near_a as u64, (locations.len() - near_a) as u64],
                &[locations.len() as f64 / 2.0; 2],
            )
        }
    };
    Ok((stat, p, locations))
}

/// Trace-clock consistency: the hitting split of the membrane process with
/// the clock stopped inside the redistribution children, against the
/// redistribution process itself, and against the exact solver in 1D.
#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub epsilon: f64,
    pub x_split: BTreeMap<String, f64>,
    pub y_split: BTreeMap<String, f64>,
    pub reference: Option<BTreeMap<String, f64>>,
    pub tv_xy: f64,
    pub mean_trace_time: f64,
    pub mean_elapsed: f64,
}

pub fn trace_consistency(
    scene: &Scene,
    query: &HittingQuery,
    eps: f64,
    n: usize,
    seed: u64,
    sim: &SimOverrides,
) -> Result<TraceReport, VerifyError> {
    let tree = build_tree(scene)?;
    let targets: Vec<usize> = query
        .targets
        .iter()
        .map(|id| scene.index_of(id))
        .collect::<Result<_, _>>()?;
    let excluded: Vec<usize> = query
        .redistribution
        .iter()
        .map(|id| scene.index_of(id))
        .collect::<Result<_, _>>()?;
    let start = match &query.start {
        crate::predictor::StartSpec::Point(p) => *p,
        _ => {
            return Err(VerifyError::InvalidSpec(
                "trace consistency needs a concrete start point".into(),
            ))
        }
    };

    let mut cfg = XSimConfig::for_scene(scene, eps);
    cfg.rng_seed = seed;
    sim.apply(&mut cfg);
    let outcomes = run_x_until_hit_many(scene, &tree, &cfg, start, &targets, &excluded, n)?;
    let mut x_split: BTreeMap<String, f64> = BTreeMap::new();
    for id in &query.targets {
        x_split.insert(id.clone(), 0.0);
    }
    let mut trace_sum = 0.0;
    let mut time_sum = 0.0;
    for o in &outcomes {
        *x_split.get_mut(&scene.domains[o.membrane].id).unwrap() += 1.0 / n as f64;
        trace_sum += o.trace_time;
        time_sum += o.time;
    }

    let mut ycfg = YSimConfig::for_scene(scene);
    ycfg.rng_seed = seed + 1;
    let (y_dist, _) = run_y_many(scene, &tree, query, &ycfg, n)?;

    let reference = if scene.dimension == 1 {
        Some(crate::solve::one_d::hitting_1d(scene, &tree, query)?.mass)
    } else {
        None
    };

    Ok(TraceReport {
        epsilon: eps,
        tv_xy: tv_distance(&x_split, &y_dist.mass),
        x_split,
        y_split: y_dist.mass,
        reference,
        mean_trace_time: trace_sum / n as f64,
        mean_elapsed: time_sum / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes;

    #[test]
    fn uniformity_calibration() {
        let scene = scenes::scene_a();
        // Uniform synthetic points inside the leaf pass at the 0.01 level in
        // almost every replicate; a point mass fails catastrophically.
        use rand::Rng;
        use rand::SeedableRng;
        let mut fails = 0;
        for seed in 0..200u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point> = (0..400)
                .map(|_| Point::d1(0.3 + 0.4 * rng.gen::<f64>()))
                .collect();
            let (_, p) = within_cell_uniformity(&scene, 0, &pts, 10).unwrap();
            if p < 0.01 {
                fails += 1;
            }
        }
        assert!(fails <= 6, "{fails} of 200 uniform replicates rejected");

        let clump: Vec<Point> = (0..400).map(|_| Point::d1(0.31)).collect();
        let (_, p) = within_cell_uniformity(&scene, 0, &clump, 10).unwrap();
        assert!(p < 1e-6);

        assert!(matches!(
            within_cell_uniformity(&scene, 0, &[], 10),
            Err(VerifyError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn trace_agrees_on_a_symmetric_two_dimensional_scene() {
        use crate::geometry::{Domain, Scene, Shape};
        use num::rational::Rational64;
        let ball = |id: &str, cx: f64, cy: f64, r: f64| Domain {
            id: id.into(),
            shape: Shape::Ball {
                center: Point::d2(cx, cy),
                radius: r,
            },
            permeability_exponent: Rational64::from_integer(1),
        };
        let scene = Scene::new(
            2,
            1.0,
            vec![
                ball("T1", 0.35, 0.5, 0.1),
                ball("T2", 0.65, 0.5, 0.1),
                ball("D", 0.5, 0.5, 0.45),
            ],
        )
        .unwrap();
        let tree = build_tree(&scene).unwrap();
        let query = HittingQuery {
            ambient: tree.node_of("D").unwrap(),
            redistribution: vec![],
            targets: vec!["T1".into(), "T2".into()],
            start: crate::predictor::StartSpec::Point(Point::d2(0.5, 0.25)),
        };
        let n = 1500;
        let report = trace_consistency(&scene, &query, 0.05, n, 7, &SimOverrides::default()).unwrap();
        let se = (0.25_f64 / n as f64).sqrt();
        assert!(
            (report.x_split["T1"] - 0.5).abs() < 4.0 * se,
            "{:?}",
            report.x_split
        );
        assert!(
            (report.y_split["T1"] - 0.5).abs() < 4.0 * se,
            "{:?}",
            report.y_split
        );
        assert!(report.tv_xy < 6.0 * se, "tv {}", report.tv_xy);
    }

    #[test]
    fn end_to_end_rejects_bad_specs() {
        let spec = ExperimentSpec {
            scene: scenes::scene_a(),
            epsilon_ladder: vec![0.05, 0.05],
            b: ExponentQ::new(1, 2),
            starts: vec![Point::d1(0.5)],
            particles: 2000,
            seed: 1,
            tv_tolerance: 0.05,
            sim: SimOverrides::default(),
        };
        assert!(matches!(end_to_end(&spec), Err(VerifyError::InvalidSpec(_))));
        let spec2 = ExperimentSpec {
            epsilon_ladder: vec![0.05],
            particles: 10,
            ..spec
        };
        assert!(matches!(end_to_end(&spec2), Err(VerifyError::InvalidSpec(_))));
    }

    #[test]
    fn settled_particles_are_uniform_within_the_trap() {
        // Scene A, b = 1/2: by t = eps^{-1/2} the particle has relaxed
        // inside the trapping interval; the final-position law restricted to
        // it passes a chi-square uniformity test.
        let scene = scenes::scene_a();
        let tree = build_tree(&scene).unwrap();
        let eps = 0.02;
        let mut cfg = crate::simulate::XSimConfig::for_scene(&scene, eps);
        cfg.rng_seed = 4;
        cfg.max_step = 2e-3;
        cfg.boundary_refine = 1.0;
        let t = eps.powf(-0.5);
        let results =
            run_x_to_time_many(&scene, &tree, &cfg, Point::d1(0.5), t, 3000).unwrap();
        let positions: Vec<Point> = results.iter().map(|r| r.final_position).collect();
        let (_, p) = within_cell_uniformity(&scene, 0, &positions, 10).unwrap();
        assert!(p >= 0.01, "uniformity rejected: p = {p}");
    }

    #[test]
    fn reports_are_reproducible_from_spec_and_seed() {
        let spec = ExperimentSpec {
            scene: scenes::scene_a(),
            epsilon_ladder: vec![0.05],
            b: ExponentQ::new(1, 2),
            starts: vec![Point::d1(0.5)],
            particles: 1000,
            seed: 77,
            tv_tolerance: 0.1,
            sim: SimOverrides::default(),
        };
        let a = end_to_end(&spec).unwrap();
        let b = end_to_end(&spec).unwrap();
        assert_eq!(a[0].empirical, b[0].empirical);
        assert_eq!(a[0].tv.to_bits(), b[0].tv.to_bits());
    }

    #[test]
    fn single_domain_end_to_end_settles_uniformly() {
        // Scene A at b = 1/2: the particle stays in the trap and the law at
        // t = eps^{-1/2} is near-uniform on it.
        let spec = ExperimentSpec {
            scene: scenes::scene_a(),
            epsilon_ladder: vec![0.05],
            b: ExponentQ::new(1, 2),
            starts: vec![Point::d1(0.5)],
            particles: 2000,
            seed: 9,
            tv_tolerance: 0.08,
            sim: SimOverrides {
                jump_delta: Some(0.008),
                max_step: Some(2e-3),
                boundary_refine: Some(1.0),
                ..Default::default()
            },
        };
        let reports = end_to_end(&spec).unwrap();
        assert_eq!(reports.len(), 1);
        let r = &reports[0];
        assert!(
            r.pass,
            "tv {} empirical {:?} predicted {:?}",
            r.tv, r.empirical, r.predicted
        );
        assert!(r.predicted.weight("D1") == 1.0);
    }
}
