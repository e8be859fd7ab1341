//! The asymmetric-membrane particle process.
//!
//! Between membranes the particle is a Brownian motion. When a move crosses a
//! membrane it is stopped at the crossing point and immediately kicked a
//! fixed small distance `jump_delta` off the membrane: toward the domain
//! interior with probability `1/(1 + eps_k)`, toward the exterior with
//! probability `eps_k/(1 + eps_k)`. The kick is instantaneous. Occupation
//! time per cell, membrane contacts, and a trace clock (time accumulated
//! outside a designated set of subtrees) are recorded along the way.

use super::engine::{cell_slot, subtree_mask, Hit, Layout, SimulateError, StepEvent, Walker};
use super::streams::particle_rng;
use crate::geometry::{signed_distance, ContainmentTree, Node, Point, Scene};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Configuration of the membrane process simulator.
#[derive(Debug, Clone)]
pub struct XSimConfig {
    pub epsilon: f64,
    /// Membrane kick size, torus units; must stay below a quarter of the
    /// smallest membrane gap.
    pub jump_delta: f64,
    /// Largest time step.
    pub max_step: f64,
    /// Step-size multiplier near membranes: dt = boundary_refine * d^2.
    pub boundary_refine: f64,
    pub rng_seed: u64,
    /// Per-particle simulated-time budget; exceeding it is an error.
    pub time_budget: f64,
    pub record_hits: bool,
}

impl XSimConfig {
    /// Defaults for a scene: `jump_delta = min(eps, min_gap/10)/4`.
    pub fn for_scene(scene: &Scene, epsilon: f64) -> Self {
        let gap = scene.min_membrane_gap();
        XSimConfig {
            epsilon,
            jump_delta: (epsilon.min(gap / 10.0)) / 4.0,
            max_step: 1e-3,
            boundary_refine: 0.25,
            rng_seed: 42,
            time_budget: 1e4,
            record_hits: false,
        }
    }

    pub fn validate(&self, scene: &Scene) -> Result<(), SimulateError> {
        if !(self.epsilon > 0.0) {
            return Err(SimulateError::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.jump_delta > 0.0) || !(self.max_step > 0.0) || !(self.boundary_refine > 0.0) {
            return Err(SimulateError::InvalidConfig(
                "jump_delta, max_step and boundary_refine must be positive".into(),
            ));
        }
        let gap = scene.min_membrane_gap();
        if !scene.domains.is_empty() && self.jump_delta >= gap / 4.0 {
            return Err(SimulateError::InvalidConfig(format!(
                "jump_delta {} must stay below a quarter of the smallest membrane gap {}",
                self.jump_delta, gap
            )));
        }
        Ok(())
    }

    fn dt_floor(&self) -> f64 {
        let f = self.jump_delta / 8.0;
        f * f
    }
}

/// One membrane contact: when, which membrane, and which way the kick went.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitEvent {
    pub time: f64,
    pub membrane: usize,
    pub inward: bool,
}

/// Everything recorded along one particle trajectory.
#[derive(Debug, Clone)]
pub struct ParticleRunResult {
    pub final_position: Point,
    pub final_cell: Node,
    pub hit_log: Vec<HitEvent>,
    /// Occupation time by cell slot (root first, then domains in order).
    pub occupation_time: Vec<f64>,
    pub trace_time: f64,
    pub elapsed: f64,
    pub steps: u64,
}

impl ParticleRunResult {
    pub fn occupation_by_id(&self, scene: &Scene) -> Vec<(String, f64)> {
        let mut out = vec![("D0".to_string(), self.occupation_time[0])];
        for (i, d) in scene.domains.iter().enumerate() {
            out.push((d.id.clone(), self.occupation_time[i + 1]));
        }
        out
    }
}

struct XRun<'a> {
    walker: Walker<'a>,
    scene: &'a Scene,
    tree: &'a ContainmentTree,
    cfg: &'a XSimConfig,
    p_in: Vec<f64>,
    occupation: Vec<f64>,
    trace_time: f64,
    trace_excluded: Option<Vec<bool>>,
    hits: Vec<HitEvent>,
}

impl<'a> XRun<'a> {
    fn new(
        scene: &'a Scene,
        tree: &'a ContainmentTree,
        layout: &'a Layout,
        cfg: &'a XSimConfig,
        start: Point,
        trace_exclude: Option<&[usize]>,
    ) -> Result<Self, SimulateError> {
        cfg.validate(scene)?;
        let start = start.reduced(scene.dimension, scene.period);
        let cell = crate::geometry::locate_cell_unchecked(scene, tree, &start)?;
        let mut walker = Walker::new(scene, layout, start, cell);
        walker.max_step = cfg.max_step;
        walker.refine = cfg.boundary_refine;
        walker.dt_floor = cfg.dt_floor();
        Ok(XRun {
            walker,
            scene,
            tree,
            cfg,
            p_in: (0..scene.domains.len())
                .map(|k| 1.0 / (1.0 + scene.permeability_at(k, cfg.epsilon)))
                .collect(),
            occupation: vec![0.0; scene.domains.len() + 1],
            trace_time: 0.0,
            trace_excluded: trace_exclude.map(|roots| subtree_mask(scene, tree, roots)),
            hits: Vec::new(),
        })
    }

    fn charge(&mut self, dt: f64) {
        let slot = cell_slot(self.walker.cell);
        self.occupation[slot] += dt;
        let excluded = self
            .trace_excluded
            .as_ref()
            .map_or(false, |mask| mask[slot]);
        if !excluded {
            self.trace_time += dt;
        }
    }

    /// Resolve a membrane contact with the asymmetric kick.
    fn kick(&mut self, feature: usize, at: Point, rng: &mut ChaCha8Rng) {
        let k = self.walker.layout.feature_domain(feature);
        let inward = rng.gen::<f64>() < self.p_in[k];
        self.walker.pos = self
            .walker
            .layout
            .jump_from(feature, &at, self.cfg.jump_delta, inward);
        self.walker.cell = if inward {
            Node::Dom(k)
        } else {
            self.tree.parent_node(k)
        };
        if self.cfg.record_hits {
            self.hits.push(HitEvent {
                time: self.walker.t,
                membrane: k,
                inward,
            });
        }
    }

    /// A start sitting exactly on a membrane resolves its kick immediately
    /// (the process leaves the membrane with the asymmetric law, not the
    /// symmetric one).
    fn resolve_membrane_start(&mut self, rng: &mut ChaCha8Rng) {
        let tol = 1e-12 * self.scene.period;
        let layout = self.walker.layout;
        let feature = match self.scene.dimension {
            1 => layout
                .points
                .iter()
                .position(|f| crate::geometry::circle_dist(f.pos, self.walker.pos.0[0], self.scene.period) <= tol),
            _ => layout.circles.iter().position(|c| {
                (crate::geometry::torus_dist(&self.walker.pos, &c.center, 2, self.scene.period)
                    - c.radius)
                    .abs()
                    <= tol
            }),
        };
        if let Some(f) = feature {
            let at = self.walker.pos;
            self.kick(f, at, rng);
        }
    }

    fn into_result(self) -> ParticleRunResult {
        // The cell is tracked incrementally through kick events only; it must
        // agree with a fresh geometric lookup at the end of every run.
        debug_assert_eq!(
            crate::geometry::locate_cell_unchecked(self.scene, self.tree, &self.walker.pos).ok(),
            Some(self.walker.cell),
            "cell bookkeeping diverged from geometry"
        );
        ParticleRunResult {
            final_position: self.walker.pos,
            final_cell: self.walker.cell,
            hit_log: self.hits,
            occupation_time: self.occupation,
            trace_time: self.trace_time,
            elapsed: self.walker.t,
            steps: self.walker.steps,
        }
    }
}

/// Run one particle to a fixed time.
pub fn run_x_to_time(
    scene: &Scene,
    tree: &ContainmentTree,
    cfg: &XSimConfig,
    start: Point,
    t_final: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ParticleRunResult, SimulateError> {
    let layout = Layout::new(scene);
    run_x_to_time_with(scene, tree, &layout, cfg, start, t_final, None, rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_x_to_time_with(
    scene: &Scene,
    tree: &ContainmentTree,
    layout: &Layout,
    cfg: &XSimConfig,
    start: Point,
    t_final: f64,
    trace_exclude: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Result<ParticleRunResult, SimulateError> {
    if t_final > cfg.time_budget {
        return Err(SimulateError::TimeBudgetExceeded {
            budget: cfg.time_budget,
        });
    }
    let mut run = XRun::new(scene, tree, layout, cfg, start, trace_exclude)?;
    run.resolve_membrane_start(rng);
    while run.walker.t < t_final {
        let cap = t_final - run.walker.t;
        match run.walker.step(cap, rng)? {
            StepEvent::Moved { dt } => run.charge(dt),
            StepEvent::Contact { dt, hit, at } => {
                run.charge(dt);
                match hit {
                    Hit::Membrane(feature) => run.kick(feature, at, rng),
                    Hit::Absorber(_) => unreachable!("to-time runs have no absorbers"),
                }
            }
        }
    }
    Ok(run.into_result())
}

/// Outcome of a first-hitting run: the membrane reached, elapsed and trace
/// clocks, and the exact contact point.
#[derive(Debug, Clone)]
pub struct HitOutcome {
    pub membrane: usize,
    pub time: f64,
    pub trace_time: f64,
    pub position: Point,
    pub steps: u64,
}

/// Run one particle until it touches the boundary of any target domain.
/// Time spent inside the subtrees listed in `trace_exclude` does not count
/// toward the trace clock.
pub fn run_x_until_hit(
    scene: &Scene,
    tree: &ContainmentTree,
    cfg: &XSimConfig,
    start: Point,
    targets: &[usize],
    trace_exclude: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<HitOutcome, SimulateError> {
    let layout = Layout::new(scene);
    run_x_until_hit_with(scene, tree, &layout, cfg, start, targets, trace_exclude, rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_x_until_hit_with(
    scene: &Scene,
    tree: &ContainmentTree,
    layout: &Layout,
    cfg: &XSimConfig,
    start: Point,
    targets: &[usize],
    trace_exclude: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<HitOutcome, SimulateError> {
    if targets.is_empty() {
        return Err(SimulateError::InvalidConfig("no target membranes".into()));
    }
    // A start already on a target membrane is an immediate hit.
    for &k in targets {
        if signed_distance(scene, k, &start).abs() <= 1e-12 * scene.period {
            return Ok(HitOutcome {
                membrane: k,
                time: 0.0,
                trace_time: 0.0,
                position: start,
                steps: 0,
            });
        }
    }
    let mut run = XRun::new(scene, tree, layout, cfg, start, Some(trace_exclude))?;
    run.resolve_membrane_start(rng);
    loop {
        if run.walker.t >= cfg.time_budget {
            return Err(SimulateError::TimeBudgetExceeded {
                budget: cfg.time_budget,
            });
        }
        match run.walker.step(f64::INFINITY, rng)? {
            StepEvent::Moved { dt } => run.charge(dt),
            StepEvent::Contact { dt, hit, at } => {
                run.charge(dt);
                match hit {
                    Hit::Membrane(feature) => {
                        let k = run.walker.layout.feature_domain(feature);
                        if targets.contains(&k) {
                            return Ok(HitOutcome {
                                membrane: k,
                                time: run.walker.t,
                                trace_time: run.trace_time,
                                position: at,
                                steps: run.walker.steps,
                            });
                        }
                        run.kick(feature, at, rng);
                    }
                    Hit::Absorber(_) => unreachable!("membrane-target runs have no absorbers"),
                }
            }
        }
    }
}

/// Run one particle until it touches one of the bare absorbing points
/// (1D). The process interacts with every membrane of the scene on the way;
/// the absorbers merely stop the walk. Returns the index of the absorber hit
/// and the elapsed time.
pub fn run_x_until_absorbed(
    scene: &Scene,
    tree: &ContainmentTree,
    cfg: &XSimConfig,
    start: Point,
    absorbers: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<(usize, f64), SimulateError> {
    let mut layout = Layout::new(scene);
    layout.absorbers = absorbers.to_vec();
    run_x_until_absorbed_with(scene, tree, &layout, cfg, start, rng)
}

pub(crate) fn run_x_until_absorbed_with(
    scene: &Scene,
    tree: &ContainmentTree,
    layout: &Layout,
    cfg: &XSimConfig,
    start: Point,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, f64), SimulateError> {
    for (j, &a) in layout.absorbers.iter().enumerate() {
        if crate::geometry::circle_dist(start.0[0], a, scene.period) <= 1e-12 * scene.period {
            return Ok((j, 0.0));
        }
    }
    let mut run = XRun::new(scene, tree, layout, cfg, start, None)?;
    run.resolve_membrane_start(rng);
    loop {
        if run.walker.t >= cfg.time_budget {
            return Err(SimulateError::TimeBudgetExceeded {
                budget: cfg.time_budget,
            });
        }
        match run.walker.step(f64::INFINITY, rng)? {
            StepEvent::Moved { dt } => run.charge(dt),
            StepEvent::Contact { dt, hit, at } => {
                run.charge(dt);
                match hit {
                    Hit::Membrane(feature) => run.kick(feature, at, rng),
                    Hit::Absorber(j) => return Ok((j, run.walker.t)),
                }
            }
        }
    }
}

/// Fan [`run_x_until_absorbed`] over `n` particles.
pub fn run_x_until_absorbed_many(
    scene: &Scene,
    tree: &ContainmentTree,
    cfg: &XSimConfig,
    start: Point,
    absorbers: &[f64],
    n: usize,
) -> Result<Vec<(usize, f64)>, SimulateError> {
    let mut layout = Layout::new(scene);
    layout.absorbers = absorbers.to_vec();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(cfg.rng_seed, i as u64);
            run_x_until_absorbed_with(scene, tree, &layout, cfg, start, &mut rng)
        })
        .collect()
}

/// Fan a to-time run over `n` particles with per-particle streams; results
/// come back in particle order, so aggregation order never depends on the
/// scheduler.
pub fn run_x_to_time_many(
    scene: &Scene,
    tree: &ContainmentTree,
    cfg: &XSimConfig,
    start: Point,
    t_final: f64,
    n: usize,
) -> Result<Vec<ParticleRunResult>, SimulateError> {
    let layout = Layout::new(scene);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(cfg.rng_seed, i as u64);
            run_x_to_time_with(scene, tree, &layout, cfg, start, t_final, None, &mut rng)
        })
        .collect()
}

/// Fan an until-hit run over `n` particles.
pub fn run_x_until_hit_many(
    scene: &Scene,
    tree: &ContainmentTree,
    cfg: &XSimConfig,
    start: Point,
    targets: &[usize],
    trace_exclude: &[usize],
    n: usize,
) -> Result<Vec<HitOutcome>, SimulateError> {
    let layout = Layout::new(scene);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(cfg.rng_seed, i as u64);
            run_x_until_hit_with(
                scene,
                tree,
                &layout,
                cfg,
                start,
                targets,
                trace_exclude,
                &mut rng,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_tree;
    use crate::scenes;

    #[test]
    fn plain_brownian_motion_spreads_uniformly() {
        let scene = crate::geometry::Scene::new(1, 1.0, vec![]).unwrap();
        let tree = build_tree(&scene).unwrap();
        let mut cfg = XSimConfig::for_scene(&scene, 0.1);
        cfg.jump_delta = 0.01;
        cfg.max_step = 5e-3;
        let results = run_x_to_time_many(&scene, &tree, &cfg, Point::d1(0.5), 3.0, 4000).unwrap();
        // Chi-square against uniform over 10 bins at t large enough to mix.
        let mut counts = [0usize; 10];
        for r in &results {
            counts[((r.final_position.0[0] * 10.0) as usize).min(9)] += 1;
        }
        let expected = results.len() as f64 / 10.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 9 dof: the 0.999 quantile is 27.9.
        assert!(stat < 27.9, "chi-square statistic {stat}, counts {counts:?}");
    }

    #[test]
    fn occupation_times_conserve_elapsed_time() {
        let scene = scenes::scene_a();
        let tree = build_tree(&scene).unwrap();
        let cfg = XSimConfig::for_scene(&scene, 0.1);
        let mut rng = particle_rng(7, 0);
        let r = run_x_to_time(&scene, &tree, &cfg, Point::d1(0.5), 5.0, &mut rng).unwrap();
        let total: f64 = r.occupation_time.iter().sum();
        assert!((total - r.elapsed).abs() < cfg.max_step);
        assert!((r.elapsed - 5.0).abs() < 1e-9);
        // Cell bookkeeping must agree with a fresh geometric lookup.
        let located =
            crate::geometry::locate_cell_unchecked(&scene, &tree, &r.final_position).unwrap();
        assert_eq!(located, r.final_cell);
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let scene = scenes::scene_a();
        let tree = build_tree(&scene).unwrap();
        let cfg = XSimConfig::for_scene(&scene, 0.05);
        let a = run_x_to_time_many(&scene, &tree, &cfg, Point::d1(0.4), 2.0, 8).unwrap();
        let b = run_x_to_time_many(&scene, &tree, &cfg, Point::d1(0.4), 2.0, 8).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.final_position.0, y.final_position.0);
            assert_eq!(x.steps, y.steps);
            assert_eq!(x.occupation_time, y.occupation_time);
        }
    }

    #[test]
    fn start_on_target_membrane_hits_immediately() {
        let scene = scenes::scene_a();
        let tree = build_tree(&scene).unwrap();
        let cfg = XSimConfig::for_scene(&scene, 0.05);
        let mut rng = particle_rng(1, 0);
        let out =
            run_x_until_hit(&scene, &tree, &cfg, Point::d1(0.3), &[0], &[], &mut rng).unwrap();
        assert_eq!(out.time, 0.0);
        assert_eq!(out.membrane, 0);
    }

    #[test]
    fn membrane_split_follows_first_step_renewal() {
        // From the membrane with symmetric absorbers at +-0.2, the exterior
        // side wins with probability eps/(1+eps), independent of jump_delta.
        let scene = scenes::scene_a();
        let tree = build_tree(&scene).unwrap();
        let eps = 0.1;
        let n = 4000;
        for delta in [0.01, 0.005] {
            let mut cfg = XSimConfig::for_scene(&scene, eps);
            cfg.jump_delta = delta;
            let out =
                run_x_until_absorbed_many(&scene, &tree, &cfg, Point::d1(0.3), &[0.1, 0.5], n)
                    .unwrap();
            let outside = out.iter().filter(|(j, _)| *j == 0).count() as f64 / n as f64;
            let expect = eps / (1.0 + eps);
            let se = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (outside - expect).abs() < 4.0 * se + 1e-3,
                "delta={delta}: outside {outside} vs {expect}"
            );
        }
    }
}
