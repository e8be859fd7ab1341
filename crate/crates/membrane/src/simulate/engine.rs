//! Shared stepping machinery for the particle engines.
//!
//! Brownian increments are exact Gaussians at any step size; all the care is
//! near membranes. The step shrinks quadratically with the distance to the
//! nearest relevant surface (with a hard floor), and every move is swept for
//! its first membrane crossing. On a crossing the particle is placed at the
//! geometric crossing point, the elapsed time is charged by linear
//! interpolation, and the caller decides what the contact means (asymmetric
//! jump, absorption, redistribution).

use crate::geometry::{circle_dist, ContainmentTree, Node, Point, Scene, Shape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("adaptive step floored out without progress near {pos:?} at t={time}")]
    StepUnderflow { pos: [f64; 2], time: f64 },
    #[error("time budget of {budget} time units exceeded")]
    TimeBudgetExceeded { budget: f64 },
    #[error("collar of width {width} reaches another membrane (closest at {closest})")]
    CollarTooWide { width: f64, closest: f64 },
    #[error("geometry error: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
}

const MAX_FLOORED_RUN: u64 = 50_000_000;

/// One membrane feature: a boundary point (1D) or circle (2D).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Feature1d {
    pub pos: f64,
    pub domain: usize,
    /// True at a left endpoint: the domain interior lies to the right.
    pub interior_right: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Circle {
    pub center: Point,
    pub radius: f64,
    pub domain: usize,
}

/// What a move ran into: a membrane feature or a plain absorbing point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Hit {
    Membrane(usize),
    Absorber(usize),
}

/// Precomputed membrane geometry for a scene, with an on/off mask so the Y
/// engine can restrict attention to the membranes of its query, plus
/// optional bare absorbing points (1D) that stop a walk on first touch.
pub(crate) struct Layout {
    pub dim: usize,
    pub period: f64,
    pub points: Vec<Feature1d>, // sorted by position (1D)
    pub circles: Vec<Circle>,   // (2D)
    pub active: Vec<bool>,      // per feature
    pub absorbers: Vec<f64>,    // 1D absorbing points
}

impl Layout {
    pub fn new(scene: &Scene) -> Self {
        let mut points = Vec::new();
        let mut circles = Vec::new();
        for (k, d) in scene.domains.iter().enumerate() {
            match &d.shape {
                Shape::Interval { .. } => {
                    let (a, b) = scene.interval_endpoints(k);
                    points.push(Feature1d {
                        pos: a,
                        domain: k,
                        interior_right: true,
                    });
                    points.push(Feature1d {
                        pos: b,
                        domain: k,
                        interior_right: false,
                    });
                }
                Shape::Ball { center, radius } => circles.push(Circle {
                    center: *center,
                    radius: *radius,
                    domain: k,
                }),
            }
        }
        points.sort_by(|a, b| a.pos.partial_cmp(&b.pos).unwrap());
        let n = points.len().max(circles.len());
        Layout {
            dim: scene.dimension,
            period: scene.period,
            points,
            circles,
            active: vec![true; n],
            absorbers: Vec::new(),
        }
    }

    /// Restrict to the membranes of the given domains.
    pub fn retain_domains(&mut self, domains: &[usize]) {
        match self.dim {
            1 => {
                for (i, p) in self.points.iter().enumerate() {
                    self.active[i] = domains.contains(&p.domain);
                }
            }
            _ => {
                for (i, c) in self.circles.iter().enumerate() {
                    self.active[i] = domains.contains(&c.domain);
                }
            }
        }
    }

    /// Distance from `p` to the nearest active membrane or absorber
    /// (infinite if none).
    pub fn nearest_distance(&self, p: &Point) -> f64 {
        let mut best = f64::INFINITY;
        match self.dim {
            1 => {
                for (i, f) in self.points.iter().enumerate() {
                    if self.active[i] {
                        best = best.min(circle_dist(p.0[0], f.pos, self.period));
                    }
                }
                for &a in &self.absorbers {
                    best = best.min(circle_dist(p.0[0], a, self.period));
                }
            }
            _ => {
                for (i, c) in self.circles.iter().enumerate() {
                    if self.active[i] {
                        let d = crate::geometry::torus_dist(p, &c.center, 2, self.period)
                            - c.radius;
                        best = best.min(d.abs());
                    }
                }
            }
        }
        best
    }

    fn first_point_crossing(
        &self,
        x: f64,
        dx: f64,
        n: usize,
        pos_of: &dyn Fn(usize) -> Option<f64>,
    ) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            let Some(p) = pos_of(i) else { continue };
            let off = if dx > 0.0 {
                wrap(p - x, self.period)
            } else {
                wrap(x - p, self.period)
            };
            if off > 0.0 && off <= dx.abs() {
                let frac = off / dx.abs();
                if best.map_or(true, |(bf, _)| frac < bf) {
                    best = Some((frac, i));
                }
            }
        }
        best
    }

    /// First contact of the straight move from `p` by displacement `d`,
    /// as (fraction, what was hit, crossing point).
    pub fn first_crossing(&self, p: &Point, d: [f64; 2]) -> Option<(f64, Hit, Point)> {
        match self.dim {
            1 => {
                let dx = d[0];
                if dx == 0.0 {
                    return None;
                }
                let membrane = self
                    .first_point_crossing(p.0[0], dx, self.points.len(), &|i| {
                        self.active[i].then(|| self.points[i].pos)
                    })
                    .map(|(f, i)| (f, Hit::Membrane(i), Point::d1(self.points[i].pos)));
                let absorber = self
                    .first_point_crossing(p.0[0], dx, self.absorbers.len(), &|i| {
                        Some(self.absorbers[i])
                    })
                    .map(|(f, i)| (f, Hit::Absorber(i), Point::d1(self.absorbers[i])));
                match (membrane, absorber) {
                    (Some(m), Some(a)) => Some(if m.0 <= a.0 { m } else { a }),
                    (m, a) => m.or(a),
                }
            }
            _ => {
                let mut best: Option<(f64, usize)> = None;
                for (i, c) in self.circles.iter().enumerate() {
                    if !self.active[i] {
                        continue;
                    }
                    let mut rel = [0.0_f64; 2];
                    for a in 0..2 {
                        let mut r = (p.0[a] - c.center.0[a]).rem_euclid(self.period);
                        if r > self.period / 2.0 {
                            r -= self.period;
                        }
                        rel[a] = r;
                    }
                    let aa = d[0] * d[0] + d[1] * d[1];
                    if aa == 0.0 {
                        continue;
                    }
                    let bb = 2.0 * (rel[0] * d[0] + rel[1] * d[1]);
                    let cc = rel[0] * rel[0] + rel[1] * rel[1] - c.radius * c.radius;
                    let disc = bb * bb - 4.0 * aa * cc;
                    if disc < 0.0 {
                        continue;
                    }
                    let sq = disc.sqrt();
                    for t in [(-bb - sq) / (2.0 * aa), (-bb + sq) / (2.0 * aa)] {
                        if t > 1e-12 && t <= 1.0 && best.map_or(true, |(bt, _)| t < bt) {
                            best = Some((t, i));
                        }
                    }
                }
                best.map(|(t, i)| {
                    let q = Point::d2(
                        (p.0[0] + t * d[0]).rem_euclid(self.period),
                        (p.0[1] + t * d[1]).rem_euclid(self.period),
                    );
                    (t, Hit::Membrane(i), q)
                })
            }
        }
    }

    pub fn feature_domain(&self, idx: usize) -> usize {
        match self.dim {
            1 => self.points[idx].domain,
            _ => self.circles[idx].domain,
        }
    }

    /// Position reached by jumping `delta` from a crossing point on feature
    /// `idx`, toward the domain interior (`inward`) or away from it.
    pub fn jump_from(&self, idx: usize, at: &Point, delta: f64, inward: bool) -> Point {
        match self.dim {
            1 => {
                let f = &self.points[idx];
                let toward_interior = if f.interior_right { 1.0 } else { -1.0 };
                let dir = if inward { toward_interior } else { -toward_interior };
                Point::d1(wrap(f.pos + dir * delta, self.period))
            }
            _ => {
                let c = &self.circles[idx];
                let mut rel = [0.0_f64; 2];
                for a in 0..2 {
                    let mut r = (at.0[a] - c.center.0[a]).rem_euclid(self.period);
                    if r > self.period / 2.0 {
                        r -= self.period;
                    }
                    rel[a] = r;
                }
                let norm = (rel[0] * rel[0] + rel[1] * rel[1]).sqrt().max(1e-300);
                let sign = if inward { -1.0 } else { 1.0 };
                let scale = (c.radius + sign * delta) / norm;
                Point::d2(
                    (c.center.0[0] + rel[0] * scale).rem_euclid(self.period),
                    (c.center.0[1] + rel[1] * scale).rem_euclid(self.period),
                )
            }
        }
    }
}

pub(crate) fn wrap(x: f64, period: f64) -> f64 {
    let m = x % period;
    if m < 0.0 {
        m + period
    } else {
        m
    }
}

/// Cell slot for occupancy vectors: root is 0, domain `i` is `i + 1`.
pub fn cell_slot(node: Node) -> usize {
    match node {
        Node::Root => 0,
        Node::Dom(i) => i + 1,
    }
}

/// Membership mask over cell slots for the union of the given subtrees.
pub fn subtree_mask(scene: &Scene, tree: &ContainmentTree, roots: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; scene.domains.len() + 1];
    for &r in roots {
        let mut stack = vec![r];
        while let Some(i) = stack.pop() {
            mask[i + 1] = true;
            stack.extend_from_slice(&tree.children[i]);
        }
    }
    mask
}

/// Extra surface the step size must respect besides the membranes.
#[derive(Clone, Copy)]
pub(crate) enum Refine {
    None,
    /// Collar surfaces at +-width around the membrane of `domain`.
    Collar { domain: usize, width: f64 },
    /// A curved reflecting wall: steps must shrink near it so that the
    /// radial fold stays within the curvature tolerance, but only down to
    /// its own floor (crossing resolution is not needed at a wall).
    CurvedWall {
        center: Point,
        radius: f64,
        floor: f64,
    },
}

pub(crate) struct Walker<'a> {
    pub scene: &'a Scene,
    pub layout: &'a Layout,
    pub pos: Point,
    pub cell: Node,
    pub t: f64,
    pub max_step: f64,
    pub refine: f64,
    pub dt_floor: f64,
    pub floored_run: u64,
    pub steps: u64,
    pub refine_extra: Refine,
}

pub(crate) enum StepEvent {
    Moved { dt: f64 },
    Contact { dt: f64, hit: Hit, at: Point },
}

impl<'a> Walker<'a> {
    pub fn new(scene: &'a Scene, layout: &'a Layout, pos: Point, cell: Node) -> Self {
        Walker {
            scene,
            layout,
            pos,
            cell,
            t: 0.0,
            max_step: 1e-3,
            refine: 0.25,
            dt_floor: 1e-10,
            floored_run: 0,
            steps: 0,
            refine_extra: Refine::None,
        }
    }

    fn step_size(&self, cap: f64) -> f64 {
        let mut d = self.layout.nearest_distance(&self.pos);
        let mut dt = match self.refine_extra {
            Refine::None => f64::INFINITY,
            Refine::Collar { domain, width } => {
                let h = crate::geometry::signed_distance(self.scene, domain, &self.pos);
                d = d.min((width - h.abs()).abs());
                f64::INFINITY
            }
            Refine::CurvedWall {
                center,
                radius,
                floor,
            } => {
                let d_wall = (crate::geometry::torus_dist(
                    &self.pos,
                    &center,
                    2,
                    self.layout.period,
                ) - radius)
                    .abs();
                (self.refine * d_wall * d_wall).max(floor)
            }
        };
        dt = dt
            .min((self.refine * d * d).max(self.dt_floor))
            .min(self.max_step);
        dt.min(cap)
    }

    /// Advance by one step, stopping at the first membrane contact. The
    /// contact leaves the particle exactly on the membrane; the caller
    /// resolves it. `cap` bounds the time advance.
    pub fn step(&mut self, cap: f64, rng: &mut ChaCha8Rng) -> Result<StepEvent, SimulateError> {
        let dt = self.step_size(cap);
        self.steps += 1;
        let sigma = dt.sqrt();
        let mut d = [0.0_f64; 2];
        let clamp = self.layout.period / 5.0;
        for a in 0..self.scene.dimension {
            let z: f64 = rng.sample(StandardNormal);
            // Tail clamp keeps wrap-aware crossing detection unambiguous;
            // beyond five sigma at the step sizes in use it never fires.
            d[a] = (sigma * z).clamp(-clamp, clamp);
        }
        if let Some((frac, hit, at)) = self.layout.first_crossing(&self.pos, d) {
            let used = frac * dt;
            self.pos = at;
            self.t += used;
            self.floored_run = 0;
            return Ok(StepEvent::Contact { dt: used, hit, at });
        }
        let mut q = [0.0_f64; 2];
        for a in 0..self.scene.dimension {
            q[a] = wrap(self.pos.0[a] + d[a], self.layout.period);
        }
        self.pos = Point(q);
        self.t += dt;
        if dt <= self.dt_floor * (1.0 + 1e-12) && dt < cap {
            self.floored_run += 1;
            if self.floored_run > MAX_FLOORED_RUN {
                return Err(SimulateError::StepUnderflow {
                    pos: self.pos.0,
                    time: self.t,
                });
            }
        } else {
            self.floored_run = 0;
        }
        Ok(StepEvent::Moved { dt })
    }
}
