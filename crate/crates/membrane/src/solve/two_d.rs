//! Finite-difference hitting solver on the 2-torus.
//!
//! The Laplace equation is discretised on a uniform grid with the 5-point
//! stencil. Target components are Dirichlet regions (every node inside the
//! closed ball carries the component's value); arms of the stencil that cross
//! a membrane are shortened to the actual crossing point (Shortley-Weller),
//! which keeps the scheme second order on circular boundaries. Each
//! redistribution component contributes a single shared unknown plus one
//! closure row: the sum of one-sided differences over all arms crossing into
//! the component vanishes (discrete zero net flux). The ambient boundary is
//! reflecting via dropped-edge ghosts; a root ambient means periodic
//! wrap-around, handled by the bordered solver.
//!
//! Results carry a Richardson error estimate: the query is solved at the
//! requested spacing and at half of it, and the per-component difference is
//! reported alongside the fine solution.

use super::band::BorderedBand;
use super::SolveError;
use crate::geometry::{torus_dist, ContainmentTree, Node, Point, Scene, Shape};
use crate::predictor::{HittingDistribution, HittingOracle, HittingQuery, PredictError, StartSpec};
use std::collections::BTreeMap;

const MIN_CELLS_ACROSS: f64 = 8.0;
const THETA_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Region {
    U,
    Target(u8),
    Redist(u8),
    Out,
}

struct Ball {
    center: Point,
    radius: f64,
}

fn ball_of(scene: &Scene, idx: usize) -> Result<Ball, SolveError> {
    match &scene.domains[idx].shape {
        Shape::Ball { center, radius } => Ok(Ball {
            center: *center,
            radius: *radius,
        }),
        _ => Err(SolveError::InvalidQuery(
            "2D solver requires ball-shaped domains".into(),
        )),
    }
}

struct Grid {
    n: usize,
    h: f64,
    period: f64,
    region: Vec<Region>,
    /// Node -> unknown index (usize::MAX for non-U nodes).
    num: Vec<usize>,
    /// Redistribution slot -> unknown index.
    const_col: Vec<usize>,
}

impl Grid {
    fn at(&self, i: usize, j: usize) -> Region {
        self.region[j * self.n + i]
    }
}

struct GridSolution {
    grid: Grid,
    /// One solution vector per target component.
    per_target: Vec<Vec<f64>>,
    targets: Vec<String>,
}

impl GridSolution {
    /// Value of the `t`-th indicator solution at node (i, j), if defined.
    fn node_value(&self, t: usize, i: usize, j: usize) -> Option<f64> {
        match self.grid.at(i, j) {
            Region::U => Some(self.per_target[t][self.grid.num[j * self.grid.n + i]]),
            Region::Target(tt) => Some(if tt as usize == t { 1.0 } else { 0.0 }),
            Region::Redist(s) => Some(self.per_target[t][self.grid.const_col[s as usize]]),
            Region::Out => None,
        }
    }

    /// Bilinear interpolation, renormalised over the corners that exist.
    fn eval(&self, t: usize, p: &Point) -> Result<f64, SolveError> {
        let (n, h, period) = (self.grid.n, self.grid.h, self.grid.period);
        let fx = (p.0[0].rem_euclid(period)) / h;
        let fy = (p.0[1].rem_euclid(period)) / h;
        let (i0, j0) = (fx.floor() as usize % n, fy.floor() as usize % n);
        let (tx, ty) = (fx - fx.floor(), fy - fy.floor());
        let mut value = 0.0;
        let mut weight = 0.0;
        for (di, dj, w) in [
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ] {
            let (i, j) = ((i0 + di) % n, (j0 + dj) % n);
            if let Some(v) = self.node_value(t, i, j) {
                value += w * v;
                weight += w;
            }
        }
        if weight <= 0.0 {
            return Err(SolveError::InvalidQuery(format!(
                "evaluation point {:?} lies outside the computational domain",
                p.0
            )));
        }
        Ok(value / weight)
    }
}

fn solve_on_grid(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
    n: usize,
) -> Result<GridSolution, SolveError> {
    let period = scene.period;
    let h = period / n as f64;

    let ambient_ball = match query.ambient {
        Node::Root => None,
        Node::Dom(k) => Some(ball_of(scene, k)?),
    };
    let mut child_balls: Vec<(Ball, Region)> = Vec::new();
    for (t, id) in query.targets.iter().enumerate() {
        let idx = scene
            .index_of(id)
            .map_err(|e| SolveError::InvalidQuery(e.to_string()))?;
        if !tree.children_of(query.ambient).contains(&idx) {
            return Err(SolveError::InvalidQuery(format!(
                "{id} is not a child of the ambient domain"
            )));
        }
        child_balls.push((ball_of(scene, idx)?, Region::Target(t as u8)));
    }
    for (s, id) in query.redistribution.iter().enumerate() {
        let idx = scene
            .index_of(id)
            .map_err(|e| SolveError::InvalidQuery(e.to_string()))?;
        child_balls.push((ball_of(scene, idx)?, Region::Redist(s as u8)));
    }
    for (b, _) in &child_balls {
        if 2.0 * b.radius / h < MIN_CELLS_ACROSS {
            return Err(SolveError::GridTooCoarse(format!(
                "membrane of diameter {} resolved by fewer than {MIN_CELLS_ACROSS} cells at h={h}",
                2.0 * b.radius
            )));
        }
    }
    if let Some(b) = &ambient_ball {
        if 2.0 * b.radius / h < MIN_CELLS_ACROSS {
            return Err(SolveError::GridTooCoarse("ambient ball under-resolved".into()));
        }
    }

    // Node classification.
    let mut region = vec![Region::U; n * n];
    for j in 0..n {
        for i in 0..n {
            let p = Point::d2(i as f64 * h, j as f64 * h);
            let mut r = Region::U;
            if let Some(b) = &ambient_ball {
                if torus_dist(&p, &b.center, 2, period) >= b.radius {
                    r = Region::Out;
                }
            }
            if r == Region::U {
                for (b, tag) in &child_balls {
                    if torus_dist(&p, &b.center, 2, period) <= b.radius {
                        r = *tag;
                        break;
                    }
                }
            }
            region[j * n + i] = r;
        }
    }

    // Unknown numbering: banded interior first, then wrap-row/column nodes,
    // then the redistribution constants.
    let mut num = vec![usize::MAX; n * n];
    let mut n_band = 0;
    for j in 0..n.saturating_sub(1) {
        for i in 0..n - 1 {
            if region[j * n + i] == Region::U {
                num[j * n + i] = n_band;
                n_band += 1;
            }
        }
    }
    let mut n_border = 0;
    for j in 0..n {
        for i in 0..n {
            if (i == n - 1 || j == n - 1) && region[j * n + i] == Region::U {
                num[j * n + i] = n_band + n_border;
                n_border += 1;
            }
        }
    }
    let n_redist = query.redistribution.len();
    let const_col: Vec<usize> = (0..n_redist).map(|s| n_band + n_border + s).collect();
    n_border += n_redist;

    let n_targets = query.targets.len();
    let mut sys = BorderedBand::new(n_band, n + 1, n_border);
    let mut rhs: Vec<Vec<f64>> = vec![vec![0.0; n_band + n_border]; n_targets];

    // Crossing fraction along the arm from an outside point `p` into ball `b`.
    let theta_into = |p: &Point, dx: f64, dy: f64, b: &Ball| -> f64 {
        let mut rel = [0.0_f64; 2];
        for a in 0..2 {
            let mut d = (p.0[a] - b.center.0[a]).rem_euclid(period);
            if d > period / 2.0 {
                d -= period;
            }
            rel[a] = d;
        }
        let aa = dx * dx + dy * dy;
        let bb = 2.0 * (rel[0] * dx + rel[1] * dy);
        let cc = rel[0] * rel[0] + rel[1] * rel[1] - b.radius * b.radius;
        let disc = (bb * bb - 4.0 * aa * cc).max(0.0);
        let t = (-bb - disc.sqrt()) / (2.0 * aa);
        t.clamp(THETA_MIN, 1.0)
    };

    // First crossing of the arm with a ball when both endpoints lie outside.
    let clip_fraction = |p: &Point, dx: f64, dy: f64, b: &Ball, period: f64| -> Option<f64> {
        let mut rel = [0.0_f64; 2];
        for a in 0..2 {
            let mut d = (p.0[a] - b.center.0[a]).rem_euclid(period);
            if d > period / 2.0 {
                d -= period;
            }
            rel[a] = d;
        }
        let aa = dx * dx + dy * dy;
        let bb = 2.0 * (rel[0] * dx + rel[1] * dy);
        let cc = rel[0] * rel[0] + rel[1] * rel[1] - b.radius * b.radius;
        if cc <= 0.0 {
            return None; // start not outside; handled elsewhere
        }
        let disc = bb * bb - 4.0 * aa * cc;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let t1 = (-bb - sq) / (2.0 * aa);
        let t2 = (-bb + sq) / (2.0 * aa);
        if t1 > 0.0 && t2 < 1.0 {
            Some(t1.clamp(THETA_MIN, 1.0))
        } else {
            None
        }
    };

    #[derive(Clone, Copy)]
    enum Arm {
        Interior(usize),
        Constant(usize, f64),
        Dirichlet(usize, f64),
        Wall,
    }

    for j in 0..n {
        for i in 0..n {
            if region[j * n + i] != Region::U {
                continue;
            }
            let row = num[j * n + i];
            let p = Point::d2(i as f64 * h, j as f64 * h);
            let arm = |di: i64, dj: i64| -> Arm {
                let qi = ((i as i64 + di).rem_euclid(n as i64)) as usize;
                let qj = ((j as i64 + dj).rem_euclid(n as i64)) as usize;
                match region[qj * n + qi] {
                    Region::U => {
                        // An edge can still clip a membrane near a tangent
                        // line with both endpoints outside; block it at the
                        // first crossing instead of leaking through.
                        for (idx, (b, tag)) in child_balls.iter().enumerate() {
                            let _ = idx;
                            if let Some(t1) =
                                clip_fraction(&p, di as f64 * h, dj as f64 * h, b, period)
                            {
                                return match tag {
                                    Region::Target(t) => Arm::Dirichlet(*t as usize, t1),
                                    Region::Redist(s) => Arm::Constant(*s as usize, t1),
                                    _ => unreachable!(),
                                };
                            }
                        }
                        Arm::Interior(num[qj * n + qi])
                    }
                    Region::Out => Arm::Wall,
                    Region::Target(t) => {
                        let b = &child_balls[t as usize].0;
                        Arm::Dirichlet(t as usize, theta_into(&p, di as f64 * h, dj as f64 * h, b))
                    }
                    Region::Redist(s) => {
                        let b = &child_balls[n_targets + s as usize].0;
                        Arm::Constant(
                            s as usize,
                            theta_into(&p, di as f64 * h, dj as f64 * h, b),
                        )
                    }
                }
            };
            for (am, ap) in [(arm(-1, 0), arm(1, 0)), (arm(0, -1), arm(0, 1))] {
                let theta = |a: &Arm| match a {
                    Arm::Interior(_) | Arm::Wall => 1.0,
                    Arm::Constant(_, t) | Arm::Dirichlet(_, t) => *t,
                };
                let (tm, tp) = (theta(&am), theta(&ap));
                let cm = 2.0 / (tm * (tm + tp));
                let cp = 2.0 / (tp * (tm + tp));
                sys.add(row, row, cm + cp);
                for (a, c) in [(am, cm), (ap, cp)] {
                    match a {
                        Arm::Interior(q) => sys.add(row, q, -c),
                        Arm::Wall => sys.add(row, row, -c),
                        Arm::Constant(s, th) => {
                            sys.add(row, const_col[s], -c);
                            // Zero-net-flux closure: one-sided difference
                            // (u_p - c_s)/theta integrates over the stencil.
                            sys.add(const_col[s], const_col[s], 1.0 / th);
                            sys.add(const_col[s], row, -1.0 / th);
                        }
                        Arm::Dirichlet(t, _) => rhs[t][row] += c,
                    }
                }
            }
        }
    }

    let per_target = sys.solve(rhs)?;
    // The indicator solutions form a discrete partition of unity; values
    // stay in [0,1] by the maximum principle.
    for sol in &per_target {
        for &v in sol {
            if !(-1e-7..=1.0 + 1e-7).contains(&v) {
                return Err(SolveError::LinearSolveFailure(format!(
                    "solution value {v} violates the maximum principle"
                )));
            }
        }
    }

    Ok(GridSolution {
        grid: Grid {
            n,
            h,
            period,
            region,
            num,
            const_col,
        },
        per_target,
        targets: query.targets.clone(),
    })
}

fn masses_at_start(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
    sol: &GridSolution,
) -> Result<BTreeMap<String, f64>, SolveError> {
    let eval_all = |p: &Point| -> Result<Vec<f64>, SolveError> {
        (0..sol.targets.len()).map(|t| sol.eval(t, p)).collect()
    };
    let values: Vec<f64> = match &query.start {
        StartSpec::Point(p) => {
            // A start inside a collapsed component is the component itself.
            let mut from_const: Option<Vec<f64>> = None;
            for (s, id) in query.redistribution.iter().enumerate() {
                let idx = scene.index_of(id).unwrap();
                if scene.contains(idx, p) {
                    from_const = Some(
                        (0..sol.targets.len())
                            .map(|t| sol.per_target[t][sol.grid.const_col[s]])
                            .collect(),
                    );
                }
            }
            match from_const {
                Some(v) => v,
                None => eval_all(p)?,
            }
        }
        StartSpec::Boundary(id) => {
            if let Some(s) = query.redistribution.iter().position(|r| r == id) {
                (0..sol.targets.len())
                    .map(|t| sol.per_target[t][sol.grid.const_col[s]])
                    .collect()
            } else if query.targets.contains(id) {
                sol.targets
                    .iter()
                    .map(|t| if t == id { 1.0 } else { 0.0 })
                    .collect()
            } else {
                let node = tree
                    .node_of(id)
                    .map_err(|e| SolveError::InvalidQuery(e.to_string()))?;
                if node != query.ambient {
                    return Err(SolveError::InvalidQuery(format!(
                        "boundary start {id} is not part of the query"
                    )));
                }
                let b = match node {
                    Node::Dom(k) => ball_of(scene, k)?,
                    Node::Root => {
                        return Err(SolveError::InvalidQuery(
                            "the torus has no boundary to start from".into(),
                        ))
                    }
                };
                // Uniform average over the ambient wall, sampled just inside.
                let r = b.radius - 1.5 * sol.grid.h;
                let k_samples = 256;
                let mut acc = vec![0.0; sol.targets.len()];
                for q in 0..k_samples {
                    let th = std::f64::consts::TAU * (q as f64 + 0.5) / k_samples as f64;
                    let p = Point::d2(
                        b.center.0[0] + r * th.cos(),
                        b.center.0[1] + r * th.sin(),
                    );
                    for (t, a) in eval_all(&p)?.into_iter().enumerate() {
                        acc[t] += a / k_samples as f64;
                    }
                }
                acc
            }
        }
        StartSpec::WeightedBoundary(_, atoms) => {
            let mut acc = vec![0.0; sol.targets.len()];
            for (p, w) in atoms {
                for (t, a) in eval_all(p)?.into_iter().enumerate() {
                    acc[t] += w * a;
                }
            }
            acc
        }
    };
    Ok(sol
        .targets
        .iter()
        .cloned()
        .zip(values)
        .collect::<BTreeMap<_, _>>())
}

/// Finite-difference solution of a 2D hitting query.
#[derive(Debug, Clone)]
pub struct Fd2dSolution {
    pub distribution: HittingDistribution,
    /// Max per-component difference between the h and h/2 solutions.
    pub error_estimate: f64,
    /// Fine spacing actually used for the reported distribution.
    pub spacing_fine: f64,
}

/// Solve a hitting query on grids of spacing `h` and `h/2`; report the fine
/// masses together with the Richardson difference.
pub fn hitting_2d_fd(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
    spacing: f64,
) -> Result<Fd2dSolution, SolveError> {
    if scene.dimension != 2 {
        return Err(SolveError::DimensionMismatch);
    }
    if query.targets.is_empty() {
        return Err(SolveError::InvalidQuery("no targets".into()));
    }
    let n_f = scene.period / spacing;
    let n = n_f.round() as usize;
    if n < 8 || (n_f - n as f64).abs() > 1e-9 * n_f {
        return Err(SolveError::InvalidQuery(format!(
            "spacing {spacing} does not divide the period {}",
            scene.period
        )));
    }

    let coarse = solve_on_grid(scene, tree, query, n)?;
    let m_coarse = masses_at_start(scene, tree, query, &coarse)?;
    let fine = solve_on_grid(scene, tree, query, 2 * n)?;
    let m_fine = masses_at_start(scene, tree, query, &fine)?;

    let mut err: f64 = 0.0;
    for (k, v) in &m_fine {
        err = err.max((v - m_coarse[k]).abs());
    }
    let total: f64 = m_fine.values().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(SolveError::LinearSolveFailure(format!(
            "hitting masses sum to {total}"
        )));
    }
    Ok(Fd2dSolution {
        distribution: HittingDistribution {
            mass: m_fine,
            landing: BTreeMap::new(),
        },
        error_estimate: err,
        spacing_fine: scene.period / (2 * n) as f64,
    })
}

/// Debug dump of the fine-grid indicator solution for the first target:
/// `x,y,region,value` per node.
pub fn grid_csv(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
    spacing: f64,
) -> Result<String, SolveError> {
    let n = (scene.period / spacing).round() as usize;
    let sol = solve_on_grid(scene, tree, query, n)?;
    let mut out = String::from("x,y,region,value\n");
    for j in 0..n {
        for i in 0..n {
            let tag = match sol.grid.at(i, j) {
                Region::U => "interior",
                Region::Target(_) => "target",
                Region::Redist(_) => "redistribution",
                Region::Out => "outside",
            };
            let v = sol
                .node_value(0, i, j)
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                i as f64 * sol.grid.h,
                j as f64 * sol.grid.h,
                tag,
                v
            ));
        }
    }
    Ok(out)
}

/// The finite-difference solver as a hitting oracle.
pub struct Fd2d<'a> {
    pub scene: &'a Scene,
    pub tree: &'a ContainmentTree,
    pub spacing: f64,
}

impl HittingOracle for Fd2d<'_> {
    fn resolve(&self, query: &HittingQuery) -> Result<HittingDistribution, PredictError> {
        Ok(hitting_2d_fd(self.scene, self.tree, query, self.spacing)?.distribution)
    }
}
