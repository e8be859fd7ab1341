//! Exact 1D hitting solvers on the circle.
//!
//! Harmonic functions on the circle are piecewise linear, so hitting
//! probabilities are solved exactly. Three boundary behaviours appear:
//! absorbing points (the target membranes, Dirichlet data), reflecting points
//! (the ambient domain's own boundary, zero slope), and redistribution
//! components (both points of a collapsed membrane share one unknown constant
//! value, pinned by a zero-net-flux condition: the one-sided slopes into the
//! component balance).
//!
//! `transmission_hitting_1d` solves the finite-permeability analogue used to
//! validate the particle simulator: the solution is continuous at each
//! membrane and its slope jumps so that the parent-side slope equals
//! `1/eps_l` times the child-side slope.

use super::SolveError;
use crate::geometry::{ContainmentTree, Node, Point, Scene};
use crate::predictor::{HittingDistribution, HittingOracle, HittingQuery, PredictError, StartSpec};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

fn wrap(x: f64, period: f64) -> f64 {
    let m = x % period;
    if m < 0.0 {
        m + period
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AnchorKind {
    /// Absorbing point; `usize` indexes the Dirichlet value slot.
    Absorbing(usize),
    /// Shared unknown constant; `usize` indexes the unknown slot.
    Redistribution(usize),
    /// Reflecting wall (ambient boundary).
    Wall,
}

#[derive(Debug, Clone, Copy)]
struct Anchor {
    /// Position along the sweep (relative coordinate, strictly increasing).
    s: f64,
    /// Absolute circle coordinate.
    pos: f64,
    kind: AnchorKind,
}

/// Assembled piecewise-linear problem: anchors in sweep order. On the full
/// circle the anchor list wraps; on an interval ambient it starts and ends
/// with walls.
struct Assembly {
    anchors: Vec<Anchor>,
    circular: bool,
    period: f64,
    n_unknowns: usize,
    n_values: usize,
    /// In-U flag per gap `i` (between anchor i and i+1, wrapping if circular).
    in_u: Vec<bool>,
}

/// Solution values: Dirichlet data plus solved constants, evaluated lazily.
struct Solution<'a> {
    asm: &'a Assembly,
    values: Vec<f64>,
    constants: Vec<f64>,
}

impl Assembly {
    fn anchor_value(&self, a: &Anchor, values: &[f64], constants: &[f64]) -> Option<f64> {
        match a.kind {
            AnchorKind::Absorbing(i) => Some(values[i]),
            AnchorKind::Redistribution(i) => Some(constants[i]),
            AnchorKind::Wall => None,
        }
    }

    fn n(&self) -> usize {
        self.anchors.len()
    }

    fn next(&self, i: usize) -> usize {
        if i + 1 == self.n() {
            0
        } else {
            i + 1
        }
    }

    fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n() - 1
        } else {
            i - 1
        }
    }

    fn gap_len(&self, i: usize) -> f64 {
        let j = self.next(i);
        if j == 0 {
            self.period - self.anchors[i].s + self.anchors[0].s
        } else {
            self.anchors[j].s - self.anchors[i].s
        }
    }

    /// Solve for the redistribution constants given Dirichlet data.
    fn solve_constants(&self, values: &[f64]) -> Result<Vec<f64>, SolveError> {
        let m = self.n_unknowns;
        if m == 0 {
            return Ok(Vec::new());
        }
        let mut mat = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        // One zero-net-flux equation per redistribution component: the slope
        // of the U-gap entering the component's left point equals the slope
        // of the U-gap leaving its right point. Components contribute one
        // equation per connected pair of anchors carrying the same slot; in
        // 1D that is the (left endpoint, right endpoint) pair.
        let mut seen = vec![false; m];
        for (i, a) in self.anchors.iter().enumerate() {
            let AnchorKind::Redistribution(slot) = a.kind else {
                continue;
            };
            if seen[slot] {
                continue;
            }
            seen[slot] = true;
            // `i` is the first anchor of the component in sweep order (its
            // left endpoint): the partner is the matching right endpoint.
            let partner = self
                .anchors
                .iter()
                .enumerate()
                .position(|(j, b)| j != i && b.kind == AnchorKind::Redistribution(slot))
                .expect("redistribution component has two boundary points");

            let add_side = |point: usize,
                                neighbor: usize,
                                len: f64,
                                sign: f64,
                                mat: &mut DMatrix<f64>,
                                rhs: &mut DVector<f64>| {
                // Contribution sign * (u(point) - u(neighbor)) / len, with a
                // reflecting neighbor contributing no flux.
                let nb = &self.anchors[neighbor];
                if nb.kind == AnchorKind::Wall {
                    return;
                }
                debug_assert!(matches!(
                    self.anchors[point].kind,
                    AnchorKind::Redistribution(_)
                ));
                mat[(slot, slot)] += sign / len;
                match nb.kind {
                    AnchorKind::Absorbing(v) => rhs[slot] += sign * values[v] / len,
                    AnchorKind::Redistribution(s2) => mat[(slot, s2)] -= sign / len,
                    AnchorKind::Wall => unreachable!(),
                }
            };

            // Flux into the component through the gap before `i` and the gap
            // after `partner`. (The gap between them is the component's own
            // interior.)
            if self.circular || i > 0 {
                let p = self.prev(i);
                add_side(i, p, self.gap_len(p), 1.0, &mut mat, &mut rhs);
            }
            if self.circular || partner + 1 < self.n() {
                let q = self.next(partner);
                add_side(partner, q, self.gap_len(partner), 1.0, &mut mat, &mut rhs);
            }
        }
        let lu = mat.lu();
        lu.solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .ok_or(SolveError::SingularSystem)
    }
}

impl Solution<'_> {
    /// Value of the solution at sweep coordinate `s` (must lie in a U-gap or
    /// at an anchor).
    fn eval(&self, s: f64) -> Result<f64, SolveError> {
        let asm = self.asm;
        let tol = 1e-12 * asm.period;
        for (i, a) in asm.anchors.iter().enumerate() {
            if (a.s - s).abs() <= tol {
                return self.anchor_point_value(i);
            }
        }
        // Find the gap containing s.
        let n = asm.n();
        for i in 0..n {
            let j = asm.next(i);
            let (lo, hi) = (asm.anchors[i].s, asm.anchors[i].s + asm.gap_len(i));
            let s_adj = if j == 0 && s < lo { s + asm.period } else { s };
            if s_adj > lo && s_adj < hi {
                if !asm.in_u[i] {
                    return Err(SolveError::InvalidQuery(format!(
                        "start {s} lies inside a collapsed or absorbing component"
                    )));
                }
                let va = self.anchor_point_value(i)?;
                let vb = self.anchor_point_value(j)?;
                // A wall end imposes zero slope: the gap is constant at the
                // other end's value.
                let wall_a = asm.anchors[i].kind == AnchorKind::Wall;
                let wall_b = asm.anchors[j].kind == AnchorKind::Wall;
                return Ok(match (wall_a, wall_b) {
                    (true, true) => {
                        return Err(SolveError::InvalidQuery(
                            "no absorbing boundary is reachable from the start".into(),
                        ))
                    }
                    (true, false) => vb,
                    (false, true) => va,
                    (false, false) => {
                        let t = (s_adj - lo) / (hi - lo);
                        va * (1.0 - t) + vb * t
                    }
                });
            }
        }
        Err(SolveError::InvalidQuery(format!(
            "point {s} not inside the ambient domain"
        )))
    }

    /// Value at anchor `i`; for a wall this is the value of its adjacent
    /// constant gap.
    fn anchor_point_value(&self, i: usize) -> Result<f64, SolveError> {
        let asm = self.asm;
        if let Some(v) = asm.anchor_value(&asm.anchors[i], &self.values, &self.constants) {
            return Ok(v);
        }
        // Wall: zero slope into the adjacent U-gap. An interval ambient has
        // walls only at the two ends of the sweep.
        let neighbor = if i == 0 { asm.next(i) } else { asm.prev(i) };
        asm.anchor_value(&asm.anchors[neighbor], &self.values, &self.constants)
            .ok_or_else(|| {
                SolveError::InvalidQuery("wall adjacent to wall: no reachable target".into())
            })
    }
}

/// Children of `ambient` in the tree, by id.
fn child_index(
    scene: &Scene,
    tree: &ContainmentTree,
    ambient: Node,
    id: &str,
) -> Result<usize, SolveError> {
    let idx = scene
        .index_of(id)
        .map_err(|e| SolveError::InvalidQuery(e.to_string()))?;
    if !tree.children_of(ambient).contains(&idx) {
        return Err(SolveError::InvalidQuery(format!(
            "{id} is not a child of the ambient domain"
        )));
    }
    Ok(idx)
}

fn assemble(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
) -> Result<(Assembly, Vec<(String, f64)>), SolveError> {
    if scene.dimension != 1 {
        return Err(SolveError::DimensionMismatch);
    }
    if query.targets.is_empty() {
        return Err(SolveError::InvalidQuery("no targets".into()));
    }
    let period = scene.period;

    // Absorbing value slots: one per target boundary point, so per-point
    // landing masses come out of the same factorisation.
    let mut anchors: Vec<Anchor> = Vec::new();
    let mut value_points: Vec<(String, f64)> = Vec::new();
    for id in &query.targets {
        let idx = child_index(scene, tree, query.ambient, id)?;
        let (a, b) = scene.interval_endpoints(idx);
        for p in [a, b] {
            anchors.push(Anchor {
                s: 0.0,
                pos: p,
                kind: AnchorKind::Absorbing(value_points.len()),
            });
            value_points.push((id.clone(), p));
        }
    }
    for (slot, id) in query.redistribution.iter().enumerate() {
        let idx = child_index(scene, tree, query.ambient, id)?;
        let (a, b) = scene.interval_endpoints(idx);
        for p in [a, b] {
            anchors.push(Anchor {
                s: 0.0,
                pos: p,
                kind: AnchorKind::Redistribution(slot),
            });
        }
    }

    let (circular, origin, span) = match query.ambient {
        Node::Root => (true, 0.0, period),
        Node::Dom(k) => {
            let (a, b) = scene.interval_endpoints(k);
            let len = wrap(b - a, period);
            anchors.push(Anchor {
                s: 0.0,
                pos: a,
                kind: AnchorKind::Wall,
            });
            anchors.push(Anchor {
                s: len,
                pos: b,
                kind: AnchorKind::Wall,
            });
            (false, a, len)
        }
    };
    for a in anchors.iter_mut() {
        if a.kind != AnchorKind::Wall {
            a.s = wrap(a.pos - origin, period);
            if !circular && (a.s <= 0.0 || a.s >= span) {
                return Err(SolveError::InvalidQuery(format!(
                    "membrane point {} outside the ambient domain",
                    a.pos
                )));
            }
        }
    }
    anchors.sort_by(|x, y| x.s.partial_cmp(&y.s).unwrap());

    let n = anchors.len();
    let mut in_u = vec![true; n];
    let all_children: Vec<usize> = query
        .targets
        .iter()
        .chain(query.redistribution.iter())
        .map(|id| scene.index_of(id).unwrap())
        .collect();
    for i in 0..n {
        let j = if i + 1 == n { 0 } else { i + 1 };
        if !circular && j == 0 {
            continue;
        }
        let gap = if j == 0 {
            period - anchors[i].s + anchors[0].s
        } else {
            anchors[j].s - anchors[i].s
        };
        let mid = wrap(origin + anchors[i].s + gap / 2.0, period);
        in_u[i] = !all_children
            .iter()
            .any(|&c| scene.contains(c, &Point::d1(mid)));
    }

    Ok((
        Assembly {
            anchors,
            circular,
            period: span.max(period),
            n_unknowns: query.redistribution.len(),
            n_values: value_points.len(),
            in_u,
        },
        value_points,
    ))
}

fn start_sweep(scene: &Scene, query: &HittingQuery, p: &Point) -> f64 {
    let origin = match query.ambient {
        Node::Root => 0.0,
        Node::Dom(k) => scene.interval_endpoints(k).0,
    };
    wrap(p.0[0] - origin, scene.period)
}

/// Exact hitting distribution for a 1D query, with per-point landing masses.
pub fn hitting_1d(
    scene: &Scene,
    tree: &ContainmentTree,
    query: &HittingQuery,
) -> Result<HittingDistribution, SolveError> {
    let (asm, value_points) = assemble(scene, tree, query)?;

    // One Dirichlet solve per target boundary point.
    let mut mass: BTreeMap<String, f64> = BTreeMap::new();
    let mut landing: BTreeMap<String, Vec<(Point, f64)>> = BTreeMap::new();
    for id in &query.targets {
        mass.insert(id.clone(), 0.0);
        landing.insert(id.clone(), Vec::new());
    }

    // Redistribution start: evaluate at the component's constant. A start
    // point inside a collapsed component is the component itself.
    let eval_start = |sol: &Solution| -> Result<f64, SolveError> {
        match &query.start {
            StartSpec::Point(p) => {
                for (slot, id) in query.redistribution.iter().enumerate() {
                    let idx = scene.index_of(id).unwrap();
                    if scene.contains(idx, p) {
                        return Ok(sol.constants[slot]);
                    }
                }
                sol.eval(start_sweep(scene, query, p))
            }
            StartSpec::Boundary(id) => {
                if let Some(slot) = query.redistribution.iter().position(|r| r == id) {
                    return Ok(sol.constants[slot]);
                }
                let node = tree
                    .node_of(id)
                    .map_err(|e| SolveError::InvalidQuery(e.to_string()))?;
                if node != query.ambient {
                    return Err(SolveError::InvalidQuery(format!(
                        "boundary start {id} is neither the ambient nor a redistribution component"
                    )));
                }
                let (a, b) = match query.ambient {
                    Node::Dom(k) => scene.interval_endpoints(k),
                    Node::Root => {
                        return Err(SolveError::InvalidQuery(
                            "the torus has no boundary to start from".into(),
                        ))
                    }
                };
                let va = sol.eval(start_sweep(scene, query, &Point::d1(a)))?;
                let vb = sol.eval(start_sweep(scene, query, &Point::d1(b)))?;
                Ok(0.5 * (va + vb))
            }
            StartSpec::WeightedBoundary(_, atoms) => {
                let mut v = 0.0;
                for (p, w) in atoms {
                    v += w * sol.eval(start_sweep(scene, query, p))?;
                }
                Ok(v)
            }
        }
    };

    // Starting on or inside an absorbing component is immediate absorption.
    match &query.start {
        StartSpec::Boundary(id) | StartSpec::WeightedBoundary(id, _) => {
            if query.targets.contains(id) {
                mass.insert(id.clone(), 1.0);
                return Ok(HittingDistribution { mass, landing });
            }
        }
        StartSpec::Point(p) => {
            for id in &query.targets {
                let idx = scene.index_of(id).unwrap();
                if scene.contains(idx, p) {
                    mass.insert(id.clone(), 1.0);
                    return Ok(HittingDistribution { mass, landing });
                }
            }
        }
    }

    for (vp, (target_id, pos)) in value_points.iter().enumerate() {
        let mut values = vec![0.0; asm.n_values];
        values[vp] = 1.0;
        let constants = asm.solve_constants(&values)?;
        let sol = Solution {
            asm: &asm,
            values,
            constants,
        };
        let u = eval_start(&sol)?;
        *mass.get_mut(target_id).unwrap() += u;
        landing.get_mut(target_id).unwrap().push((Point::d1(*pos), u));
    }

    let total: f64 = mass.values().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(SolveError::LinearSolveFailure(format!(
            "hitting masses sum to {total}"
        )));
    }
    Ok(HittingDistribution { mass, landing })
}

/// Harmonic measure of a target's two boundary points seen from `start`
/// inside `ambient` (gambler's-ruin split). Returns `(position, mass)` pairs.
pub fn harmonic_measure_1d(
    scene: &Scene,
    tree: &ContainmentTree,
    ambient: Node,
    target: &str,
    start: f64,
) -> Result<Vec<(f64, f64)>, SolveError> {
    let t_idx = scene
        .index_of(target)
        .map_err(|e| SolveError::InvalidQuery(e.to_string()))?;
    if scene.contains(t_idx, &Point::d1(start)) {
        return Err(SolveError::StartInsideTarget);
    }
    let query = HittingQuery {
        ambient,
        redistribution: vec![],
        targets: vec![target.to_string()],
        start: StartSpec::Point(Point::d1(start)),
    };
    let dist = hitting_1d(scene, tree, &query)?;
    Ok(dist.landing[target]
        .iter()
        .map(|&(p, m)| (p.0[0], m))
        .collect())
}

/// Finite-permeability hitting probabilities of the membrane process itself:
/// continuous, piecewise-linear, with the parent-side slope equal to
/// `1/eps_l` times the child-side slope at each membrane of domain `l`.
/// Absorbing points are arbitrary circle positions; the result pairs each
/// with its hitting mass, in input order.
pub fn transmission_hitting_1d(
    scene: &Scene,
    eps: f64,
    absorbers: &[f64],
    start: f64,
) -> Result<Vec<(f64, f64)>, SolveError> {
    if scene.dimension != 1 {
        return Err(SolveError::DimensionMismatch);
    }
    if absorbers.is_empty() {
        return Err(SolveError::InvalidQuery("no absorbing points".into()));
    }
    let period = scene.period;
    let tol = 1e-12 * period;

    #[derive(Clone, Copy)]
    struct Pt {
        pos: f64,
        /// Dirichlet slot for absorbers, unknown slot for membranes.
        slot: usize,
        absorbing: bool,
        /// For membranes: permeability and whether the domain interior lies
        /// to the right (true at a left endpoint).
        eps_l: f64,
        interior_right: bool,
    }

    let mut pts: Vec<Pt> = Vec::new();
    for (i, &a) in absorbers.iter().enumerate() {
        pts.push(Pt {
            pos: wrap(a, period),
            slot: i,
            absorbing: true,
            eps_l: 0.0,
            interior_right: false,
        });
    }
    let mut n_unknown = 0;
    for k in 0..scene.domains.len() {
        let (a, b) = scene.interval_endpoints(k);
        let eps_l = scene.permeability_at(k, eps);
        for (p, interior_right) in [(a, true), (b, false)] {
            if pts
                .iter()
                .any(|q| q.absorbing && crate::geometry::circle_dist(q.pos, p, period) <= tol)
            {
                continue; // an absorber sitting on a membrane absorbs
            }
            pts.push(Pt {
                pos: p,
                slot: n_unknown,
                absorbing: false,
                eps_l,
                interior_right,
            });
            n_unknown += 1;
        }
    }
    pts.sort_by(|x, y| x.pos.partial_cmp(&y.pos).unwrap());
    let n = pts.len();
    let gap = |i: usize| -> f64 {
        let j = (i + 1) % n;
        let g = wrap(pts[j].pos - pts[i].pos, period);
        if g == 0.0 {
            period
        } else {
            g
        }
    };

    let solve_for = |dirichlet: &dyn Fn(usize) -> f64| -> Result<Vec<f64>, SolveError> {
        if n_unknown == 0 {
            return Ok(Vec::new());
        }
        let mut mat = DMatrix::<f64>::zeros(n_unknown, n_unknown);
        let mut rhs = DVector::<f64>::zeros(n_unknown);
        for (i, p) in pts.iter().enumerate() {
            if p.absorbing {
                continue;
            }
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            let len_l = gap(prev);
            let len_r = gap(i);
            // Weights: eps_l on the parent side, 1 on the child side.
            let (w_l, w_r) = if p.interior_right {
                (p.eps_l, 1.0)
            } else {
                (1.0, p.eps_l)
            };
            let row = p.slot;
            mat[(row, row)] += w_l / len_l + w_r / len_r;
            for (nb, w, len) in [(prev, w_l, len_l), (next, w_r, len_r)] {
                if pts[nb].absorbing {
                    rhs[row] += w * dirichlet(pts[nb].slot) / len;
                } else {
                    mat[(row, pts[nb].slot)] -= w / len;
                }
            }
        }
        mat.lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .ok_or(SolveError::SingularSystem)
    };

    let s = wrap(start, period);
    let eval = |dirichlet: &dyn Fn(usize) -> f64, unknowns: &[f64]| -> f64 {
        let value = |p: &Pt| {
            if p.absorbing {
                dirichlet(p.slot)
            } else {
                unknowns[p.slot]
            }
        };
        for p in &pts {
            if crate::geometry::circle_dist(p.pos, s, period) <= tol {
                return value(p);
            }
        }
        for i in 0..n {
            let off = wrap(s - pts[i].pos, period);
            let g = gap(i);
            if off > 0.0 && off < g {
                let va = value(&pts[i]);
                let vb = value(&pts[(i + 1) % n]);
                return va + (vb - va) * off / g;
            }
        }
        unreachable!("start must lie somewhere on the circle");
    };

    let mut out = Vec::with_capacity(absorbers.len());
    for j in 0..absorbers.len() {
        let dirichlet = |slot: usize| if slot == j { 1.0 } else { 0.0 };
        let unknowns = solve_for(&dirichlet)?;
        out.push((absorbers[j], eval(&dirichlet, &unknowns)));
    }
    let total: f64 = out.iter().map(|(_, m)| m).sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(SolveError::LinearSolveFailure(format!(
            "transmission masses sum to {total}"
        )));
    }
    Ok(out)
}

/// The exact 1D solver as a hitting oracle.
pub struct Analytic1d<'a> {
    pub scene: &'a Scene,
    pub tree: &'a ContainmentTree,
}

impl HittingOracle for Analytic1d<'_> {
    fn resolve(&self, query: &HittingQuery) -> Result<HittingDistribution, PredictError> {
        Ok(hitting_1d(self.scene, self.tree, query)?)
    }
}
