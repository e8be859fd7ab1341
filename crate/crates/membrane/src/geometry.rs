//! Torus geometry: nested domains, the containment tree, distances, normals.
//!
//! The ambient space is the flat torus of a given period (a circle in 1D, a
//! square with opposite edges identified in 2D). Domains are open intervals
//! (1D) or open balls (2D) whose boundaries are the membranes. A valid scene
//! has pairwise disjoint boundaries, and every pair of domains is either
//! disjoint or strictly nested; the nesting structure is summarised by the
//! [`ContainmentTree`], with the torus itself adjoined as a virtual root.

use num::rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default minimum boundary separation, as a fraction of the period.
pub const DEFAULT_MIN_SEPARATION: f64 = 1e-6;

/// Default tolerance (fraction of period) for "on a membrane" checks.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid shape for domain {id}: {reason}")]
    InvalidShape { id: String, reason: String },
    #[error("boundaries of {a} and {b} overlap or come within {separation:e} of each other")]
    OverlappingBoundaries { a: String, b: String, separation: f64 },
    #[error("domains {a} and {b} overlap without nesting")]
    PartialOverlap { a: String, b: String },
    #[error("duplicate domain id {0}")]
    DuplicateId(String),
    #[error("unknown domain id {0}")]
    UnknownId(String),
    #[error("point {0:?} lies on (or within tolerance of) a membrane")]
    OnBoundary(Point),
    #[error("point {0:?} is not on the boundary of the requested domain")]
    NotOnBoundary(Point),
    #[error("dimension mismatch: scene is {scene}D")]
    DimensionMismatch { scene: usize },
}

/// A point on the torus. Coordinates are stored reduced modulo the period;
/// in 1D only the first coordinate is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 2]);

impl Point {
    pub fn d1(x: f64) -> Self {
        Point([x, 0.0])
    }

    pub fn d2(x: f64, y: f64) -> Self {
        Point([x, y])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn reduced(&self, dimension: usize, period: f64) -> Self {
        let mut c = [0.0; 2];
        for i in 0..dimension {
            c[i] = wrap(self.0[i], period);
        }
        Point(c)
    }
}

/// Domain shape: an interval on the circle or a ball on the 2-torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Ball { center: Point, radius: f64 },
}

/// A domain with a semi-permeable boundary. The permeability of the membrane
/// is `eps^{exponent}` with a positive rational exponent, so that it vanishes
/// as `eps` does.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub id: String,
    pub shape: Shape,
    pub permeability_exponent: Rational64,
}

/// A validated collection of domains on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dimension: usize,
    pub period: f64,
    pub domains: Vec<Domain>,
    /// Minimum boundary separation accepted at validation, in torus units.
    pub min_separation: f64,
}

/// Node of the containment tree: a real domain or the virtual root `D_0`
/// (the whole torus).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Root,
    Dom(usize),
}

/// Containment tree of a scene. The parent of a domain is the smallest domain
/// strictly containing it; top-level domains hang off the virtual root. Ranks
/// count nesting depth from the leaves: a leaf has rank 1 and every node has
/// rank one more than the largest rank among its children.
#[derive(Debug, Clone)]
pub struct ContainmentTree {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub root_children: Vec<usize>,
    pub rank: Vec<u32>,
    pub root_rank: u32,
    /// Permeability exponents copied from the scene, indexed like `parent`.
    pub exponent: Vec<Rational64>,
    ids: Vec<String>,
}

fn wrap(x: f64, period: f64) -> f64 {
    let m = x % period;
    if m < 0.0 {
        m + period
    } else {
        m
    }
}

/// Distance between two circle coordinates (shortest way around).
pub fn circle_dist(a: f64, b: f64, period: f64) -> f64 {
    let d = wrap(a - b, period);
    d.min(period - d)
}

/// Torus distance between two points of a scene of the given dimension.
pub fn torus_dist(p: &Point, q: &Point, dimension: usize, period: f64) -> f64 {
    match dimension {
        1 => circle_dist(p.0[0], q.0[0], period),
        _ => {
            let dx = circle_dist(p.0[0], q.0[0], period);
            let dy = circle_dist(p.0[1], q.0[1], period);
            dx.hypot(dy)
        }
    }
}

/// Pairwise relation between two domains of a valid scene.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Relation {
    /// Closures disjoint; margin between boundaries.
    Disjoint(f64),
    /// First strictly inside second; minimum boundary separation.
    FirstInSecond(f64),
    SecondInFirst(f64),
    PartialOverlap,
}

impl Shape {
    fn validate(&self, dimension: usize, period: f64, id: &str) -> Result<(), GeometryError> {
        match (self, dimension) {
            (Shape::Interval { a, b }, 1) => {
                let len = b - a;
                if !(len > 0.0 && len < period) || !a.is_finite() || !b.is_finite() {
                    return Err(GeometryError::InvalidShape {
                        id: id.to_string(),
                        reason: format!("interval ({a}, {b}) must satisfy 0 < b - a < period"),
                    });
                }
                Ok(())
            }
            (Shape::Ball { radius, .. }, 2) => {
                if !(*radius > 0.0 && *radius < period / 2.0) {
                    return Err(GeometryError::InvalidShape {
                        id: id.to_string(),
                        reason: format!("ball radius {radius} must satisfy 0 < r < period/2"),
                    });
                }
                Ok(())
            }
            _ => Err(GeometryError::InvalidShape {
                id: id.to_string(),
                reason: format!("shape does not match scene dimension {dimension}"),
            }),
        }
    }

    fn measure(&self, period: f64) -> f64 {
        match self {
            Shape::Interval { a, b } => wrap(b - a, period),
            Shape::Ball { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }
}

fn relate(s1: &Shape, s2: &Shape, dimension: usize, period: f64) -> Relation {
    match (s1, s2) {
        (Shape::Interval { a: a1, b: b1 }, Shape::Interval { a: a2, b: b2 }) => {
            let len1 = wrap(b1 - a1, period);
            let len2 = wrap(b2 - a2, period);
            // Offset of the first interval's start within the second's frame.
            let s = wrap(a1 - a2, period);
            if s > 0.0 && s + len1 < len2 {
                Relation::FirstInSecond(s.min(len2 - s - len1))
            } else {
                let s = wrap(a2 - a1, period);
                if s > 0.0 && s + len2 < len1 {
                    Relation::SecondInFirst(s.min(len1 - s - len2))
                } else {
                    let s = wrap(a1 - a2, period);
                    if s >= len2 && s + len1 <= period {
                        Relation::Disjoint((s - len2).min(period - s - len1))
                    } else {
                        Relation::PartialOverlap
                    }
                }
            }
        }
        (Shape::Ball { center: c1, radius: r1 }, Shape::Ball { center: c2, radius: r2 }) => {
            let d = torus_dist(c1, c2, dimension, period);
            if d + r1 < *r2 {
                Relation::FirstInSecond(r2 - r1 - d)
            } else if d + r2 < *r1 {
                Relation::SecondInFirst(r1 - r2 - d)
            } else if d > r1 + r2 {
                Relation::Disjoint(d - r1 - r2)
            } else {
                Relation::PartialOverlap
            }
        }
        _ => Relation::PartialOverlap,
    }
}

impl Scene {
    /// Build and validate a scene with the default boundary separation.
    pub fn new(
        dimension: usize,
        period: f64,
        domains: Vec<Domain>,
    ) -> Result<Self, GeometryError> {
        Self::with_separation(dimension, period, domains, DEFAULT_MIN_SEPARATION)
    }

    /// Build and validate a scene; `min_separation_fraction` is relative to
    /// the period.
    pub fn with_separation(
        dimension: usize,
        period: f64,
        domains: Vec<Domain>,
        min_separation_fraction: f64,
    ) -> Result<Self, GeometryError> {
        assert!(dimension == 1 || dimension == 2, "dimension must be 1 or 2");
        assert!(period > 0.0 && period.is_finite());
        let min_separation = min_separation_fraction * period;
        let scene = Scene {
            dimension,
            period,
            domains,
            min_separation,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        for d in &self.domains {
            d.shape.validate(self.dimension, self.period, &d.id)?;
            assert!(
                d.permeability_exponent > Rational64::from_integer(0),
                "permeability exponent of {} must be positive",
                d.id
            );
        }
        for i in 0..self.domains.len() {
            for j in (i + 1)..self.domains.len() {
                if self.domains[i].id == self.domains[j].id {
                    return Err(GeometryError::DuplicateId(self.domains[i].id.clone()));
                }
                let rel = relate(
                    &self.domains[i].shape,
                    &self.domains[j].shape,
                    self.dimension,
                    self.period,
                );
                let margin = match rel {
                    Relation::Disjoint(m)
                    | Relation::FirstInSecond(m)
                    | Relation::SecondInFirst(m) => m,
                    Relation::PartialOverlap => {
                        return Err(GeometryError::PartialOverlap {
                            a: self.domains[i].id.clone(),
                            b: self.domains[j].id.clone(),
                        })
                    }
                };
                if margin < self.min_separation {
                    return Err(GeometryError::OverlappingBoundaries {
                        a: self.domains[i].id.clone(),
                        b: self.domains[j].id.clone(),
                        separation: margin,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Result<usize, GeometryError> {
        self.domains
            .iter()
            .position(|d| d.id == id)
            .ok_or_else(|| GeometryError::UnknownId(id.to_string()))
    }

    /// True if the (open) domain with the given index contains the point.
    pub fn contains(&self, index: usize, p: &Point) -> bool {
        match &self.domains[index].shape {
            Shape::Interval { a, b } => {
                let len = wrap(b - a, self.period);
                let off = wrap(p.0[0] - a, self.period);
                off > 0.0 && off < len
            }
            Shape::Ball { center, radius } => {
                torus_dist(p, center, self.dimension, self.period) < *radius
            }
        }
    }

    /// Lebesgue measure of the domain (length or area).
    pub fn measure(&self, index: usize) -> f64 {
        self.domains[index].shape.measure(self.period)
    }

    /// The two boundary coordinates of a 1D domain.
    pub fn interval_endpoints(&self, index: usize) -> (f64, f64) {
        match &self.domains[index].shape {
            Shape::Interval { a, b } => (wrap(*a, self.period), wrap(*b, self.period)),
            _ => panic!("interval_endpoints on a non-interval domain"),
        }
    }

    /// Membrane permeability `eps^{a_k}` evaluated at a concrete `eps`.
    pub fn permeability_at(&self, index: usize, eps: f64) -> f64 {
        let a = self.domains[index].permeability_exponent;
        eps.powf(*a.numer() as f64 / *a.denom() as f64)
    }

    /// Smallest distance between any two distinct membrane features
    /// (boundary-to-boundary gap). Scenes with a single ball have no gap;
    /// half the period is used as a conservative stand-in.
    pub fn min_membrane_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        match self.dimension {
            1 => {
                let mut pts: Vec<f64> = Vec::new();
                for i in 0..self.domains.len() {
                    let (a, b) = self.interval_endpoints(i);
                    pts.push(a);
                    pts.push(b);
                }
                pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for w in pts.windows(2) {
                    gap = gap.min(w[1] - w[0]);
                }
                if pts.len() > 1 {
                    gap = gap.min(self.period - (pts[pts.len() - 1] - pts[0]));
                }
            }
            _ => {
                for i in 0..self.domains.len() {
                    for j in (i + 1)..self.domains.len() {
                        match relate(
                            &self.domains[i].shape,
                            &self.domains[j].shape,
                            self.dimension,
                            self.period,
                        ) {
                            Relation::Disjoint(m)
                            | Relation::FirstInSecond(m)
                            | Relation::SecondInFirst(m) => gap = gap.min(m),
                            Relation::PartialOverlap => {}
                        }
                    }
                }
            }
        }
        if gap.is_finite() {
            gap
        } else {
            self.period / 2.0
        }
    }
}

/// Signed torus distance from `x` to the boundary of domain `k`: negative
/// inside the domain, positive outside, zero on the membrane.
pub fn signed_distance(scene: &Scene, k: usize, x: &Point) -> f64 {
    let d = match &scene.domains[k].shape {
        Shape::Interval { a, b } => {
            let da = circle_dist(x.0[0], *a, scene.period);
            let db = circle_dist(x.0[0], *b, scene.period);
            da.min(db)
        }
        Shape::Ball { center, radius } => {
            (torus_dist(x, center, scene.dimension, scene.period) - radius).abs()
        }
    };
    if scene.contains(k, x) {
        -d
    } else {
        d
    }
}

/// Unit exterior normal of domain `k` at a boundary point `y` (tolerance in
/// torus units). In 1D the normal is the scalar ±1 in the first slot.
pub fn unit_normal(scene: &Scene, k: usize, y: &Point, tol: f64) -> Result<[f64; 2], GeometryError> {
    match &scene.domains[k].shape {
        Shape::Interval { a, b } => {
            if circle_dist(y.0[0], *b, scene.period) <= tol {
                Ok([1.0, 0.0])
            } else if circle_dist(y.0[0], *a, scene.period) <= tol {
                Ok([-1.0, 0.0])
            } else {
                Err(GeometryError::NotOnBoundary(*y))
            }
        }
        Shape::Ball { center, radius } => {
            let d = torus_dist(y, center, scene.dimension, scene.period);
            if (d - radius).abs() > tol || d == 0.0 {
                return Err(GeometryError::NotOnBoundary(*y));
            }
            // Wrap-aware offset from the center to y.
            let mut v = [0.0; 2];
            for i in 0..2 {
                let mut di = wrap(y.0[i] - center.0[i], scene.period);
                if di > scene.period / 2.0 {
                    di -= scene.period;
                }
                v[i] = di;
            }
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            Ok([v[0] / n, v[1] / n])
        }
    }
}

/// Build the containment tree of a valid scene. Children lists are sorted by
/// id so the result does not depend on the order of the domain list.
pub fn build_tree(scene: &Scene) -> Result<ContainmentTree, GeometryError> {
    let n = scene.domains.len();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if i == j {
                continue;
            }
            match relate(
                &scene.domains[i].shape,
                &scene.domains[j].shape,
                scene.dimension,
                scene.period,
            ) {
                Relation::FirstInSecond(_) => {
                    let better = match best {
                        None => true,
                        Some(b) => {
                            scene.domains[j].shape.measure(scene.period)
                                < scene.domains[b].shape.measure(scene.period)
                        }
                    };
                    if better {
                        best = Some(j);
                    }
                }
                Relation::PartialOverlap => {
                    return Err(GeometryError::PartialOverlap {
                        a: scene.domains[i].id.clone(),
                        b: scene.domains[j].id.clone(),
                    })
                }
                _ => {}
            }
        }
        parent[i] = best;
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut root_children: Vec<usize> = Vec::new();
    for i in 0..n {
        match parent[i] {
            Some(p) => children[p].push(i),
            None => root_children.push(i),
        }
    }
    let by_id = |list: &mut Vec<usize>| {
        list.sort_by(|&a, &b| scene.domains[a].id.cmp(&scene.domains[b].id));
    };
    for list in children.iter_mut() {
        by_id(list);
    }
    by_id(&mut root_children);

    let mut rank = vec![0u32; n];
    fn rank_of(i: usize, children: &[Vec<usize>], rank: &mut [u32]) -> u32 {
        if rank[i] != 0 {
            return rank[i];
        }
        let r = 1 + children[i]
            .iter()
            .map(|&c| rank_of(c, children, rank))
            .max()
            .unwrap_or(0);
        rank[i] = r;
        r
    }
    for i in 0..n {
        rank_of(i, &children, &mut rank);
    }
    let root_rank = 1 + root_children.iter().map(|&c| rank[c]).max().unwrap_or(0);

    Ok(ContainmentTree {
        parent,
        children,
        root_children,
        rank,
        root_rank,
        exponent: scene.domains.iter().map(|d| d.permeability_exponent).collect(),
        ids: scene.domains.iter().map(|d| d.id.clone()).collect(),
    })
}

impl ContainmentTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn id(&self, node: Node) -> &str {
        match node {
            Node::Root => "D0",
            Node::Dom(i) => &self.ids[i],
        }
    }

    pub fn index_of(&self, id: &str) -> Result<usize, GeometryError> {
        self.ids
            .iter()
            .position(|d| d == id)
            .ok_or_else(|| GeometryError::UnknownId(id.to_string()))
    }

    pub fn node_of(&self, id: &str) -> Result<Node, GeometryError> {
        if id == "D0" || id == "root" {
            Ok(Node::Root)
        } else {
            Ok(Node::Dom(self.index_of(id)?))
        }
    }

    pub fn parent_node(&self, i: usize) -> Node {
        match self.parent[i] {
            Some(p) => Node::Dom(p),
            None => Node::Root,
        }
    }

    pub fn children_of(&self, node: Node) -> &[usize] {
        match node {
            Node::Root => &self.root_children,
            Node::Dom(i) => &self.children[i],
        }
    }

    pub fn rank_of(&self, node: Node) -> u32 {
        match node {
            Node::Root => self.root_rank,
            Node::Dom(i) => self.rank[i],
        }
    }

    /// Leaves of the tree (rank-one domains).
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.children[i].is_empty()).collect()
    }

    /// Path of domain indices from `i` up to (excluding) the root.
    pub fn ancestors_inclusive(&self, i: usize) -> Vec<usize> {
        let mut path = vec![i];
        let mut cur = i;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path
    }
}

/// Immediate-containment order: true iff the parent of `l` is `k`.
pub fn precedes(tree: &ContainmentTree, l: &str, k: &str) -> Result<bool, GeometryError> {
    let li = tree.index_of(l)?;
    let kn = tree.node_of(k)?;
    Ok(tree.parent_node(li) == kn)
}

/// Locate the cell `U_k` containing `x`: the smallest domain containing `x`,
/// or the root if none does. Errors if `x` is within `tol` (torus units) of
/// any membrane.
pub fn locate_cell(
    scene: &Scene,
    tree: &ContainmentTree,
    x: &Point,
    tol: f64,
) -> Result<Node, GeometryError> {
    for k in 0..scene.domains.len() {
        if signed_distance(scene, k, x).abs() <= tol {
            return Err(GeometryError::OnBoundary(*x));
        }
    }
    locate_cell_unchecked(scene, tree, x)
}

/// As [`locate_cell`] but without the membrane-proximity check; a point
/// exactly on a membrane is assigned to the outside.
pub fn locate_cell_unchecked(
    scene: &Scene,
    tree: &ContainmentTree,
    x: &Point,
) -> Result<Node, GeometryError> {
    let mut cur = Node::Root;
    'descend: loop {
        for &c in tree.children_of(cur) {
            if scene.contains(c, x) {
                cur = Node::Dom(c);
                continue 'descend;
            }
        }
        return Ok(cur);
    }
}
