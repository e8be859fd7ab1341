//! The limiting-mixture predictor.
//!
//! Given a time exponent `b` and a start point, the limiting distribution of
//! the process at time `eps^{-b}` is a mixture of uniform distributions on
//! rank-one domains. The mixture is computed by recursion on the containment
//! tree: find the characteristic domain `D` of the start (the lowest-rank
//! trapping domain containing it, or the torus); split the children of `D`
//! into trapping targets and non-trapping redistribution components; if there
//! are no trapping children the mass rides the unique admissible chain down
//! to its leaf, otherwise a hitting problem decides how mass splits over the
//! trapping children's boundaries, and the recursion descends from each.
//!
//! Hitting problems are delegated to a [`HittingOracle`], so the same
//! recursion runs against the exact 1D solver, the 2D finite-difference
//! solver, or the Monte Carlo estimator. Descents from a boundary are
//! symbolic: the subsequent law is resolved per boundary component, weighted
//! by the landing measure when the oracle reports one (the 1D solver reports
//! the exact two-point split; estimators may fall back to the uniform
//! measure on the component).

use crate::asymptotics::{
    admissible_chains, characteristic_domain, classify, AsymptoticsError, Classification,
    ExponentQ,
};
use crate::geometry::{
    locate_cell_unchecked, signed_distance, ContainmentTree, Node, Point, Scene,
};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error("no admissible chain ends at {0}")]
    NoAdmissibleChain(String),
    #[error("{count} admissible chains end at {id} although it has no trapping children; refusing to break the tie")]
    MultipleAdmissibleChainsWithEmptyTrapSet { id: String, count: usize },
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("mixture weights sum to {0}, expected 1")]
    BadWeightSum(f64),
}

/// Start of a hitting problem: a concrete point, the uniform (volume) measure
/// on the boundary of a domain, or an explicit atomic measure on it.
#[derive(Debug, Clone, PartialEq)]
pub enum StartSpec {
    Point(Point),
    Boundary(String),
    WeightedBoundary(String, Vec<(Point, f64)>),
}

impl StartSpec {
    pub fn describe(&self) -> String {
        match self {
            StartSpec::Point(p) => format!("point {:?}", p.0),
            StartSpec::Boundary(id) => format!("boundary of {id} (uniform)"),
            StartSpec::WeightedBoundary(id, atoms) => {
                format!("boundary of {id} ({} weighted atoms)", atoms.len())
            }
        }
    }
}

/// One hitting problem: Brownian motion in the ambient domain (reflected at
/// its boundary; none if the ambient is the torus), instantaneously
/// redistributed on the boundaries of the `redistribution` children, absorbed
/// on first contact with the boundary of any `targets` child.
#[derive(Debug, Clone)]
pub struct HittingQuery {
    pub ambient: Node,
    pub redistribution: Vec<String>,
    pub targets: Vec<String>,
    pub start: StartSpec,
}

/// Probability of absorbing on each target component, with an optional
/// landing measure per component (atoms on the component's boundary).
#[derive(Debug, Clone, Default)]
pub struct HittingDistribution {
    pub mass: BTreeMap<String, f64>,
    pub landing: BTreeMap<String, Vec<(Point, f64)>>,
}

impl HittingDistribution {
    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }
}

/// Resolves hitting queries against a fixed scene.
pub trait HittingOracle {
    fn resolve(&self, query: &HittingQuery) -> Result<HittingDistribution, PredictError>;
}

/// The predicted limiting distribution: weights over rank-one domains, each
/// carrying the uniform measure on that domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureMeasure {
    pub weights: BTreeMap<String, f64>,
}

impl MixtureMeasure {
    pub fn point_mass(id: &str) -> Self {
        let mut weights = BTreeMap::new();
        weights.insert(id.to_string(), 1.0);
        MixtureMeasure { weights }
    }

    pub fn sum(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn weight(&self, id: &str) -> f64 {
        self.weights.get(id).copied().unwrap_or(0.0)
    }
}

/// Recursion trace for one level of the prediction.
#[derive(Debug, Clone, Serialize)]
pub struct ReportNode {
    pub start: String,
    pub characteristic: String,
    pub trapping_children: Vec<String>,
    pub redistribution_children: Vec<String>,
    /// Resolved hitting masses, present when a query was issued.
    pub hitting: Option<BTreeMap<String, f64>>,
    /// The unique admissible chain, present when the trap set was empty.
    pub unique_chain: Option<Vec<String>>,
    pub descents: Vec<(String, f64, ReportNode)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictReport {
    pub time_exponent: ExponentQ,
    pub mixture: MixtureMeasure,
    pub trace: ReportNode,
}

/// Node whose closure the start belongs to, for the characteristic-domain
/// lookup: a point within `tol` of a membrane counts as in that domain's
/// closure, otherwise the smallest domain containing the point.
pub fn start_node(scene: &Scene, tree: &ContainmentTree, x: &Point, tol: f64) -> Node {
    let mut on: Option<usize> = None;
    for k in 0..scene.domains.len() {
        if signed_distance(scene, k, x).abs() <= tol {
            let better = match on {
                None => true,
                Some(prev) => scene.measure(k) < scene.measure(prev),
            };
            if better {
                on = Some(k);
            }
        }
    }
    match on {
        Some(k) => Node::Dom(k),
        None => locate_cell_unchecked(scene, tree, x).expect("descent cannot fail"),
    }
}

/// Compute the limiting mixture for a start point at time scale `eps^{-b}`.
pub fn predict(
    scene: &Scene,
    tree: &ContainmentTree,
    b: ExponentQ,
    x: &Point,
    oracle: &dyn HittingOracle,
) -> Result<MixtureMeasure, PredictError> {
    Ok(predict_report(scene, tree, b, x, oracle)?.mixture)
}

/// As [`predict`], returning the full recursion trace.
pub fn predict_report(
    scene: &Scene,
    tree: &ContainmentTree,
    b: ExponentQ,
    x: &Point,
    oracle: &dyn HittingOracle,
) -> Result<PredictReport, PredictError> {
    let cls = classify(tree, b)?;
    let at = start_node(scene, tree, x, 1e-12 * scene.period);
    let (mixture, trace) = descend(scene, tree, &cls, StartSpec::Point(*x), at, oracle)?;
    let sum = mixture.sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(PredictError::BadWeightSum(sum));
    }
    Ok(PredictReport {
        time_exponent: b,
        mixture,
        trace,
    })
}

fn descend(
    scene: &Scene,
    tree: &ContainmentTree,
    cls: &Classification,
    start: StartSpec,
    at: Node,
    oracle: &dyn HittingOracle,
) -> Result<(MixtureMeasure, ReportNode), PredictError> {
    let d = characteristic_domain(tree, cls, at);
    let kids = tree.children_of(d);
    let trapping: Vec<usize> = kids.iter().copied().filter(|&c| cls.trapping[c]).collect();
    let redist: Vec<usize> = kids.iter().copied().filter(|&c| !cls.trapping[c]).collect();
    let name = |i: usize| tree.id(Node::Dom(i)).to_string();

    let mut report = ReportNode {
        start: start.describe(),
        characteristic: tree.id(d).to_string(),
        trapping_children: trapping.iter().map(|&i| name(i)).collect(),
        redistribution_children: redist.iter().map(|&i| name(i)).collect(),
        hitting: None,
        unique_chain: None,
        descents: Vec::new(),
    };

    if trapping.is_empty() {
        let chains = admissible_chains(tree, cls, d);
        match chains.len() {
            0 => return Err(PredictError::NoAdmissibleChain(tree.id(d).to_string())),
            1 => {}
            n => {
                return Err(PredictError::MultipleAdmissibleChainsWithEmptyTrapSet {
                    id: tree.id(d).to_string(),
                    count: n,
                })
            }
        }
        let chain = &chains[0];
        report.unique_chain = Some(chain.nodes.iter().map(|&n| tree.id(n).to_string()).collect());
        let leaf = tree.id(chain.first()).to_string();
        return Ok((MixtureMeasure::point_mass(&leaf), report));
    }

    let query = HittingQuery {
        ambient: d,
        redistribution: redist.iter().map(|&i| name(i)).collect(),
        targets: trapping.iter().map(|&i| name(i)).collect(),
        start,
    };
    let pi = oracle.resolve(&query)?;
    report.hitting = Some(pi.mass.clone());

    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    for &t in &trapping {
        let id = name(t);
        let w = pi.mass.get(&id).copied().unwrap_or(0.0);
        if w <= 1e-12 {
            continue;
        }
        let sub_start = match pi.landing.get(&id) {
            Some(atoms) if !atoms.is_empty() => {
                let total: f64 = atoms.iter().map(|(_, m)| m).sum();
                let normalized = atoms
                    .iter()
                    .map(|&(p, m)| (p, m / total))
                    .collect::<Vec<_>>();
                StartSpec::WeightedBoundary(id.clone(), normalized)
            }
            _ => StartSpec::Boundary(id.clone()),
        };
        let (sub, sub_report) = descend(scene, tree, cls, sub_start, Node::Dom(t), oracle)?;
        for (leaf, m) in sub.weights {
            *weights.entry(leaf).or_insert(0.0) += w * m;
        }
        report.descents.push((id, w, sub_report));
    }
    Ok((MixtureMeasure { weights }, report))
}
