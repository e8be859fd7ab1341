//! Exponent algebra for the nesting hierarchy.
//!
//! Permeabilities are monomials `eps^{a_k}` and the observation time is
//! `t = eps^{-b}`, so every comparison of orders of magnitude reduces to an
//! exact comparison of rational exponents. A chain is a leaf-to-ancestor path
//! in the containment tree; its order exponent is the sum of the permeability
//! exponents along it (the root contributes nothing). The order exponent of a
//! domain is the smallest chain exponent among chains ending there — the
//! scale `eps^{-m_D}` of the time needed to escape a neighborhood of the
//! domain. A domain is trapping at time exponent `b` when `m_D > b`; the
//! equality case is rejected outright since the limit theorem excludes it.

use crate::geometry::{ContainmentTree, GeometryError, Node};
use num::rational::Rational64;
use num::Zero;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("time exponent b = {b} equals the order exponent of {id}; the time scale must separate")]
    BoundaryTimeScale { id: String, b: ExponentQ },
    #[error("the root has no siblings")]
    RootHasNoSiblings,
}

/// Exact rational exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExponentQ(pub Rational64);

// Rationals travel as "p/q" strings to avoid float drift in files.
impl Serialize for ExponentQ {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExponentQ {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ExponentQ::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid rational {s:?}")))
    }
}

impl ExponentQ {
    pub fn new(numer: i64, denom: i64) -> Self {
        ExponentQ(Rational64::new(numer, denom))
    }

    pub fn from_integer(n: i64) -> Self {
        ExponentQ(Rational64::from_integer(n))
    }

    /// Parse "p", "p/q" or a decimal like "2.5".
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: i64 = p.trim().parse().ok()?;
            let q: i64 = q.trim().parse().ok()?;
            if q == 0 {
                return None;
            }
            return Some(ExponentQ(Rational64::new(p, q)));
        }
        if let Some((int, frac)) = s.split_once('.') {
            let denom = 10i64.checked_pow(frac.len() as u32)?;
            let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
            let fr: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
            let numer = int * denom + if int < 0 { -fr } else { fr };
            return Some(ExponentQ(Rational64::new(numer, denom)));
        }
        s.parse::<i64>().ok().map(ExponentQ::from_integer)
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for ExponentQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom() == &1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl std::ops::Add for ExponentQ {
    type Output = ExponentQ;
    fn add(self, rhs: ExponentQ) -> ExponentQ {
        ExponentQ(self.0 + rhs.0)
    }
}

/// A leaf-to-ancestor path in the containment tree. `nodes` runs from the
/// leaf (first element) up to the last element following parent links; the
/// order exponent is the sum of permeability exponents of all elements, the
/// root contributing zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub nodes: Vec<Node>,
    pub order_exponent: ExponentQ,
}

impl Chain {
    pub fn first(&self) -> Node {
        self.nodes[0]
    }

    pub fn display(&self, tree: &ContainmentTree) -> String {
        let names: Vec<&str> = self.nodes.iter().map(|&n| tree.id(n)).collect();
        format!("({}) ~ eps^{}", names.join(", "), self.order_exponent)
    }
}

/// Trapping status of every domain at a given time exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub time_exponent: ExponentQ,
    pub order_exponent: Vec<ExponentQ>,
    pub trapping: Vec<bool>,
}

impl Classification {
    pub fn is_trapping(&self, node: Node) -> bool {
        match node {
            Node::Root => false,
            Node::Dom(i) => self.trapping[i],
        }
    }
}

/// All chains whose last element is `target`: every leaf-to-`target` path in
/// the containment subtree (for the root: all leaf-to-root paths).
pub fn chains_to(tree: &ContainmentTree, target: Node) -> Vec<Chain> {
    let mut leaves_below: Vec<usize> = Vec::new();
    fn collect_leaves(tree: &ContainmentTree, node: Node, out: &mut Vec<usize>) {
        let kids = tree.children_of(node);
        if kids.is_empty() {
            if let Node::Dom(i) = node {
                out.push(i);
            }
            return;
        }
        for &c in kids {
            collect_leaves(tree, Node::Dom(c), out);
        }
    }
    collect_leaves(tree, target, &mut leaves_below);
    if tree.children_of(target).is_empty() {
        if let Node::Dom(i) = target {
            leaves_below = vec![i];
        }
    }

    let mut chains: Vec<Chain> = leaves_below
        .into_iter()
        .map(|leaf| {
            let mut nodes = Vec::new();
            let mut exp = ExponentQ(Rational64::zero());
            let mut cur = Node::Dom(leaf);
            loop {
                nodes.push(cur);
                if let Node::Dom(i) = cur {
                    exp = exp + ExponentQ(tree.exponent[i]);
                }
                if cur == target {
                    break;
                }
                cur = match cur {
                    Node::Dom(i) => tree.parent_node(i),
                    Node::Root => break,
                };
            }
            Chain {
                nodes,
                order_exponent: exp,
            }
        })
        .collect();
    chains.sort_by(|a, b| a.order_exponent.cmp(&b.order_exponent));
    chains
}

/// Order exponent `m_D`: minimum chain exponent over chains ending at `D`
/// (the order of the domain is `eps^{m_D}`, the largest chain order).
pub fn domain_order_exponent(tree: &ContainmentTree, target: Node) -> ExponentQ {
    chains_to(tree, target)
        .into_iter()
        .map(|c| c.order_exponent)
        .min()
        .expect("every node has at least one chain")
}

/// Classify every domain as trapping (`m_D > b`) or non-trapping (`m_D < b`).
/// Equality for any domain is an error: the time scale must separate orders.
pub fn classify(tree: &ContainmentTree, b: ExponentQ) -> Result<Classification, AsymptoticsError> {
    let mut order = Vec::with_capacity(tree.len());
    let mut trapping = Vec::with_capacity(tree.len());
    for i in 0..tree.len() {
        let m = domain_order_exponent(tree, Node::Dom(i));
        if m == b {
            return Err(AsymptoticsError::BoundaryTimeScale {
                id: tree.id(Node::Dom(i)).to_string(),
                b,
            });
        }
        trapping.push(m > b);
        order.push(m);
    }
    Ok(Classification {
        time_exponent: b,
        order_exponent: order,
        trapping,
    })
}

/// Characteristic domain of a start cell: the lowest-rank trapping domain
/// whose closure contains the cell, or the root if there is none. `at` is the
/// cell (or domain) the start point belongs to; a point on a membrane is
/// treated as belonging to the closure of that membrane's domain.
pub fn characteristic_domain(tree: &ContainmentTree, cls: &Classification, at: Node) -> Node {
    let mut cur = at;
    loop {
        match cur {
            Node::Root => return Node::Root,
            Node::Dom(i) => {
                if cls.trapping[i] {
                    return cur;
                }
                cur = tree.parent_node(i);
            }
        }
    }
}

/// True iff the order of `D` dominates the order of every sibling (vacuously
/// true for an only child): `m_D > m_{D'}` for all siblings `D'`.
pub fn is_principal(tree: &ContainmentTree, d: Node) -> Result<bool, AsymptoticsError> {
    let i = match d {
        Node::Root => return Err(AsymptoticsError::RootHasNoSiblings),
        Node::Dom(i) => i,
    };
    let m = domain_order_exponent(tree, d);
    let parent = tree.parent_node(i);
    Ok(tree
        .children_of(parent)
        .iter()
        .filter(|&&s| s != i)
        .all(|&s| m > domain_order_exponent(tree, Node::Dom(s))))
}

/// Chains ending at `target` all of whose non-final elements are trapping or
/// principal.
pub fn admissible_chains(
    tree: &ContainmentTree,
    cls: &Classification,
    target: Node,
) -> Vec<Chain> {
    chains_to(tree, target)
        .into_iter()
        .filter(|chain| {
            chain.nodes[..chain.nodes.len() - 1].iter().all(|&n| {
                cls.is_trapping(n) || is_principal(tree, n).unwrap_or(false)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_tree;
    use crate::scenes;

    fn tree_b() -> ContainmentTree {
        build_tree(&scenes::scene_b()).unwrap()
    }

    fn q(n: i64, d: i64) -> ExponentQ {
        ExponentQ::new(n, d)
    }

    fn names(tree: &ContainmentTree, chain: &Chain) -> Vec<String> {
        chain.nodes.iter().map(|&n| tree.id(n).to_string()).collect()
    }

    #[test]
    fn exponent_parsing_and_display() {
        assert_eq!(ExponentQ::parse("3/2"), Some(q(3, 2)));
        assert_eq!(ExponentQ::parse("2"), Some(q(2, 1)));
        assert_eq!(ExponentQ::parse("2.5"), Some(q(5, 2)));
        assert_eq!(ExponentQ::parse("x"), None);
        assert_eq!(q(5, 2).to_string(), "5/2");
        assert_eq!(q(4, 2).to_string(), "2");
    }

    #[test]
    fn chains_of_figure_tree() {
        let tree = tree_b();
        let d6 = tree.node_of("D6").unwrap();
        let chains = chains_to(&tree, d6);
        assert_eq!(chains.len(), 1);
        assert_eq!(names(&tree, &chains[0]), ["D1", "D4", "D6"]);
        assert_eq!(chains[0].order_exponent, q(3, 1));

        let d7 = tree.node_of("D7").unwrap();
        let chains = chains_to(&tree, d7);
        let got: Vec<(Vec<String>, ExponentQ)> = chains
            .iter()
            .map(|c| (names(&tree, c), c.order_exponent))
            .collect();
        assert_eq!(
            got,
            vec![
                (vec!["D3".into(), "D7".into()], q(2, 1)),
                (vec!["D2".into(), "D5".into(), "D7".into()], q(3, 1)),
                (vec!["D1".into(), "D4".into(), "D6".into(), "D7".into()], q(4, 1)),
            ]
        );

        let d1 = tree.node_of("D1").unwrap();
        let chains = chains_to(&tree, d1);
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].order_exponent, q(1, 1));
    }

    #[test]
    fn domain_orders() {
        let tree = tree_b();
        let m = |id: &str| domain_order_exponent(&tree, tree.node_of(id).unwrap());
        assert_eq!(m("D1"), q(1, 1));
        assert_eq!(m("D6"), q(3, 1));
        assert_eq!(m("D7"), q(2, 1));
        assert_eq!(m("D0"), q(2, 1));
    }

    #[test]
    fn classification_regimes() {
        let tree = tree_b();
        let cls = classify(&tree, q(1, 2)).unwrap();
        assert!(cls.trapping.iter().all(|&t| t));

        let cls = classify(&tree, q(5, 2)).unwrap();
        let trapped: Vec<&str> = (0..tree.len())
            .filter(|&i| cls.trapping[i])
            .map(|i| tree.id(Node::Dom(i)))
            .collect();
        assert_eq!(trapped, ["D6"]);

        assert!(matches!(
            classify(&tree, q(3, 1)),
            Err(AsymptoticsError::BoundaryTimeScale { .. })
        ));
    }

    #[test]
    fn characteristic_domains() {
        let tree = tree_b();
        let cls = classify(&tree, q(3, 2)).unwrap();
        // Start in D1: D1 is not trapping (m=1), D4 is (m=2).
        let d1 = tree.index_of("D1").unwrap();
        let ch = characteristic_domain(&tree, &cls, Node::Dom(d1));
        assert_eq!(tree.id(ch), "D4");
        // Start in the D7 cell.
        let d7 = tree.index_of("D7").unwrap();
        let ch = characteristic_domain(&tree, &cls, Node::Dom(d7));
        assert_eq!(tree.id(ch), "D7");
        // Nothing trapping at b = 7/2.
        let cls = classify(&tree, q(7, 2)).unwrap();
        assert_eq!(characteristic_domain(&tree, &cls, Node::Dom(d1)), Node::Root);
    }

    #[test]
    fn principal_domains() {
        let tree = tree_b();
        let p = |id: &str| is_principal(&tree, tree.node_of(id).unwrap()).unwrap();
        assert!(p("D6"));
        assert!(!p("D5"));
        assert!(!p("D3"));
        assert!(p("D1"));
        assert!(matches!(
            is_principal(&tree, Node::Root),
            Err(AsymptoticsError::RootHasNoSiblings)
        ));
        // At most one sibling in any sibling set is principal.
        let d7 = tree.node_of("D7").unwrap();
        let principal_count = tree
            .children_of(d7)
            .iter()
            .filter(|&&c| is_principal(&tree, Node::Dom(c)).unwrap())
            .count();
        assert_eq!(principal_count, 1);
    }

    #[test]
    fn admissibility_filter() {
        let tree = tree_b();

        let cls = classify(&tree, q(7, 2)).unwrap();
        let chains = admissible_chains(&tree, &cls, Node::Root);
        assert_eq!(chains.len(), 1);
        assert_eq!(names(&tree, &chains[0]), ["D1", "D4", "D6", "D7", "D0"]);

        let cls = classify(&tree, q(1, 2)).unwrap();
        let d6 = tree.node_of("D6").unwrap();
        let chains = admissible_chains(&tree, &cls, d6);
        assert_eq!(chains.len(), 1);
        assert_eq!(names(&tree, &chains[0]), ["D1", "D4", "D6"]);

        let cls = classify(&tree, q(5, 2)).unwrap();
        let chains = admissible_chains(&tree, &cls, Node::Root);
        assert_eq!(chains.len(), 1);
        assert_eq!(names(&tree, &chains[0]), ["D1", "D4", "D6", "D7", "D0"]);
    }

    #[test]
    fn order_exponent_bounds_chains() {
        let tree = tree_b();
        for i in 0..tree.len() {
            let m = domain_order_exponent(&tree, Node::Dom(i));
            let chains = chains_to(&tree, Node::Dom(i));
            assert!(chains.iter().all(|c| c.order_exponent >= m));
            assert!(chains.iter().any(|c| c.order_exponent == m));
        }
    }
}
