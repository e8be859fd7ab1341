//! `membrane classify`: tree, orders, trapping statuses, characteristic
//! domains, and admissible chains at a given time exponent.

use super::{CliError, EXIT_OK};
use crate::scene_file::load_scene;
use membrane::asymptotics::{
    admissible_chains, characteristic_domain, chains_to, classify, domain_order_exponent,
    ExponentQ,
};
use membrane::geometry::{build_tree, Node};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Serialize)]
pub struct ClassifyReport {
    pub time_exponent: ExponentQ,
    pub ranks: BTreeMap<String, u32>,
    pub order_exponents: BTreeMap<String, ExponentQ>,
    pub trapping: Vec<String>,
    pub characteristic_by_cell: BTreeMap<String, String>,
    /// Admissible chains per distinct characteristic domain.
    pub admissible: BTreeMap<String, Vec<String>>,
}

pub fn run(scene_spec: &str, b_str: &str, json: bool) -> Result<i32, CliError> {
    let scene = load_scene(scene_spec).map_err(|e| CliError::usage(e.to_string()))?;
    let b = super::parse_exponent(b_str)?;
    let tree = build_tree(&scene).map_err(|e| CliError::fail(e.to_string()))?;
    let cls = classify(&tree, b).map_err(|e| CliError::fail(e.to_string()))?;

    let mut ranks = BTreeMap::new();
    let mut orders = BTreeMap::new();
    ranks.insert("D0".to_string(), tree.root_rank);
    for i in 0..tree.len() {
        let id = tree.id(Node::Dom(i)).to_string();
        ranks.insert(id.clone(), tree.rank[i]);
        orders.insert(id, cls.order_exponent[i]);
    }
    if !tree.is_empty() {
        orders.insert("D0".to_string(), domain_order_exponent(&tree, Node::Root));
    }
    let trapping: Vec<String> = (0..tree.len())
        .filter(|&i| cls.trapping[i])
        .map(|i| tree.id(Node::Dom(i)).to_string())
        .collect();

    let mut characteristic = BTreeMap::new();
    let mut admissible = BTreeMap::new();
    let mut cells: Vec<Node> = vec![Node::Root];
    cells.extend((0..tree.len()).map(Node::Dom));
    for cell in cells {
        let ch = characteristic_domain(&tree, &cls, cell);
        characteristic.insert(tree.id(cell).to_string(), tree.id(ch).to_string());
        admissible.entry(tree.id(ch).to_string()).or_insert_with(|| {
            admissible_chains(&tree, &cls, ch)
                .iter()
                .map(|c| c.display(&tree))
                .collect()
        });
    }

    let report = ClassifyReport {
        time_exponent: b,
        ranks,
        order_exponents: orders,
        trapping,
        characteristic_by_cell: characteristic,
        admissible,
    };

    if json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
        return Ok(EXIT_OK);
    }

    println!(
        "scene: {} domain(s), dimension {}, period {}",
        scene.domains.len(),
        scene.dimension,
        scene.period
    );
    println!("time exponent b = {b}  (t = eps^-{b})");
    println!("\ncontainment tree:");
    fn print_node(
        tree: &membrane::geometry::ContainmentTree,
        report: &ClassifyReport,
        node: Node,
        depth: usize,
    ) {
        let id = tree.id(node);
        let status = if report.trapping.iter().any(|t| t == id) {
            "trapping"
        } else if node == Node::Root {
            "root"
        } else {
            "non-trapping"
        };
        let order = report
            .order_exponents
            .get(id)
            .map(|m| format!(", m = {m}"))
            .unwrap_or_default();
        println!(
            "{:indent$}{id}  (rank {}{order}, {status})",
            "",
            tree.rank_of(node),
            indent = depth * 2
        );
        for &c in tree.children_of(node) {
            print_node(tree, report, Node::Dom(c), depth + 1);
        }
    }
    print_node(&tree, &report, Node::Root, 0);

    println!("\nall chains to the root:");
    for chain in chains_to(&tree, Node::Root) {
        println!("  {}", chain.display(&tree));
    }

    println!("\ncharacteristic domain per cell:");
    for (cell, ch) in &report.characteristic_by_cell {
        println!("  cell {cell} -> {ch}");
    }

    println!("\nadmissible chains:");
    for (ch, chains) in &report.admissible {
        println!("  characteristic {ch}:");
        for c in chains {
            println!("    {c}");
        }
    }
    Ok(EXIT_OK)
}
