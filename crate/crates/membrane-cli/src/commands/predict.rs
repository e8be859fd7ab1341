//! `membrane predict`: the limiting mixture and its recursion trace.

use super::{CliError, EXIT_OK};
use crate::scene_file::load_scene;
use membrane::geometry::build_tree;
use membrane::predictor::{predict_report, HittingOracle, ReportNode};
use membrane::simulate::{McY, YSimConfig};
use membrane::solve::one_d::Analytic1d;
use membrane::solve::two_d::Fd2d;

pub struct PredictArgs<'a> {
    pub scene: &'a str,
    pub time_exponent: &'a str,
    pub start: &'a str,
    pub oracle: &'a str,
    pub grid_spacing: Option<f64>,
    pub particles: usize,
    pub seed: Option<u64>,
    pub json: bool,
}

pub fn run(args: &PredictArgs) -> Result<i32, CliError> {
    let scene = load_scene(args.scene).map_err(|e| CliError::usage(e.to_string()))?;
    let b = super::parse_exponent(args.time_exponent)?;
    let start = super::parse_point(args.start, scene.dimension)?;
    let tree = build_tree(&scene).map_err(|e| CliError::fail(e.to_string()))?;
    let seed = super::resolve_seed(args.seed);

    let oracle: Box<dyn HittingOracle> = match args.oracle {
        "analytic" => {
            if scene.dimension != 1 {
                return Err(CliError::usage(
                    "the analytic oracle handles 1D scenes only; use --oracle fd or mc",
                ));
            }
            Box::new(Analytic1d {
                scene: &scene,
                tree: &tree,
            })
        }
        "fd" => Box::new(Fd2d {
            scene: &scene,
            tree: &tree,
            spacing: args.grid_spacing.unwrap_or(scene.period / 64.0),
        }),
        "mc" => {
            let mut cfg = YSimConfig::for_scene(&scene);
            cfg.rng_seed = seed;
            Box::new(McY {
                scene: &scene,
                tree: &tree,
                cfg,
                particles: args.particles,
            })
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown oracle {other:?}: expected analytic, fd or mc"
            )))
        }
    };

    let report = predict_report(&scene, &tree, b, &start, oracle.as_ref())
        .map_err(|e| CliError::fail(e.to_string()))?;

    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
        return Ok(EXIT_OK);
    }

    println!(
        "limiting mixture at t = eps^-{b} from start {:?}:",
        &start.0[..scene.dimension]
    );
    for (id, w) in &report.mixture.weights {
        println!("  lambda({id}) x {w:.9}");
    }
    println!("\nrecursion trace:");
    print_trace(&report.trace, 1.0, 0);
    Ok(EXIT_OK)
}

fn print_trace(node: &ReportNode, weight: f64, depth: usize) {
    let pad = "  ".repeat(depth + 1);
    println!("{pad}start: {} (carried weight {weight:.6})", node.start);
    println!(
        "{pad}characteristic domain: {}  trapping children: [{}]  redistribution: [{}]",
        node.characteristic,
        node.trapping_children.join(", "),
        node.redistribution_children.join(", ")
    );
    if let Some(hitting) = &node.hitting {
        let parts: Vec<String> = hitting
            .iter()
            .map(|(k, v)| format!("{k}: {v:.9}"))
            .collect();
        println!("{pad}hitting distribution: {{{}}}", parts.join(", "));
    }
    if let Some(chain) = &node.unique_chain {
        println!("{pad}empty trap set; unique admissible chain ({})", chain.join(", "));
    }
    for (target, w, sub) in &node.descents {
        println!("{pad}descend into {target} with weight {w:.9}:");
        print_trace(sub, weight * w, depth + 1);
    }
}
