//! `membrane simulate`: particle runs with histogram, occupation, and
//! manifest outputs.

use super::{CliError, EXIT_OK};
use crate::manifest::RunManifest;
use crate::scene_file::load_scene;
use membrane::geometry::build_tree;
use membrane::simulate::{run_x_to_time_many, XSimConfig};
use std::fmt::Write as _;
use std::path::PathBuf;

pub struct SimulateArgs<'a> {
    pub scene: &'a str,
    pub epsilon: f64,
    pub time_exponent: Option<&'a str>,
    pub t_final: Option<f64>,
    pub start: &'a str,
    pub particles: usize,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub max_step: Option<f64>,
    pub boundary_refine: Option<f64>,
    pub out: &'a str,
    pub events: bool,
}

pub fn run(args: &SimulateArgs) -> Result<i32, CliError> {
    if args.particles == 0 {
        return Err(CliError::usage("--particles must be at least 1"));
    }
    let scene = load_scene(args.scene).map_err(|e| CliError::usage(e.to_string()))?;
    let tree = build_tree(&scene).map_err(|e| CliError::fail(e.to_string()))?;
    let start = super::parse_point(args.start, scene.dimension)?;
    let seed = super::resolve_seed(args.seed);

    let t_final = match (args.time_exponent, args.t_final) {
        (Some(b), None) => {
            let b = super::parse_exponent(b)?;
            args.epsilon.powf(-b.to_f64())
        }
        (None, Some(t)) => t,
        _ => {
            return Err(CliError::usage(
                "exactly one of --time-exponent and --t-final is required",
            ))
        }
    };

    let mut cfg = XSimConfig::for_scene(&scene, args.epsilon);
    cfg.rng_seed = seed;
    cfg.record_hits = args.events;
    if let Some(d) = args.delta {
        cfg.jump_delta = d;
    }
    if let Some(m) = args.max_step {
        cfg.max_step = m;
    }
    if let Some(r) = args.boundary_refine {
        cfg.boundary_refine = r;
    }
    if cfg.time_budget < t_final {
        cfg.time_budget = t_final * (1.0 + 1e-9);
    }

    let results = run_x_to_time_many(&scene, &tree, &cfg, start, t_final, args.particles)
        .map_err(|e| CliError::fail(e.to_string()))?;

    let out = PathBuf::from(args.out);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::fail(format!("cannot create output directory: {e}")))?;
        }
    }
    let with_suffix = |suffix: &str| -> PathBuf {
        let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(suffix);
        out.with_file_name(name)
    };

    // Final-position histogram.
    let mut hist = String::new();
    match scene.dimension {
        1 => {
            let bins = 200usize;
            let mut counts = vec![0u64; bins];
            for r in &results {
                let b = ((r.final_position.0[0] / scene.period * bins as f64) as usize)
                    .min(bins - 1);
                counts[b] += 1;
            }
            hist.push_str("bin,x_lo,x_hi,count\n");
            for (i, c) in counts.iter().enumerate() {
                let lo = i as f64 * scene.period / bins as f64;
                let hi = (i + 1) as f64 * scene.period / bins as f64;
                let _ = writeln!(hist, "{i},{lo},{hi},{c}");
            }
        }
        _ => {
            let bins = 64usize;
            let mut counts = vec![0u64; bins * bins];
            for r in &results {
                let bx = ((r.final_position.0[0] / scene.period * bins as f64) as usize)
                    .min(bins - 1);
                let by = ((r.final_position.0[1] / scene.period * bins as f64) as usize)
                    .min(bins - 1);
                counts[by * bins + bx] += 1;
            }
            hist.push_str("x_bin,y_bin,count\n");
            for y in 0..bins {
                for x in 0..bins {
                    let _ = writeln!(hist, "{x},{y},{}", counts[y * bins + x]);
                }
            }
        }
    }
    std::fs::write(with_suffix("_histogram.csv"), hist)
        .map_err(|e| CliError::fail(e.to_string()))?;

    // Occupation totals per cell.
    let mut occupation = vec![0.0f64; scene.domains.len() + 1];
    let mut elapsed = 0.0;
    for r in &results {
        for (slot, t) in r.occupation_time.iter().enumerate() {
            occupation[slot] += t;
        }
        elapsed += r.elapsed;
    }
    let mut occ = String::from("cell,time,fraction\n");
    let _ = writeln!(occ, "D0,{},{}", occupation[0], occupation[0] / elapsed);
    for (i, d) in scene.domains.iter().enumerate() {
        let _ = writeln!(
            occ,
            "{},{},{}",
            d.id,
            occupation[i + 1],
            occupation[i + 1] / elapsed
        );
    }
    std::fs::write(with_suffix("_occupation.csv"), occ)
        .map_err(|e| CliError::fail(e.to_string()))?;

    if args.events {
        let mut ev = String::from("particle,time,event,membrane,position\n");
        for (p, r) in results.iter().enumerate() {
            for h in &r.hit_log {
                let _ = writeln!(
                    ev,
                    "{p},{},{},{},{}",
                    h.time,
                    if h.inward { "kick_in" } else { "kick_out" },
                    scene.domains[h.membrane].id,
                    r.final_position.0[0]
                );
            }
        }
        std::fs::write(with_suffix("_events.csv"), ev)
            .map_err(|e| CliError::fail(e.to_string()))?;
    }

    let manifest = RunManifest::new(
        args.scene,
        serde_json::json!({
            "epsilon": args.epsilon,
            "t_final": t_final,
            "start": &start.0[..scene.dimension],
            "particles": args.particles,
            "jump_delta": cfg.jump_delta,
            "max_step": cfg.max_step,
            "boundary_refine": cfg.boundary_refine,
        }),
        seed,
    );
    manifest
        .write(&with_suffix("_manifest.json"))
        .map_err(|e| CliError::fail(e.to_string()))?;

    println!(
        "simulated {} particle(s) to t = {t_final} ({} total time units)",
        args.particles, elapsed
    );
    Ok(EXIT_OK)
}
