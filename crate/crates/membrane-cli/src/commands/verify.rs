//! `membrane verify`: statistical suites with a pass/fail contract.

use super::{CliError, EXIT_FAIL, EXIT_OK};
use crate::scene_file::load_scene;
use membrane::geometry::{build_tree, Point};
use membrane::predictor::{HittingQuery, StartSpec};
use membrane::verify::{
    end_to_end, lemma_suite, trace_consistency, ExperimentSpec, LemmaSuiteParams, SimOverrides,
};

pub struct VerifyArgs<'a> {
    pub scene: &'a str,
    pub suite: &'a str,
    pub epsilons: &'a str,
    pub time_exponent: &'a str,
    pub starts: &'a str,
    pub particles: usize,
    pub seed: Option<u64>,
    pub tv_tolerance: f64,
    pub delta: Option<f64>,
    pub max_step: Option<f64>,
    pub boundary_refine: Option<f64>,
    /// Test hook: corrupt the prediction so the harness must report failure.
    pub inject_wrong_prediction: bool,
    /// Trace suite: ambient, redistribution set, target set.
    pub ambient: Option<&'a str>,
    pub redistribution: &'a str,
    pub targets: &'a str,
}

fn split_ids(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn run(args: &VerifyArgs) -> Result<i32, CliError> {
    let scene = load_scene(args.scene).map_err(|e| CliError::usage(e.to_string()))?;
    let seed = super::resolve_seed(args.seed);
    let sim = SimOverrides {
        jump_delta: args.delta,
        max_step: args.max_step,
        boundary_refine: args.boundary_refine,
        time_budget: None,
    };
    let mut all_pass = true;

    let run_end_to_end = |all_pass: &mut bool| -> Result<(), CliError> {
        let b = super::parse_exponent(args.time_exponent)?;
        let starts = super::parse_f64_list(args.starts)?
            .into_iter()
            .map(Point::d1)
            .collect::<Vec<_>>();
        if scene.dimension != 1 {
            return Err(CliError::usage(
                "the end-to-end suite drives 1D scenes; trace/lemma suites handle 2D",
            ));
        }
        let spec = ExperimentSpec {
            scene: scene.clone(),
            epsilon_ladder: super::parse_f64_list(args.epsilons)?,
            b,
            starts,
            particles: args.particles,
            seed,
            tv_tolerance: args.tv_tolerance,
            sim: sim.clone(),
        };
        let mut reports = end_to_end(&spec).map_err(|e| CliError::fail(e.to_string()))?;
        if args.inject_wrong_prediction {
            for r in reports.iter_mut() {
                // Deliberate corruption: all predicted mass on the last leaf.
                let last = r.predicted.weights.keys().last().cloned();
                if let Some(k) = last {
                    r.predicted.weights.iter_mut().for_each(|(_, w)| *w = 0.0);
                    r.predicted.weights.insert(k, 1.0);
                }
                r.tv = membrane::verify::tv_distance(&r.empirical, &r.predicted.weights);
                r.pass = r.tv <= spec.tv_tolerance;
            }
        }
        println!("end-to-end: b = {b}, tolerance tv <= {}", spec.tv_tolerance);
        println!("{:>8} {:>8} {:>10} {:>8}  outcome", "eps", "start", "tv", "pass");
        for r in &reports {
            println!(
                "{:>8} {:>8} {:>10.4} {:>8}  empirical {:?} predicted {:?}",
                r.epsilon,
                r.start[0],
                r.tv,
                if r.pass { "ok" } else { "FAIL" },
                r.empirical,
                r.predicted.weights
            );
            *all_pass &= r.pass;
        }
        Ok(())
    };

    let run_lemmas = |all_pass: &mut bool| -> Result<(), CliError> {
        let mut params = LemmaSuiteParams::desk_defaults();
        params.seed = seed;
        if args.particles > 0 {
            params.direction_n = args.particles;
            params.time_n = (args.particles / 5).max(500);
        }
        let ladder = super::parse_f64_list(args.epsilons)?;
        if !ladder.is_empty() {
            params.direction_epsilons = ladder;
        }
        let report = lemma_suite(&scene, &params).map_err(|e| CliError::fail(e.to_string()))?;
        println!("lemma suite:");
        for (eps, p) in &report.direction_points {
            println!(
                "  exit direction: eps = {eps:<7} P(outward) = {p:.5}  eps^-1 P = {:.4}",
                p / eps
            );
        }
        println!(
            "  exit-direction slope = {:.4} (expect 1), r^2 = {:.5}",
            report.direction_slope, report.direction_r2
        );
        println!(
            "  collar exit-time ratio = {:.3} (expect {:.3})",
            report.exit_time_ratio, report.exit_time_ratio_expected
        );
        println!(
            "  trap-escape slope = {:.4} (expect {:.2})",
            report.escape_slope, report.escape_slope_expected
        );
        println!("  return probability = {:.4}", report.return_probability);
        let ok = (report.direction_slope - 1.0).abs() <= 0.1
            && report.direction_r2 >= 0.98
            && (report.exit_time_ratio / report.exit_time_ratio_expected - 1.0).abs() <= 0.2
            && (report.escape_slope - report.escape_slope_expected).abs() <= 0.15
            && report.return_probability >= 0.95;
        println!("  lemmas: {}", if ok { "ok" } else { "FAIL" });
        *all_pass &= ok;
        Ok(())
    };

    let run_trace = |all_pass: &mut bool| -> Result<(), CliError> {
        let tree = build_tree(&scene).map_err(|e| CliError::fail(e.to_string()))?;
        let ambient = args
            .ambient
            .ok_or_else(|| CliError::usage("trace suite needs --ambient"))?;
        let epsilons = super::parse_f64_list(args.epsilons)?;
        let eps = *epsilons
            .first()
            .ok_or_else(|| CliError::usage("trace suite needs --epsilons"))?;
        let starts = super::parse_f64_list(args.starts)?;
        let start = *starts
            .first()
            .ok_or_else(|| CliError::usage("trace suite needs --starts"))?;
        let query = HittingQuery {
            ambient: tree
                .node_of(ambient)
                .map_err(|e| CliError::usage(e.to_string()))?,
            redistribution: split_ids(args.redistribution),
            targets: split_ids(args.targets),
            start: StartSpec::Point(Point::d1(start)),
        };
        let report = trace_consistency(&scene, &query, eps, args.particles.max(1000), seed, &sim)
            .map_err(|e| CliError::fail(e.to_string()))?;
        println!("trace consistency at eps = {eps}:");
        println!("  clocked membrane process split: {:?}", report.x_split);
        println!("  redistribution process split:   {:?}", report.y_split);
        if let Some(reference) = &report.reference {
            println!("  exact solver split:             {reference:?}");
        }
        println!(
            "  tv(X trace, Y) = {:.4}  mean trace time = {:.3} of {:.3} elapsed",
            report.tv_xy, report.mean_trace_time, report.mean_elapsed
        );
        let ok = report.tv_xy <= args.tv_tolerance;
        println!("  trace: {}", if ok { "ok" } else { "FAIL" });
        *all_pass &= ok;
        Ok(())
    };

    match args.suite {
        "end-to-end" => run_end_to_end(&mut all_pass)?,
        "lemmas" => run_lemmas(&mut all_pass)?,
        "trace" => run_trace(&mut all_pass)?,
        "all" => {
            run_end_to_end(&mut all_pass)?;
            run_lemmas(&mut all_pass)?;
            run_trace(&mut all_pass)?;
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown suite {other:?}: expected lemmas, end-to-end, trace or all"
            )))
        }
    }

    println!("RESULT: {}", if all_pass { "pass" } else { "fail" });
    Ok(if all_pass { EXIT_OK } else { EXIT_FAIL })
}
