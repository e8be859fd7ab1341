//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Monte Carlo criteria use fixed seeds and the stated sample sizes. The
//! end-to-end matrix (criterion 7) carries a wall-clock guard: each slice is
//! cost-projected from a short pilot and only run if it fits the criterion's
//! own runtime budget; setting MEMBRANE_ACCEPT_FULL=1 lifts the guard and
//! runs every slice regardless of projected cost.

use membrane::asymptotics::ExponentQ;
use membrane::geometry::{build_tree, Node, Point};
use membrane::predictor::{predict, HittingQuery, StartSpec};
use membrane::scenes;
use membrane::simulate::{
    boundary_excursion_stats, run_x_to_time_many, run_x_until_absorbed_many, run_y_many,
    CollarSpec, XSimConfig, YSimConfig,
};
use membrane::solve::one_d::{hitting_1d, transmission_hitting_1d, Analytic1d};
use membrane::solve::two_d::hitting_2d_fd;
use membrane::verify::{
    end_to_end, exit_law_uniformity, loglog_slope, ExperimentSpec, SimOverrides,
};
use std::collections::BTreeMap;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

/// Criteria run one at a time: several carry their own wall-clock budgets,
/// and those must measure the tool rather than harness contention. The
/// parallelism lives inside each criterion (rayon fans particles out).
static GATE: Mutex<()> = Mutex::new(());

fn serialize() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn membrane_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_membrane"))
}

fn q(n: i64, d: i64) -> ExponentQ {
    ExponentQ::new(n, d)
}

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

// --------------------------------------------------------------------------
// 1. Regime table: classify + predict reproduce the narrated outcomes.
// --------------------------------------------------------------------------

#[test]
fn criterion_1_regime_table() {
    let _gate = serialize();
    let t0 = Instant::now();
    let expected_trapping: &[(&str, &[&str])] = &[
        ("1/2", &["D1", "D2", "D3", "D4", "D5", "D6", "D7"]),
        ("3/2", &["D4", "D5", "D6", "D7"]),
        ("5/2", &["D6"]),
        ("7/2", &[]),
        ("9/2", &[]),
    ];
    for (b, want) in expected_trapping {
        let out = membrane_bin()
            .args(["classify", "--scene", "B", "--time-exponent", b, "--json"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "classify b={b}");
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let got: Vec<String> = v["trapping"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_str().unwrap().to_string())
            .collect();
        assert_eq!(&got, want, "trapping set at b={b}");
        if *b == "5/2" {
            let text = serde_json::to_string(&v["admissible"]).unwrap();
            assert!(
                text.contains("D1, D4, D6, D7, D0"),
                "admissible chain missing at b=5/2: {text}"
            );
        }
    }

    type Row = (&'static str, f64, &'static [(&'static str, f64)]);
    let table: &[Row] = &[
        ("1/2", 0.25, &[("D1", 1.0)]),
        ("1/2", 0.425, &[("D1", 0.5), ("D2", 0.5)]),
        ("1/2", 0.675, &[("D2", 0.5), ("D3", 0.5)]),
        ("1/2", 0.01, &[("D1", 0.6), ("D3", 0.4)]),
        ("3/2", 0.25, &[("D1", 1.0)]),
        ("3/2", 0.425, &[("D1", 0.5), ("D2", 0.5)]),
        ("3/2", 0.675, &[("D2", 1.0)]),
        ("3/2", 0.01, &[("D1", 0.6), ("D2", 0.4)]),
        ("5/2", 0.25, &[("D1", 1.0)]),
        ("5/2", 0.425, &[("D1", 1.0)]),
        ("5/2", 0.675, &[("D1", 1.0)]),
        ("5/2", 0.01, &[("D1", 1.0)]),
        ("7/2", 0.675, &[("D1", 1.0)]),
        ("9/2", 0.675, &[("D1", 1.0)]),
    ];
    for (b, start, want) in table {
        let out = membrane_bin()
            .args([
                "predict",
                "--scene",
                "B",
                "--time-exponent",
                b,
                "--start",
                &start.to_string(),
                "--json",
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "predict b={b} start={start}");
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let weights = v["mixture"]["weights"].as_object().unwrap();
        let mut total = 0.0;
        for (id, w) in want.iter() {
            let got = weights.get(*id).and_then(|x| x.as_f64()).unwrap_or(0.0);
            assert!(
                (got - w).abs() <= 1e-6,
                "b={b} start={start} {id}: got {got}, want {w}"
            );
            total += w;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = elapsed < 1.0;
    verdict(
        "1 (regime table)",
        pass,
        &format!("classify+predict over 5 regimes and 4 starts in {elapsed:.3}s (< 1s)"),
    );
    assert!(pass, "regime table exceeded its runtime budget: {elapsed:.3}s");
}

// --------------------------------------------------------------------------
// 2. Exit direction: outward probability level and its scaling in eps.
// --------------------------------------------------------------------------

#[test]
fn criterion_2_exit_direction() {
    let _gate = serialize();
    let t0 = Instant::now();
    let scene = scenes::scene_a();
    let tree = build_tree(&scene).unwrap();

    // Level clause: eps = 0.05, alpha = 0.5, N = 2e5.
    let eps = 0.05;
    let mut cfg = XSimConfig::for_scene(&scene, eps);
    cfg.rng_seed = 42;
    let collar = CollarSpec::new(0.5, 0.25).unwrap();
    let s = boundary_excursion_stats(&scene, &tree, &cfg, 0, collar, 200_000).unwrap();
    let level = s.outward_probability / eps;
    let level_ok = (level - 1.0).abs() <= 0.15;

    // Slope clause across the ladder; alpha = 0.6 keeps every collar inside
    // the 0.4 gap between the two membrane points.
    let ladder = [0.2, 0.1, 0.05, 0.025];
    let collar = CollarSpec::new(0.6, 0.3).unwrap();
    let mut ps = Vec::new();
    for (i, &e) in ladder.iter().enumerate() {
        let mut cfg = XSimConfig::for_scene(&scene, e);
        cfg.rng_seed = 42 + 1 + i as u64;
        let s = boundary_excursion_stats(&scene, &tree, &cfg, 0, collar, 100_000).unwrap();
        ps.push(s.outward_probability);
    }
    let (slope, r2) = loglog_slope(&ladder, &ps);
    let slope_ok = (slope - 1.0).abs() <= 0.1 && r2 >= 0.98;

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = level_ok && slope_ok && elapsed < 120.0;
    verdict(
        "2 (exit direction)",
        pass,
        &format!(
            "eps^-1 P(outward) = {level:.4} (within 0.15 of 1), slope = {slope:.4} (1 +- 0.1), \
             r^2 = {r2:.5} (>= 0.98), {elapsed:.1}s (< 120s)"
        ),
    );
    assert!(pass);
}

// --------------------------------------------------------------------------
// 3. Invariant measure: occupation fraction in the trapping domain.
// --------------------------------------------------------------------------

#[test]
fn criterion_3_invariant_measure() {
    let _gate = serialize();
    let scene = scenes::scene_a();
    let tree = build_tree(&scene).unwrap();
    let eps = 0.05;
    let mut cfg = XSimConfig::for_scene(&scene, eps);
    cfg.rng_seed = 42;
    cfg.max_step = 2e-3;
    cfg.boundary_refine = 1.0;
    // Total simulated time 2e4, split over parallel particles.
    let particles = 40;
    let horizon = 500.0;
    let results =
        run_x_to_time_many(&scene, &tree, &cfg, Point::d1(0.5), horizon, particles).unwrap();
    let mut in_d = 0.0;
    let mut total = 0.0;
    for r in &results {
        in_d += r.occupation_time[1];
        total += r.elapsed;
    }
    let fraction = in_d / total;
    // Density 1 outside vs 1/eps inside over |D| = 0.4:
    // (0.4/0.05)/(0.4/0.05 + 0.6) = 0.93023...
    let expected = (0.4 / eps) / (0.4 / eps + 0.6);
    let pass = (fraction - expected).abs() <= 0.01;
    verdict(
        "3 (invariant measure)",
        pass,
        &format!(
            "occupation fraction {fraction:.5} vs {expected:.5} over {total:.0} time units (+- 0.01)"
        ),
    );
    assert!(pass);
}

// --------------------------------------------------------------------------
// 4. Exit-law uniformity: deep-trap exits spread evenly over the circle.
// --------------------------------------------------------------------------

#[test]
fn criterion_4_exit_law_uniformity() {
    let _gate = serialize();
    let scene = scenes::scene_c();
    // Off-centre start so uniformity is earned by mixing, not symmetry.
    let (stat, p, samples) =
        exit_law_uniformity(&scene, 0.02, 0, 0.5, 10_000, 42, Point::d2(0.60, 0.57)).unwrap();
    let pass = p >= 0.01 && samples.len() == 10_000;
    verdict(
        "4 (exit-law uniformity)",
        pass,
        &format!("KS statistic {stat:.5}, p = {p:.4} (>= 0.01) over 10000 deep-trap exits"),
    );
    assert!(pass);
}

// --------------------------------------------------------------------------
// 5. Oracle equivalence: simulator vs exact 1D solver, grid vs simulator 2D.
// --------------------------------------------------------------------------

#[test]
fn criterion_5_oracle_equivalence() {
    let _gate = serialize();
    let t0 = Instant::now();
    let scene = scenes::scene_b();
    let tree = build_tree(&scene).unwrap();
    let n = 100_000usize;

    let queries: Vec<(Node, Vec<&str>, Vec<&str>, StartSpec)> = vec![
        (
            tree.node_of("D7").unwrap(),
            vec![],
            vec!["D6", "D5", "D3"],
            StartSpec::Point(Point::d1(0.425)),
        ),
        (
            tree.node_of("D7").unwrap(),
            vec![],
            vec!["D6", "D5", "D3"],
            StartSpec::Point(Point::d1(0.675)),
        ),
        (
            tree.node_of("D7").unwrap(),
            vec!["D3"],
            vec!["D6", "D5"],
            StartSpec::Point(Point::d1(0.425)),
        ),
        (
            tree.node_of("D7").unwrap(),
            vec!["D3"],
            vec!["D6", "D5"],
            StartSpec::Point(Point::d1(0.675)),
        ),
        (
            Node::Root,
            vec![],
            vec!["D7"],
            StartSpec::Point(Point::d1(0.01)),
        ),
        (
            tree.node_of("D6").unwrap(),
            vec![],
            vec!["D4"],
            StartSpec::Boundary("D6".into()),
        ),
        (
            tree.node_of("D7").unwrap(),
            vec![],
            vec!["D6", "D5", "D3"],
            StartSpec::Boundary("D7".into()),
        ),
    ];

    let mut all_ok = true;
    let mut worst = 0.0f64;
    for (i, (ambient, s, t, start)) in queries.iter().enumerate() {
        let query = HittingQuery {
            ambient: *ambient,
            redistribution: s.iter().map(|x| x.to_string()).collect(),
            targets: t.iter().map(|x| x.to_string()).collect(),
            start: start.clone(),
        };
        let exact = hitting_1d(&scene, &tree, &query).unwrap();
        let mut cfg = YSimConfig::for_scene(&scene);
        cfg.rng_seed = 42 + i as u64;
        let (mc, _) = run_y_many(&scene, &tree, &query, &cfg, n).unwrap();
        for (id, p_exact) in &exact.mass {
            let se = (p_exact * (1.0 - p_exact) / n as f64).sqrt();
            let diff = (mc.mass[id] - p_exact).abs();
            // The 1e-9 slack absorbs float accumulation over 1e5 summands
            // when the exact probability is 0 or 1 (zero standard error).
            let ok = diff <= 3.0 * se + 1e-9;
            if se > 0.0 {
                worst = worst.max(diff / se);
            }
            if !ok {
                println!(
                    "  query {i} component {id}: |{} - {p_exact}| = {diff:.5} > 3 se = {:.5}",
                    mc.mass[id],
                    3.0 * se
                );
            }
            all_ok &= ok;
        }
    }

    // 2D: finite differences against the redistribution simulator.
    let scene_d = scenes::scene_d();
    let tree_d = build_tree(&scene_d).unwrap();
    let query = HittingQuery {
        ambient: tree_d.node_of("D").unwrap(),
        redistribution: vec![],
        targets: vec!["T1".into(), "T2".into(), "T3".into()],
        start: StartSpec::Point(Point::d2(0.50, 0.18)),
    };
    let fd = hitting_2d_fd(&scene_d, &tree_d, &query, 1.0 / 64.0).unwrap();
    let mut ycfg = YSimConfig::for_scene(&scene_d);
    ycfg.rng_seed = 4242;
    ycfg.max_step = 2e-3;
    let (ymc, _) = run_y_many(&scene_d, &tree_d, &query, &ycfg, n).unwrap();
    let mut max_2d = 0.0f64;
    for (id, p_fd) in &fd.distribution.mass {
        max_2d = max_2d.max((ymc.mass[id] - p_fd).abs());
    }
    let ok_2d = max_2d <= 0.03;
    all_ok &= ok_2d;

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = all_ok && elapsed < 300.0;
    verdict(
        "5 (oracle equivalence)",
        pass,
        &format!(
            "7 exact-vs-sampled 1D queries at N=1e5 (worst |diff|/se = {worst:.2}, limit 3), \
             2D grid-vs-sampled max |diff| = {max_2d:.4} (<= 0.03), {elapsed:.0}s (< 300s)"
        ),
    );
    assert!(pass);
}

// --------------------------------------------------------------------------
// 6. Transmission vs simulation: finite-permeability hitting probabilities.
// --------------------------------------------------------------------------

#[test]
fn criterion_6_transmission_vs_simulation() {
    let _gate = serialize();
    let scene = scenes::scene_a();
    let tree = build_tree(&scene).unwrap();
    let eps = 0.05;
    let absorbers = [0.1, 0.5];
    let exact = transmission_hitting_1d(&scene, eps, &absorbers, 0.3).unwrap();

    let n = 100_000usize;
    let mut cfg = XSimConfig::for_scene(&scene, eps);
    cfg.rng_seed = 42;
    let out = run_x_until_absorbed_many(&scene, &tree, &cfg, Point::d1(0.3), &absorbers, n).unwrap();
    let mut counts = [0u64; 2];
    for (j, _) in &out {
        counts[*j] += 1;
    }
    let mut pass = true;
    let mut detail = String::new();
    for (j, (pos, p_exact)) in exact.iter().enumerate() {
        let p_hat = counts[j] as f64 / n as f64;
        let se = (p_exact * (1.0 - p_exact) / n as f64).sqrt();
        let ok = (p_hat - p_exact).abs() <= 3.0 * se;
        detail.push_str(&format!(
            "absorb@{pos}: sim {p_hat:.5} vs exact {p_exact:.5} (3se = {:.5}); ",
            3.0 * se
        ));
        pass &= ok;
    }
    verdict("6 (transmission vs simulation)", pass, &detail);
    assert!(pass);
}

// --------------------------------------------------------------------------
// 7. End-to-end theorem check (budget-guarded; see the module docs).
// --------------------------------------------------------------------------

#[test]
fn criterion_7_end_to_end() {
    let _gate = serialize();
    let budget_secs: f64 = 600.0;
    let full = std::env::var("MEMBRANE_ACCEPT_FULL").ok().as_deref() == Some("1");
    let t0 = Instant::now();
    let scene = scenes::scene_b();
    let tree = build_tree(&scene).unwrap();
    let particles = 100_000usize;
    let starts = [0.25, 0.425, 0.675, 0.01];
    let bs = [q(1, 2), q(3, 2), q(5, 2)];
    let epsilons = [0.05, 0.02];
    let sim = SimOverrides {
        jump_delta: Some(0.012),
        max_step: Some(2e-3),
        boundary_refine: Some(4.0),
        time_budget: Some(1e9),
    };

    // Cost calibration per (eps, b): a short pilot measures time-units/sec.
    let mut rate: BTreeMap<(u64, i64), f64> = BTreeMap::new();
    let mut units_per_sec = |eps: f64, b: ExponentQ| -> f64 {
        let key = ((eps * 1e6) as u64, *b.0.numer());
        if let Some(&r) = rate.get(&key) {
            return r;
        }
        let t_final = eps.powf(-b.to_f64()).min(25.0);
        let mut cfg = XSimConfig::for_scene(&scene, eps);
        cfg.rng_seed = 777;
        sim.apply(&mut cfg);
        let pilot = Instant::now();
        let n_pilot = 16;
        run_x_to_time_many(&scene, &tree, &cfg, Point::d1(0.425), t_final, n_pilot).unwrap();
        let r = (n_pilot as f64 * t_final) / pilot.elapsed().as_secs_f64().max(1e-9);
        rate.insert(key, r);
        r
    };

    struct Slice {
        eps: f64,
        b: ExponentQ,
        start: f64,
        projected_secs: f64,
    }
    let mut slices = Vec::new();
    for &eps in &epsilons {
        for &b in &bs {
            let r = units_per_sec(eps, b);
            for &start in &starts {
                let t_final = eps.powf(-b.to_f64());
                slices.push(Slice {
                    eps,
                    b,
                    start,
                    projected_secs: 1.25 * particles as f64 * t_final / r,
                });
            }
        }
    }
    slices.sort_by(|a, b| a.projected_secs.partial_cmp(&b.projected_secs).unwrap());

    let mut lines = Vec::new();
    let mut ran: BTreeMap<(String, u64, String), (f64, bool)> = BTreeMap::new();
    let mut skipped = 0usize;
    let mut failed = 0usize;
    for s in &slices {
        let remaining = budget_secs - t0.elapsed().as_secs_f64();
        if !full && s.projected_secs > remaining {
            lines.push(format!(
                "  eps={:<5} b={:<4} start={:<6} INFEASIBLE within budget: projected {:.0}s, {:.0}s left",
                s.eps, s.b, s.start, s.projected_secs, remaining.max(0.0)
            ));
            skipped += 1;
            continue;
        }
        let spec = ExperimentSpec {
            scene: scene.clone(),
            epsilon_ladder: vec![s.eps],
            b: s.b,
            starts: vec![Point::d1(s.start)],
            particles,
            seed: 42,
            tv_tolerance: 0.05,
            sim: sim.clone(),
        };
        let report = &end_to_end(&spec).unwrap()[0];
        if !report.pass {
            failed += 1;
        }
        lines.push(format!(
            "  eps={:<5} b={:<4} start={:<6} tv={:.4} {}  empirical {:?}",
            s.eps,
            s.b,
            s.start,
            report.tv,
            if report.pass { "ok  " } else { "FAIL" },
            report.empirical
        ));
        ran.insert(
            (format!("{}", s.b), (s.eps * 1e6) as u64, format!("{}", s.start)),
            (report.tv, report.pass),
        );
    }

    // Ladder clause: tv non-increasing from eps=0.05 to eps=0.02 within CI.
    let mut ladder_ok = true;
    for &b in &bs {
        for &start in &starts {
            let hi = ran.get(&(format!("{b}"), 50_000u64, format!("{start}")));
            let lo = ran.get(&(format!("{b}"), 20_000u64, format!("{start}")));
            if let (Some((tv_hi, _)), Some((tv_lo, _))) = (hi, lo) {
                if *tv_lo > tv_hi + 0.02 {
                    ladder_ok = false;
                    lines.push(format!(
                        "  ladder violation at b={b} start={start}: tv({}) = {tv_lo:.4} > tv({}) = {tv_hi:.4} + CI",
                        0.02, 0.05
                    ));
                }
            }
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = skipped == 0 && failed == 0 && ladder_ok && elapsed < budget_secs;
    println!("criterion 7 matrix (N = {particles} particles per slice):");
    for l in &lines {
        println!("{l}");
    }
    verdict(
        "7 (end-to-end theorem check)",
        pass,
        &format!(
            "{} slices run, {failed} failed the tv bound, {skipped} infeasible within the \
             {budget_secs:.0}s budget, ladder {}, {elapsed:.0}s elapsed",
            ran.len(),
            if ladder_ok { "ok" } else { "violated" }
        ),
    );
    assert!(
        pass,
        "end-to-end criterion not met: {} slices failed tv <= 0.05, {skipped} slices \
         computationally infeasible at the mandated parameters (see the printed matrix; \
         MEMBRANE_ACCEPT_FULL=1 lifts the wall-clock guard)",
        failed
    );
}

// --------------------------------------------------------------------------
// 8. Determinism: repeated seeded commands are byte-identical.
// --------------------------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let _gate = serialize();
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let prefix = dir.path().join(tag).join("run");
        let st = membrane_bin()
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .args([
                "simulate", "--scene", "B", "--epsilon", "0.05", "--t-final", "5",
                "--start", "0.675", "--particles", "256", "--seed", "31415",
                "--out", prefix.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(st.success());
        prefix
    };
    let a = run("a");
    let b = run("b");
    let mut pass = true;
    for suffix in ["_histogram.csv", "_occupation.csv"] {
        let fa = std::fs::read(a.with_file_name(format!("run{suffix}"))).unwrap();
        let fb = std::fs::read(b.with_file_name(format!("run{suffix}"))).unwrap();
        pass &= fa == fb;
    }
    // classify and predict are deterministic text functions.
    for args in [
        vec!["classify", "--scene", "B", "--time-exponent", "5/2"],
        vec!["predict", "--scene", "B", "--time-exponent", "1/2", "--start", "0.01"],
    ] {
        let o1 = membrane_bin().args(&args).output().unwrap();
        let o2 = membrane_bin().args(&args).output().unwrap();
        pass &= o1.stdout == o2.stdout;
    }
    verdict(
        "8 (determinism)",
        pass,
        "seeded simulate outputs and command stdout byte-identical across repeats",
    );
    assert!(pass);
}

// --------------------------------------------------------------------------
// 9. Combinatorics properties on randomized scenes.
// --------------------------------------------------------------------------

#[test]
fn criterion_9_randomized_invariants() {
    let _gate = serialize();
    use membrane::asymptotics::{
        admissible_chains, chains_to, characteristic_domain, classify, domain_order_exponent,
    };
    use rand::Rng;
    use rand::SeedableRng;
    let t0 = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let mut checked_predictions = 0usize;

    for case in 0..500 {
        let two_d = case % 10 >= 7; // 150 of 500 are 2D
        let scene = if two_d {
            scenes::random_scene_2d(&mut rng, 6)
        } else {
            scenes::random_scene_1d(&mut rng, 7, case % 2 == 0)
        };
        let tree = build_tree(&scene).unwrap();

        // Rank recursion and leaf ranks.
        for i in 0..tree.len() {
            let expect = 1 + tree.children[i].iter().map(|&c| tree.rank[c]).max().unwrap_or(0);
            assert_eq!(tree.rank[i], expect);
            if tree.children[i].is_empty() {
                assert_eq!(tree.rank[i], 1);
            }
        }
        assert_eq!(
            tree.root_rank,
            1 + tree.root_children.iter().map(|&c| tree.rank[c]).max().unwrap_or(0)
        );

        // Parent = smallest strict container (independent containment check).
        for i in 0..tree.len() {
            let mut best: Option<usize> = None;
            for j in 0..tree.len() {
                if i != j && contains_domain(&scene, j, i) {
                    let better =
                        best.map_or(true, |b| scene.measure(j) < scene.measure(b));
                    if better {
                        best = Some(j);
                    }
                }
            }
            assert_eq!(tree.parent[i], best, "scene {case}");
        }

        // Order exponents bound chain exponents and are attained.
        for i in 0..tree.len() {
            let m = domain_order_exponent(&tree, Node::Dom(i));
            let chains = chains_to(&tree, Node::Dom(i));
            assert!(chains.iter().all(|c| c.order_exponent >= m));
            assert!(chains.iter().any(|c| c.order_exponent == m));
        }

        // Permuting the domain list changes nothing.
        if case % 25 == 0 && !scene.domains.is_empty() {
            let mut rev = scene.clone();
            rev.domains.reverse();
            let tree2 = build_tree(&rev).unwrap();
            for d in &scene.domains {
                let i1 = tree.index_of(&d.id).unwrap();
                let i2 = tree2.index_of(&d.id).unwrap();
                assert_eq!(tree.rank[i1], tree2.rank[i2]);
                assert_eq!(
                    domain_order_exponent(&tree, Node::Dom(i1)),
                    domain_order_exponent(&tree2, Node::Dom(i2))
                );
            }
        }

        // Predictor invariants on the distinct-exponent 1D scenes.
        if !two_d && case % 2 == 0 && !scene.domains.is_empty() {
            let orders: Vec<ExponentQ> = (0..tree.len())
                .map(|i| domain_order_exponent(&tree, Node::Dom(i)))
                .collect();
            // A time exponent that avoids every order exactly.
            let b = ExponentQ(
                orders[rng.gen_range(0..orders.len())].0
                    + num::rational::Rational64::new(1, 1024),
            );
            let cls = match classify(&tree, b) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let oracle = Analytic1d {
                scene: &scene,
                tree: &tree,
            };
            for _ in 0..3 {
                let x = Point::d1(rng.gen::<f64>());
                match predict(&scene, &tree, b, &x, &oracle) {
                    Ok(m) => {
                        assert!((m.sum() - 1.0).abs() < 1e-9, "scene {case}: sum {}", m.sum());
                        let at = membrane::predictor::start_node(&scene, &tree, &x, 1e-12);
                        let ch = characteristic_domain(&tree, &cls, at);
                        let firsts: Vec<String> = admissible_chains(&tree, &cls, ch)
                            .iter()
                            .map(|c| tree.id(c.first()).to_string())
                            .collect();
                        for (id, w) in &m.weights {
                            assert!(
                                *w <= 1e-9 || firsts.contains(id),
                                "scene {case}: support {id} outside admissible firsts {firsts:?}"
                            );
                        }
                        checked_predictions += 1;
                    }
                    // Structural ties are legitimate rejections, not crashes.
                    Err(e) => {
                        let msg = e.to_string();
                        assert!(
                            msg.contains("admissible") || msg.contains("time exponent"),
                            "unexpected predict error: {msg}"
                        );
                    }
                }
            }
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = elapsed < 30.0 && checked_predictions > 100;
    verdict(
        "9 (randomized invariants)",
        pass,
        &format!(
            "500 scenes, {checked_predictions} predictions checked, {elapsed:.1}s (< 30s)"
        ),
    );
    assert!(pass);
}

/// Independent containment test used by criterion 9 (no tree machinery).
fn contains_domain(scene: &membrane::geometry::Scene, outer: usize, inner: usize) -> bool {
    use membrane::geometry::Shape;
    match (&scene.domains[outer].shape, &scene.domains[inner].shape) {
        (Shape::Interval { .. }, Shape::Interval { a, b }) => {
            // Dense sampling of the inner interval.
            let (a, b) = (*a, *b);
            let len = (b - a).rem_euclid(scene.period);
            (1..100).all(|s| {
                let x = (a + len * s as f64 / 100.0).rem_euclid(scene.period);
                scene.contains(outer, &Point::d1(x))
            })
        }
        (Shape::Ball { .. }, Shape::Ball { center, radius }) => {
            let c = *center;
            let r = *radius;
            (0..64).all(|s| {
                let th = s as f64 / 64.0 * std::f64::consts::TAU;
                let p = Point::d2(
                    (c.0[0] + 0.999 * r * th.cos()).rem_euclid(scene.period),
                    (c.0[1] + 0.999 * r * th.sin()).rem_euclid(scene.period),
                );
                scene.contains(outer, &p)
            })
        }
        _ => false,
    }
}
