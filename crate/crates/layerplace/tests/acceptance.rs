#![allow(clippy::neg_cmp_op_on_partial_ord)] // ensure! is written to fail on NaN

//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; the process fails if any
//! criterion does.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use layerplace::harness::{run_experiment, AggregateRow, CnnSet, ExperimentConfig, LValue, Mix};
use layerplace_core::fixtures;
use layerplace_core::latency::{check_feasibility, evaluate, objective, EvalConventions, Placement, Violation};
use layerplace_core::linearize::{linearize, LinearizeOptions, SharingMode};
use layerplace_core::model::{derive_exit_probabilities, PlacementProblem};
use layerplace_core::scenario::{random_small_instance, SmallInstanceParams};
use layerplace_core::solver::{solve, Method, SolveError, SolverConfig};
use layerplace_core::{PayloadUnit, ProcessingWeight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

const RASPBERRY_SPEED: f64 = 560.0;
const TOL_MS: f64 = 0.01;

/// Per-layer multiplications (millions) and reach probabilities, typed in
/// from the reference network descriptions; conv+pool pairs are fused.
struct TableCnn {
    name: &'static str,
    compute: &'static [f64],
    reach: &'static [f64],
}

const TABLE_CNNS: [TableCnn; 4] = [
    TableCnn {
        name: "cnn5",
        compute: &[3.76 + 0.05, 20.07 + 0.01, 1.20, 0.07, 2e-3],
        reach: &[1.0, 1.0, 1.0, 1.0, 1.0],
    },
    TableCnn {
        name: "gc6",
        compute: &[3.76 + 0.05, 4.89, 20.07 + 0.01, 1.20, 0.07, 2e-3],
        reach: &[1.0, 1.0, 0.01, 0.01, 0.01, 0.01],
    },
    TableCnn {
        name: "alexnet",
        compute: &[105.42 + 0.31, 223.95 + 0.39, 149.52, 112.14, 74.76 + 0.08, 37.75, 16.78],
        reach: &[1.0; 7],
    },
    TableCnn {
        name: "gc-alexnet",
        compute: &[
            105.42 + 0.31,
            223.95 + 0.39,
            5.55,
            149.52,
            112.14,
            74.76 + 0.08,
            37.75,
            16.78,
        ],
        reach: &[1.0, 1.0, 1.0, 0.01, 0.01, 0.01, 0.01, 0.01],
    },
];

/// Next-layer weighting: layer j carries p_{j+1}, the last layer is dropped.
fn oracle_compat_ms(t: &TableCnn) -> f64 {
    (0..t.compute.len() - 1)
        .map(|j| t.reach[j + 1] * t.compute[j])
        .sum::<f64>()
        / RASPBERRY_SPEED
        * 1e3
}

/// Literal weighting: layer j carries p_j, all layers.
fn oracle_as_written_ms(t: &TableCnn) -> f64 {
    (0..t.compute.len()).map(|j| t.reach[j] * t.compute[j]).sum::<f64>() / RASPBERRY_SPEED * 1e3
}

fn single_raspberry_t_p_ms(name: &str, conventions: EvalConventions) -> Result<f64, String> {
    let cnn = fixtures::builtin_cnn(name).map_err(|e| e.to_string())?;
    let depth = cnn.depth() as u32;
    let problem =
        fixtures::single_unit_problem(vec![cnn], fixtures::raspberry_3bp(), depth).with_conventions(conventions);
    problem.validate().map_err(|e| e.to_string())?;
    let placement = Placement::single_unit(&problem, 0);
    ensure!(
        check_feasibility(&placement, &problem).is_empty(),
        "{name} does not fit one Raspberry"
    );
    Ok(evaluate(&placement, &problem).map_err(|e| e.to_string())?.t_p * 1e3)
}

fn processing_table(reference: [f64; 4], conventions: EvalConventions, oracle: fn(&TableCnn) -> f64) -> Outcome {
    let mut parts = Vec::new();
    for (t, expected) in TABLE_CNNS.iter().zip(reference) {
        let got = single_raspberry_t_p_ms(t.name, conventions)?;
        let independent = oracle(t);
        ensure!(
            (got - independent).abs() < 1e-9,
            "{}: t_p {got} ms, independent sum {independent} ms",
            t.name
        );
        ensure!(
            (got - expected).abs() <= TOL_MS,
            "{}: t_p {got:.4} ms, expected {expected} ms",
            t.name
        );
        parts.push(format!("{} {got:.2}", t.name));
    }
    Ok(parts.join(", "))
}

fn criterion_1() -> Outcome {
    processing_table(
        [44.93, 7.27, 1257.71, 596.19],
        EvalConventions::compat(),
        oracle_compat_ms,
    )
}

fn criterion_2() -> Outcome {
    processing_table(
        [44.93, 15.92, 1287.68, 606.31],
        EvalConventions::default(),
        oracle_as_written_ms,
    )
}

fn criterion_3() -> Outcome {
    let g = derive_exit_probabilities(&[1.0, 1.0, 0.01, 0.01, 0.01, 0.01]).map_err(|e| e.to_string())?;
    let expected = [0.0, 0.99, 0.0, 0.0, 0.0, 0.01];
    ensure!(g == expected, "g = {g:?}");
    let gc6 = fixtures::gc6();
    ensure!(
        gc6.gate.exit_prob == expected,
        "gc6 fixture exits {:?}",
        gc6.gate.exit_prob
    );
    Ok(format!("g = {g:?}"))
}

fn all_conventions() -> Vec<EvalConventions> {
    let mut out = Vec::new();
    for processing_weight in [ProcessingWeight::AsWritten, ProcessingWeight::NextLayerCompat] {
        for payload_unit in [PayloadUnit::BitsExact, PayloadUnit::BytesAsBitsCompat] {
            for include_processing in [true, false] {
                out.push(EvalConventions {
                    processing_weight,
                    include_processing,
                    payload_unit,
                });
            }
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let base = fixtures::fig1b_problem(vec![fixtures::cnn5()], 1);
    let topo = &base.topology;
    let id = |name: &str| topo.index_of(name).ok_or(format!("no vertex {name}"));
    ensure!(
        topo.hops(id("n04")?, id("f")?) == Some(2),
        "d(n04, f) = {:?}",
        topo.hops(id("n04")?, id("f")?)
    );

    let fig1c = fixtures::fig1c_placement(&base);
    let violations = check_feasibility(&fig1c, &base);
    ensure!(violations.is_empty(), "reference placement infeasible: {violations:?}");

    // Layer 3 moved onto each STM32H7 (with the layer cap out of the way)
    // must break that unit's memory cap.
    let mut relaxed = base.clone();
    relaxed.layers_per_unit_cap = 5;
    let stm: Vec<usize> = base
        .units()
        .into_iter()
        .filter(|&v| base.class_of(v).map(|c| c.name == "stm32h7").unwrap_or(false))
        .collect();
    ensure!(!stm.is_empty(), "no STM32H7 units in the example");
    for &v in &stm {
        let mut p = fig1c.clone();
        p.assign[0][2] = v;
        let hit = check_feasibility(&p, &relaxed)
            .iter()
            .any(|x| matches!(x, Violation::Memory { unit, .. } if *unit == v));
        ensure!(hit, "layer 3 fits on STM32H7 {}", topo.vertex(v).id);
    }

    let mut worst_gap = f64::INFINITY;
    for conv in all_conventions() {
        let problem = base.clone().with_conventions(conv);
        let reference = objective(&fig1c, &problem).map_err(|e| e.to_string())?;
        let best = solve(&problem, &SolverConfig::new(Method::Exhaustive, 0)).map_err(|e| e.to_string())?;
        ensure!(best.proven_optimal, "exhaustive search did not finish");
        ensure!(
            best.objective <= reference,
            "{conv:?}: optimum {} > reference {reference}",
            best.objective
        );
        worst_gap = worst_gap.min(reference - best.objective);
    }
    let elapsed = started.elapsed().as_secs_f64();
    ensure!(elapsed < 1.0, "took {elapsed:.2} s");
    Ok(format!(
        "d(n04,f)=2, reference feasible, layer 3 rejected by {} STM32H7 units, optimum <= reference in 8 modes (min gap {:.3e} s)",
        stm.len(),
        worst_gap
    ))
}

/// Every placement of the problem, over physical layers, sharing respected.
fn for_each_placement(problem: &PlacementProblem, mut f: impl FnMut(&Placement)) {
    let units = problem.units();
    let phys = problem.physical_layers();
    let p = phys.len();
    let mut digits = vec![0usize; p];
    loop {
        let assign = problem
            .cnns
            .iter()
            .enumerate()
            .map(|(u, cnn)| (0..cnn.depth()).map(|j| units[digits[phys.slot(u, j)]]).collect())
            .collect();
        f(&Placement::new(assign));
        let mut k = 0;
        while k < p {
            digits[k] += 1;
            if digits[k] < units.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
        if k == p {
            return;
        }
    }
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let params = SmallInstanceParams::default();
    let mut feasible_checked = 0u64;
    let mut infeasible_instances = 0;
    let mut shared = 0;
    let mut gated = 0;
    for seed in 0..200u64 {
        let problem = random_small_instance(&params, seed);
        problem.validate().map_err(|e| format!("seed {seed}: {e}"))?;
        shared += usize::from(!problem.sharing.is_empty());
        gated += usize::from(problem.cnns.iter().any(|c| c.gate.reach_prob.iter().any(|&p| p < 1.0)));
        let models = [
            linearize(&problem, LinearizeOptions::default()).map_err(|e| e.to_string())?,
            linearize(
                &problem,
                LinearizeOptions {
                    sharing_mode: SharingMode::EqualityRows,
                    prune_zero_products: false,
                },
            )
            .map_err(|e| e.to_string())?,
        ];
        let mut brute: Option<f64> = None;
        let mut failure = None;
        for_each_placement(&problem, |placement| {
            if failure.is_some() {
                return;
            }
            let feasible = check_feasibility(placement, &problem).is_empty();
            let t = evaluate(placement, &problem).map(|b| b.t);
            for model in &models {
                let x = model.assignment_from_placement(placement);
                let violated = model.violated_rows(&x).map(|v| !v.is_empty());
                if violated != Ok(!feasible) {
                    failure = Some(format!(
                        "seed {seed}: row check {violated:?} for feasible={feasible} {placement:?}"
                    ));
                    return;
                }
                if feasible {
                    let linear = model.objective_of_assignment(&x);
                    match (&t, linear) {
                        (Ok(q), Ok(l)) if rel_close(*q, l, 1e-12) => {}
                        other => {
                            failure = Some(format!("seed {seed}: quadratic vs linear {other:?} at {placement:?}"));
                            return;
                        }
                    }
                }
            }
            if feasible {
                feasible_checked += 1;
                if let Ok(t) = t {
                    if brute.is_none_or(|b| t < b) {
                        brute = Some(t);
                    }
                }
            }
        });
        if let Some(f) = failure {
            return Err(f);
        }
        let exhaustive = solve(&problem, &SolverConfig::new(Method::Exhaustive, seed));
        let bnb = solve(&problem, &SolverConfig::new(Method::BranchAndBound, seed));
        match (brute, exhaustive, bnb) {
            (None, Err(SolveError::Infeasible), Err(SolveError::Infeasible)) => infeasible_instances += 1,
            (Some(b), Ok(e), Ok(s)) => {
                ensure!(
                    e.objective == b,
                    "seed {seed}: exhaustive {} vs enumeration {b}",
                    e.objective
                );
                ensure!(
                    s.objective.to_bits() == e.objective.to_bits(),
                    "seed {seed}: branch-and-bound {} vs exhaustive {}",
                    s.objective,
                    e.objective
                );
            }
            (b, e, s) => {
                return Err(format!(
                    "seed {seed}: enumeration {b:?}, exhaustive {e:?}, branch-and-bound {s:?}"
                ))
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    ensure!(elapsed < 120.0, "took {elapsed:.1} s");
    Ok(format!(
        "200 instances ({shared} shared, {gated} gated, {infeasible_instances} infeasible), {feasible_checked} feasible placements cross-checked"
    ))
}

fn co_located(problem: &PlacementProblem, placement: &Placement) -> bool {
    problem.sharing.iter().all(|g| {
        let first = placement.unit(g.members[0].cnn, g.members[0].layer);
        g.members.iter().all(|m| placement.unit(m.cnn, m.layer) == first)
    })
}

fn criterion_6() -> Outcome {
    let params = SmallInstanceParams::default();
    let mut solutions = 0;
    let mut shared_solutions = 0;
    for seed in 0..200u64 {
        let problem = random_small_instance(&params, seed);
        for method in [Method::Exhaustive, Method::BranchAndBound, Method::LocalSearch] {
            match solve(&problem, &SolverConfig::new(method, seed)) {
                Ok(s) => {
                    let v = check_feasibility(&s.placement, &problem);
                    ensure!(v.is_empty(), "seed {seed} {method:?}: {v:?}");
                    ensure!(
                        co_located(&problem, &s.placement),
                        "seed {seed} {method:?}: sharing split"
                    );
                    solutions += 1;
                    shared_solutions += usize::from(!problem.sharing.is_empty());
                }
                Err(SolveError::Infeasible) | Err(SolveError::NoPlacementFound) => {}
                Err(e) => return Err(format!("seed {seed} {method:?}: {e}")),
            }
        }
    }

    // Relaxing the layer cap can only help.
    for seed in 0..50u64 {
        let mut problem = random_small_instance(&params, 1000 + seed);
        let mut previous = f64::INFINITY;
        for l in 1..=5 {
            problem.layers_per_unit_cap = l;
            let value = match solve(&problem, &SolverConfig::new(Method::BranchAndBound, seed)) {
                Ok(s) => s.objective,
                Err(SolveError::Infeasible) => f64::INFINITY,
                Err(e) => return Err(format!("seed {seed} L={l}: {e}")),
            };
            ensure!(
                value <= previous,
                "seed {seed}: optimum rose from {previous} to {value} at L={l}"
            );
            previous = value;
        }
    }

    // Data-rate scaling.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..100u64 {
        let problem = random_small_instance(&params, 2000 + seed);
        let lambda = rng.gen_range(0.05..20.0);
        let mut scaled = problem.clone();
        scaled.data_rate_bits_per_s *= lambda;
        let units = problem.units();
        let phys = problem.physical_layers();
        let chosen: Vec<usize> = (0..phys.len()).map(|_| units[rng.gen_range(0..units.len())]).collect();
        let placement = Placement::new(
            problem
                .cnns
                .iter()
                .enumerate()
                .map(|(u, c)| (0..c.depth()).map(|j| chosen[phys.slot(u, j)]).collect())
                .collect(),
        );
        let a = evaluate(&placement, &problem).map_err(|e| e.to_string())?;
        let b = evaluate(&placement, &scaled).map_err(|e| e.to_string())?;
        for (x, y, what) in [
            (a.t_s, b.t_s, "t_s"),
            (a.t_inter, b.t_inter, "t_inter"),
            (a.t_f, b.t_f, "t_f"),
        ] {
            ensure!(
                (y == 0.0 && x == 0.0) || rel_close(y, x / lambda, 1e-12),
                "seed {seed}: {what} {x} -> {y} under x{lambda}"
            );
        }
        ensure!(a.t_p == b.t_p, "seed {seed}: t_p changed under rate scaling");

        let plain = problem
            .clone()
            .with_conventions(problem.conventions.without_processing());
        let mut plain_scaled = plain.clone();
        plain_scaled.data_rate_bits_per_s *= lambda;
        let config = SolverConfig::new(Method::Exhaustive, seed);
        match (solve(&plain, &config), solve(&plain_scaled, &config)) {
            (Ok(x), Ok(y)) => {
                let cross = objective(&y.placement, &plain).map_err(|e| e.to_string())?;
                ensure!(
                    rel_close(cross, x.objective, 1e-12),
                    "seed {seed}: argmin moved under rate scaling"
                );
            }
            (Err(SolveError::Infeasible), Err(SolveError::Infeasible)) => {}
            other => return Err(format!("seed {seed}: {other:?}")),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let m = rng.gen_range(1..=12);
        let mut reach = vec![1.0];
        for _ in 1..m {
            let last: f64 = *reach.last().unwrap();
            reach.push(last * rng.gen_range(0.0..=1.0));
        }
        let g = derive_exit_probabilities(&reach).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(
            g.iter().all(|&x| x >= 0.0),
            "case {case}: negative exit probability {g:?}"
        );
        ensure!(
            (g.iter().sum::<f64>() - 1.0).abs() < 1e-12,
            "case {case}: sum {}",
            g.iter().sum::<f64>()
        );
    }

    Ok(format!(
        "{solutions} solutions feasible ({shared_solutions} with sharing, all co-located), L sweep monotone on 50, rate scaling on 100, 1000 profiles sum to 1"
    ))
}

fn row<'a>(rows: &'a [AggregateRow], mix: &str, l: &str) -> Result<&'a AggregateRow, String> {
    rows.iter()
        .find(|r| r.mix == mix && r.l == l)
        .ok_or(format!("no row for {mix} L={l}"))
}

fn criterion_7() -> Outcome {
    let l_values = vec![
        LValue::Fixed(1),
        LValue::Fixed(2),
        LValue::Fixed(3),
        LValue::Fixed(4),
        LValue::Whole,
    ];
    let experiment = |mixes: Vec<Mix>| {
        let mut config = ExperimentConfig::new(
            vec![CnnSet::single(fixtures::cnn5())],
            mixes,
            l_values.clone(),
            vec!["wifi4".into()],
        );
        config.trials = 100;
        config.conventions = EvalConventions::compat();
        run_experiment(&config).map_err(|e| e.to_string())
    };
    let started = Instant::now();
    let rows = experiment(vec![Mix { stm_percent: 50 }])?;
    let elapsed = started.elapsed().as_secs_f64();
    ensure!(elapsed < 300.0, "50-50 run took {elapsed:.1} s");
    let whole = row(&rows, "50-50", "C")?;
    let (mean, std) = (whole.t_p_mean.ok_or("no t_p mean")?, whole.t_p_std.ok_or("no t_p std")?);
    ensure!((mean - 44.93).abs() <= TOL_MS, "L=C t_p mean {mean}");
    ensure!(std < 0.005, "L=C t_p std {std}");

    let rows = experiment(vec![Mix { stm_percent: 10 }, Mix { stm_percent: 90 }])?;
    let mut pairs = Vec::new();
    for l in ["1", "2", "3", "4", "C"] {
        let fast = row(&rows, "10-90", l)?.t_mean.ok_or("no mean")?;
        let slow = row(&rows, "90-10", l)?.t_mean.ok_or("no mean")?;
        ensure!(fast < slow, "L={l}: 10-90 mean t {fast} not below 90-10 mean t {slow}");
        pairs.push(format!("L={l} {fast:.2}<{slow:.2}"));
    }
    Ok(format!(
        "50-50 ran in {elapsed:.1} s, L=C t_p {mean:.2} +- {std:.2} ms; {}",
        pairs.join(", ")
    ))
}

fn cli(args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_layerplace"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let write = |name: &str, bytes: &[u8]| std::fs::write(Path::new(&path(name)), bytes).map_err(|e| e.to_string());

    let (code, single) = cli(&["fixtures", "fig1b-cnn5"])?;
    ensure!(code == 0, "fixtures exited {code}");
    write("single.json", &single)?;
    let (code, shared) = cli(&["fixtures", "fig1b-2cnn5-shared"])?;
    ensure!(code == 0, "fixtures exited {code}");
    write("shared.json", &shared)?;
    let (code, generated) = cli(&[
        "generate",
        "--seed",
        "7",
        "--cnn",
        "cnn5,cnn5",
        "--share-first",
        "1",
        "--L",
        "2",
    ])?;
    ensure!(code == 0, "generate exited {code}");
    write("generated.json", &generated)?;
    let (code, solved) = cli(&["solve", &path("single.json"), "--paper-compat", "--seed", "5"])?;
    ensure!(code == 0, "solve exited {code}");
    write("solution.json", &solved)?;

    let (single, shared, generated, solution) = (
        path("single.json"),
        path("shared.json"),
        path("generated.json"),
        path("solution.json"),
    );
    let commands: Vec<Vec<&str>> = vec![
        vec!["fixtures"],
        vec!["fixtures", "gc-alexnet"],
        vec![
            "generate",
            "--seed",
            "7",
            "--cnn",
            "cnn5,cnn5",
            "--share-first",
            "1",
            "--L",
            "2",
        ],
        vec![
            "generate",
            "--seed",
            "8",
            "--mix",
            "90-10",
            "--profile",
            "halow",
            "--L",
            "C",
        ],
        vec!["solve", &single, "--method", "exhaustive", "--seed", "5"],
        vec![
            "solve",
            &single,
            "--method",
            "branch-and-bound",
            "--seed",
            "5",
            "--paper-compat",
        ],
        vec![
            "solve",
            &single,
            "--method",
            "local-search",
            "--seed",
            "5",
            "--restarts",
            "4",
        ],
        vec!["solve", &shared, "--method", "local-search", "--seed", "9"],
        vec!["solve", &generated, "--method", "local-search", "--seed", "9"],
        vec!["evaluate", &single, &solution, "--paper-compat"],
        vec!["export-lp", &shared],
        vec![
            "export-lp",
            &single,
            "--sharing-mode",
            "equality-rows",
            "--keep-zero-products",
        ],
        vec![
            "bench",
            "--trials",
            "6",
            "--mix",
            "10-90,90-10",
            "--seed",
            "11",
            "--format",
            "json",
        ],
        vec![
            "bench",
            "--trials",
            "6",
            "--cnn",
            "cnn5,cnn5",
            "--share-first",
            "1",
            "--L",
            "1,C",
            "--format",
            "csv",
        ],
        vec![
            "bench",
            "--trials",
            "4",
            "--profile",
            "wifi4,halow",
            "--format",
            "markdown",
            "--paper-compat",
        ],
    ];
    for args in &commands {
        let first = cli(args)?;
        let second = cli(args)?;
        ensure!(first.0 == 0, "{args:?} exited {}", first.0);
        ensure!(!first.1.is_empty(), "{args:?} printed nothing");
        ensure!(first == second, "{args:?} output differs between runs");
    }

    // In-process: same seed, same solution record.
    let problem = fixtures::fig1b_problem(vec![fixtures::cnn5(), fixtures::cnn5()], 2);
    for method in [Method::BranchAndBound, Method::LocalSearch] {
        let a = solve(&problem, &SolverConfig::new(method, 42)).map_err(|e| e.to_string())?;
        let b = solve(&problem, &SolverConfig::new(method, 42)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{method:?} not repeatable");
    }
    Ok(format!("{} commands byte-identical across runs", commands.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("processing time, compat conventions", criterion_1),
        ("processing time, as-written conventions", criterion_2),
        ("exit-probability derivation", criterion_3),
        ("example network checks", criterion_4),
        ("solver and linearization oracle equivalence", criterion_5),
        ("invariant suites", criterion_6),
        ("Monte-Carlo structure", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}) [{secs:.2} s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}) [{secs:.2} s]: {why}", i + 1);
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
