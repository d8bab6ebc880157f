#![allow(clippy::needless_range_loop)]

use layerplace_core::fixtures;
use layerplace_core::latency::{
    evaluate, inter_layer_time, objective, sink_time, source_time, EvalConventions, Placement,
};
use layerplace_core::model::{derive_exit_probabilities, PlacementProblem};
use layerplace_core::scenario::{random_small_instance, SmallInstanceParams};
use layerplace_core::topology::{all_pairs_hop_distance, Adjacency, Role, Topology, Vertex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_adjacency(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Adjacency {
    let mut adj = Adjacency::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                adj.add_edge(a, b);
            }
        }
    }
    adj
}

/// Plain Floyd-Warshall on hop counts, `u32::MAX` for no path.
fn floyd_warshall(adj: &Adjacency) -> Vec<Vec<u32>> {
    let n = adj.len();
    let inf = u32::MAX;
    let mut d = vec![vec![inf; n]; n];
    for a in 0..n {
        d[a][a] = 0;
        for b in 0..n {
            if a != b && adj.connected(a, b) {
                d[a][b] = 1;
            }
        }
    }
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                if d[a][k] != inf && d[k][b] != inf && d[a][k] + d[k][b] < d[a][b] {
                    d[a][b] = d[a][k] + d[k][b];
                }
            }
        }
    }
    d
}

fn random_placement(problem: &PlacementProblem, rng: &mut ChaCha8Rng) -> Placement {
    let units = problem.units();
    let phys = problem.physical_layers();
    let chosen: Vec<usize> = (0..phys.len()).map(|_| units[rng.gen_range(0..units.len())]).collect();
    Placement::new(
        problem
            .cnns
            .iter()
            .enumerate()
            .map(|(u, cnn)| (0..cnn.depth()).map(|j| chosen[phys.slot(u, j)]).collect())
            .collect(),
    )
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn exit_probabilities_form_a_distribution(factors in prop::collection::vec(0.0f64..=1.0, 0..12)) {
        let mut reach = vec![1.0];
        for f in factors {
            let last = *reach.last().unwrap();
            reach.push(last * f);
        }
        let g = derive_exit_probabilities(&reach).unwrap();
        prop_assert_eq!(g.len(), reach.len());
        prop_assert!(g.iter().all(|&x| x >= 0.0));
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hop_distance_is_a_metric_and_matches_floyd_warshall(seed in any::<u64>(), n in 1usize..=20, p in 0.05f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = random_adjacency(n, p, &mut rng);
        let hops = all_pairs_hop_distance(&adj);
        let oracle = floyd_warshall(&adj);
        for a in 0..n {
            prop_assert_eq!(hops.get(a, a), Some(0));
            for b in 0..n {
                let d = hops.get(a, b);
                prop_assert_eq!(d, hops.get(b, a));
                let expected = if oracle[a][b] == u32::MAX { None } else { Some(oracle[a][b]) };
                prop_assert_eq!(d, expected);
                for c in 0..n {
                    if let (Some(ab), Some(bc)) = (hops.get(a, b), hops.get(b, c)) {
                        let ac = hops.get(a, c);
                        prop_assert!(ac.is_some() && ac.unwrap() <= ab + bc);
                    }
                }
            }
        }
    }

    #[test]
    fn adding_an_edge_never_lengthens_a_path(seed in any::<u64>(), n in 2usize..=20, p in 0.05f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj = random_adjacency(n, p, &mut rng);
        let before = all_pairs_hop_distance(&adj);
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        adj.add_edge(a, b);
        let after = all_pairs_hop_distance(&adj);
        for x in 0..n {
            for y in 0..n {
                match (before.get(x, y), after.get(x, y)) {
                    (Some(old), Some(new)) => prop_assert!(new <= old),
                    (Some(_), None) => prop_assert!(false, "edge addition disconnected {x},{y}"),
                    _ => {}
                }
            }
        }
        prop_assert_eq!(after.get(a, b), Some(1));
    }

    #[test]
    fn rate_scaling_scales_transmission_only(seed in any::<u64>(), lambda in 0.01f64..100.0) {
        let problem = random_small_instance(&SmallInstanceParams::default(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let placement = random_placement(&problem, &mut rng);
        let mut scaled = problem.clone();
        scaled.data_rate_bits_per_s *= lambda;
        let a = evaluate(&placement, &problem).unwrap();
        let b = evaluate(&placement, &scaled).unwrap();
        prop_assert!(close(b.t_s, a.t_s / lambda, 1e-12));
        prop_assert!(close(b.t_inter, a.t_inter / lambda, 1e-12));
        prop_assert!(close(b.t_f, a.t_f / lambda, 1e-12));
        prop_assert_eq!(a.t_p, b.t_p);
    }
}

/// Single plain CNN: every layer runs and the decision leaves the last one,
/// so the latency is a plain sum along the chain.
fn plain_chain_latency(problem: &PlacementProblem, placement: &Placement) -> f64 {
    let cnn = &problem.cnns[0];
    let s = problem.sources[0];
    let f = problem.sink().unwrap();
    let units = &placement.assign[0];
    let bits = problem.conventions.payload_unit.bits_per_kb();
    let rho = problem.data_rate_bits_per_s;
    let d = |a: usize, b: usize| f64::from(problem.topology.hops(a, b).unwrap());
    let mut t = cnn.input_kb * bits * d(s, units[0]) / rho;
    for j in 0..cnn.depth() - 1 {
        t += cnn.layers[j].out_repr_kb * bits * d(units[j], units[j + 1]) / rho;
    }
    t += cnn.final_out_kb * bits * d(units[cnn.depth() - 1], f) / rho;
    let last = if problem.conventions.processing_weight == layerplace_core::ProcessingWeight::AsWritten {
        cnn.depth()
    } else {
        cnn.depth() - 1
    };
    if problem.conventions.include_processing {
        for j in 0..last {
            t += cnn.layers[j].compute_mmul / problem.class_of(units[j]).unwrap().speed_mmul_per_s;
        }
    }
    t
}

#[test]
fn plain_cnn_matches_chain_formula() {
    let params = SmallInstanceParams {
        max_cnns: 1,
        gates: false,
        sharing: false,
        ..SmallInstanceParams::default()
    };
    for seed in 0..300 {
        let problem = random_small_instance(&params, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let placement = random_placement(&problem, &mut rng);
            let t = objective(&placement, &problem).unwrap();
            let oracle = plain_chain_latency(&problem, &placement);
            assert!(close(t, oracle, 1e-12), "seed {seed}: {t} vs {oracle}");
        }
    }
}

#[test]
fn fig1b_cnn5_matches_chain_formula_in_every_mode() {
    let base = fixtures::fig1b_problem(vec![fixtures::cnn5()], 1);
    let placement = fixtures::fig1c_placement(&base);
    for conv in [
        EvalConventions::default(),
        EvalConventions::compat(),
        EvalConventions::default().without_processing(),
        EvalConventions::compat().without_processing(),
    ] {
        let problem = base.clone().with_conventions(conv);
        let t = objective(&placement, &problem).unwrap();
        assert!(close(t, plain_chain_latency(&problem, &placement), 1e-12));
        let b = evaluate(&placement, &problem).unwrap();
        assert_eq!(b.t_s, source_time(&placement, &problem).unwrap());
        assert_eq!(b.t_inter, inter_layer_time(&placement, &problem).unwrap());
        assert_eq!(b.t_f, sink_time(&placement, &problem).unwrap());
    }
}

/// Random connected graph on units 0..n plus source and sink, with a twin
/// of unit 0 that copies its neighborhood.
fn twin_problem(seed: u64) -> (PlacementProblem, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let mut vertices: Vec<Vertex> = (0..=n)
        .map(|i| Vertex::new(format!("u{i}"), Role::Unit, 0.0, 0.0))
        .collect();
    let twin = n;
    vertices.push(Vertex::new("s1", Role::Source, 0.0, 0.0));
    vertices.push(Vertex::new("f", Role::Sink, 0.0, 0.0));
    let (s, f) = (n + 1, n + 2);
    let others: Vec<usize> = (1..n).chain([s, f]).collect();
    let mut edges = Vec::new();
    // Spanning path through 0 and the others, then random chords.
    let mut prev = 0;
    for &v in &others {
        edges.push((prev, v));
        prev = v;
    }
    for &a in &others {
        for &b in &others {
            if a < b && rng.gen_bool(0.3) {
                edges.push((a, b));
            }
        }
        if rng.gen_bool(0.3) {
            edges.push((0, a));
        }
    }
    let copy: Vec<(usize, usize)> = edges
        .iter()
        .filter_map(|&(a, b)| match (a, b) {
            (0, x) | (x, 0) => Some((twin, x)),
            _ => None,
        })
        .collect();
    edges.extend(copy);
    if rng.gen_bool(0.5) {
        edges.push((0, twin));
    }
    let topology = Topology::from_edges(vertices, &edges).unwrap();
    let mut problem = fixtures::single_unit_problem(vec![fixtures::gc6()], fixtures::raspberry_3bp(), 6);
    problem.sources = vec![s];
    problem.unit_classes = (0..=n).map(|v| (v, fixtures::raspberry_3bp())).collect();
    problem.topology = topology;
    problem.conventions = EvalConventions::default().without_processing();
    problem.validate().unwrap();
    (problem, 0, twin)
}

#[test]
fn twin_units_are_interchangeable_without_processing() {
    for seed in 0..200 {
        let (problem, a, b) = twin_problem(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let placement = random_placement(&problem, &mut rng);
            let swapped = Placement::new(
                placement
                    .assign
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|&v| {
                                if v == a {
                                    b
                                } else if v == b {
                                    a
                                } else {
                                    v
                                }
                            })
                            .collect()
                    })
                    .collect(),
            );
            let t1 = objective(&placement, &problem).unwrap();
            let t2 = objective(&swapped, &problem).unwrap();
            assert!(close(t1, t2, 1e-12), "seed {seed}: {t1} vs {t2}");
        }
    }
}

#[test]
fn fixtures_survive_json_round_trip() {
    for cnn in [
        fixtures::cnn5(),
        fixtures::gc6(),
        fixtures::alexnet(),
        fixtures::gc_alexnet(),
    ] {
        let text = serde_json::to_string(&cnn).unwrap();
        assert_eq!(serde_json::from_str::<layerplace_core::CnnSpec>(&text).unwrap(), cnn);
    }
    for dev in [fixtures::stm32h7(), fixtures::raspberry_3bp(), fixtures::odroid_c2()] {
        let text = serde_json::to_string(&dev).unwrap();
        assert_eq!(
            serde_json::from_str::<layerplace_core::DeviceClass>(&text).unwrap(),
            dev
        );
    }
    let problem = fixtures::fig1b_problem(vec![fixtures::cnn5(), fixtures::gc6()], 2);
    let text = serde_json::to_string(&problem).unwrap();
    assert_eq!(serde_json::from_str::<PlacementProblem>(&text).unwrap(), problem);
}

#[test]
fn fig1b_geometry() {
    let topo = fixtures::fig1b();
    let id = |name: &str| topo.index_of(name).unwrap();
    assert!(topo.adjacency().connected(id("s"), id("n05")));
    assert!(!topo.adjacency().connected(id("s"), id("n04")));
    assert_eq!(topo.hops(id("n04"), id("f")), Some(2));
    assert!(topo.assert_connected().is_ok());
}
