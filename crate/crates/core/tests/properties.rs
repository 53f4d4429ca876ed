use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgnn_core::lab::{objective_value, Objective};
use sgnn_core::layerwise::layerwise_probs;
use sgnn_core::subgraph::{degree_node_probs, uniform_node_probs};
use sgnn_core::synthetic::{erdos_renyi, uniform_matrix};
use sgnn_core::*;

fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (1..=max_nodes).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |e| Graph::from_edges(n, e).unwrap())
    })
}

/// Graphs where every node has at least one neighbour.
fn connected_ish(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (2..=max_nodes, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = erdos_renyi(n, 0.3, &mut rng);
        let mut edges: Vec<_> = g.edges().collect();
        edges.extend((0..n).filter(|&v| g.degree(v) == 0).map(|v| (v, (v + 1) % n)));
        Graph::from_edges(n, edges).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn normalized_adjacency_is_exactly_symmetric(g in graph_strategy(30)) {
        let adj = normalize_adjacency(&g);
        for i in 0..g.num_nodes() {
            let (cols, w) = adj.row(i);
            for (&j, &a) in cols.iter().zip(w) {
                prop_assert_eq!(a.to_bits(), adj.weight(j, i).to_bits());
            }
        }
    }

    #[test]
    fn regular_graph_weights_are_reciprocal_degree(n in 5usize..40, r in 1usize..3) {
        prop_assume!(n > 2 * r);
        let edges = (0..n).flat_map(|i| (1..=r).map(move |s| (i, (i + s) % n)));
        let g = Graph::from_edges(n, edges).unwrap();
        let adj = normalize_adjacency(&g);
        let expected = 1.0 / (2 * r + 1) as f64;
        for i in 0..n {
            for &a in adj.row(i).1 {
                prop_assert!((a - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn column_norms_match_dense_brute_force(g in graph_strategy(50), picks in proptest::collection::vec(any::<prop::sample::Index>(), 0..20)) {
        let n = g.num_nodes();
        let adj = normalize_adjacency(&g);
        let rows: Vec<usize> = picks.iter().map(|p| p.index(n)).collect();
        let mut distinct = rows.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let dense = adj.to_dense();
        let got = column_sq_norms(&adj, &rows);
        for j in 0..n {
            let want = distinct.iter().map(|&i| dense.get(i, j).powi(2)).sum::<f64>().sqrt();
            prop_assert!((got[j] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn sampled_nodes_always_couple_to_the_level_above(g in graph_strategy(40), seed in any::<u64>(), batch_len in 1usize..6) {
        let n = g.num_nodes();
        let adj = normalize_adjacency(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<usize> = (0..batch_len.min(n)).map(|k| (k * 7 + seed as usize) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let hw = HwTable::new(n, 2, 1000.0).unwrap();
        let plan = build_plan(&batch, &adj, &hw, &[5, 5], &mut rng).unwrap();
        for l in 1..plan.levels().len() {
            for &j in &plan.level(l - 1).nodes {
                prop_assert!(plan.level(l).nodes.iter().any(|&i| adj.weight(i, j) > 0.0));
            }
        }
    }

    #[test]
    fn hw_table_storage_is_two_entries_per_node_and_layer(n in 1usize..200, layers in 1usize..5) {
        let hw = HwTable::new(n, layers, 1.0).unwrap();
        prop_assert_eq!(hw.storage_len(), 2 * layers * n);
    }

    #[test]
    fn scaling_every_estimate_leaves_probabilities_unchanged(
        coupling in proptest::collection::vec(0.0f64..1.0, 1..20),
        obs in proptest::collection::vec(0.01f64..10.0, 1..20),
        scale in 0.01f64..100.0,
    ) {
        let n = coupling.len();
        prop_assume!(coupling.iter().sum::<f64>() > 0.0);
        let mut a = HwTable::new(n, 1, 1.0).unwrap();
        let mut b = HwTable::new(n, 1, scale).unwrap();
        for (k, &o) in obs.iter().enumerate() {
            a.observe(0, k % n, o);
            b.observe(0, k % n, o * scale);
        }
        let pa = layerwise_probs(&coupling, &a, 0).unwrap();
        let pb = layerwise_probs(&coupling, &b, 0).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn induced_edge_distribution_sums_to_one(g in connected_ish(40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = uniform_matrix(1, g.num_nodes(), 0.01, 1.0, &mut rng);
        let total: f64 = raw.as_slice().iter().sum();
        let q: Vec<f64> = raw.as_slice().iter().map(|v| v / total).collect();
        let ed = induced_edge_probs(&q, &g).unwrap();
        prop_assert!((ed.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn edge_sampled_subgraphs_have_no_isolated_nodes(g in connected_ish(30), seed in any::<u64>(), m in 1usize..8) {
        let adj = normalize_adjacency(&g);
        let q = uniform_node_probs(g.num_nodes());
        let ed = induced_edge_probs(&q, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let sub = sample_subgraph_edges(&ed, &adj, m, &mut rng).unwrap();
            for k in 0..sub.len() {
                prop_assert!(sub.adjacency().row(k).0.len() >= 2, "node {} isolated", sub.nodes()[k]);
            }
        }
    }

    #[test]
    fn extracted_weights_equal_parent_weights(g in graph_strategy(30), mask in any::<u64>()) {
        let n = g.num_nodes();
        let adj = normalize_adjacency(&g);
        let mut nodes: Vec<usize> = (0..n).filter(|v| mask >> (v % 64) & 1 == 1).collect();
        if nodes.is_empty() {
            nodes.push(0);
        }
        let sub = extract_subgraph(&adj, &nodes).unwrap();
        for (a, &u) in nodes.iter().enumerate() {
            for (b, &v) in nodes.iter().enumerate() {
                prop_assert_eq!(sub.weight(a, b).to_bits(), adj.weight(u, v).to_bits());
            }
        }
    }

    #[test]
    fn frozen_feature_sampler_beats_uniform_and_degree(g in connected_ish(12), seed in any::<u64>()) {
        let n = g.num_nodes();
        let adj = normalize_adjacency(&g);
        let x = uniform_matrix(n, 3, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let w = DenseMatrix::identity(3);
        let q = subgraph_node_probs(&adj, &x).unwrap();
        let obj = |p: &[f64]| objective_value(Objective::SubgraphFrozen, &adj, &x, &w, p, n).unwrap();
        let best = obj(&q);
        prop_assert!(best <= obj(&uniform_node_probs(n)) * (1.0 + 1e-12));
        prop_assert!(best <= obj(&degree_node_probs(&adj)) * (1.0 + 1e-12));
    }
}

#[test]
fn whole_graph_extraction_is_the_identity() {
    let g = erdos_renyi(25, 0.2, &mut ChaCha8Rng::seed_from_u64(1));
    let adj = normalize_adjacency(&g);
    let all: Vec<usize> = (0..25).collect();
    assert_eq!(extract_subgraph(&adj, &all).unwrap(), adj);
}

#[test]
fn singleton_extraction_keeps_only_the_self_loop() {
    let g = erdos_renyi(10, 0.5, &mut ChaCha8Rng::seed_from_u64(2));
    let adj = normalize_adjacency(&g);
    let sub = extract_subgraph(&adj, &[4]).unwrap();
    assert_eq!(sub.nnz(), 1);
    assert_eq!(sub.weight(0, 0), adj.weight(4, 4));
}

#[test]
fn node_subgraph_size_follows_the_occupancy_formula() {
    let n = 40;
    let g = erdos_renyi(n, 0.1, &mut ChaCha8Rng::seed_from_u64(3));
    let adj = normalize_adjacency(&g);
    let q = uniform_node_probs(n);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 20_000;
    let sizes: Vec<f64> = (0..trials)
        .map(|_| sample_subgraph_nodes(&adj, &q, n, &mut rng).unwrap().len() as f64)
        .collect();
    let mean = sizes.iter().sum::<f64>() / trials as f64;
    let sd = (sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
    let expected = n as f64 * (1.0 - (1.0 - 1.0 / n as f64).powi(n as i32));
    assert!((mean - expected).abs() < 4.0 * sd / (trials as f64).sqrt(), "{mean} vs {expected}");
}

#[test]
fn node_pools_replay_under_a_fixed_seed() {
    let g = erdos_renyi(50, 0.1, &mut ChaCha8Rng::seed_from_u64(5));
    let adj = normalize_adjacency(&g);
    let q = degree_node_probs(&adj);
    let a = SubgraphPool::node_sampled(&adj, &q, 10, 6, 77).unwrap();
    let b = SubgraphPool::node_sampled(&adj, &q, 10, 6, 77).unwrap();
    assert_eq!(a.subgraphs(), b.subgraphs());
}
