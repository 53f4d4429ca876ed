//! Shared fixtures for the benchmarks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgnn_core::synthetic::{random_graph_with_edges, uniform_matrix};
use sgnn_core::{normalize_adjacency, Activation, DenseMatrix, GnnParameters, Graph, HwTable, NormalizedAdjacency};

/// A random graph with features, two-layer parameters and a warm HW table.
pub struct Fixture {
    pub graph: Graph,
    pub adj: NormalizedAdjacency,
    pub features: DenseMatrix,
    pub params: GnnParameters,
    pub hw: HwTable,
    pub rng: ChaCha8Rng,
}

impl Fixture {
    pub fn new(nodes: usize, edges: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = random_graph_with_edges(nodes, edges, &mut rng);
        let adj = normalize_adjacency(&graph);
        let features = uniform_matrix(nodes, dim, 0.0, 1.0, &mut rng);
        let layers = vec![uniform_matrix(dim, 16, -0.1, 0.1, &mut rng), uniform_matrix(16, 4, -0.1, 0.1, &mut rng)];
        let params = GnnParameters::new(layers, Activation::Relu, 0.0).expect("valid layer shapes");
        let hw = HwTable::new(nodes, 2, 1000.0).expect("non-empty table");
        Self { graph, adj, features, params, hw, rng }
    }

    pub fn batch(&mut self, size: usize) -> Vec<usize> {
        let mut b = sample(&mut self.rng, self.graph.num_nodes(), size).into_vec();
        b.sort_unstable();
        b
    }
}
