//! Seeded random graphs and datasets for tests, benchmarks and the lab.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::graph::{Dataset, FeatureMatrix, Graph, LabelSet, SplitMask};

/// G(n, p).
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).expect("generated ids are in range")
}

/// `m` distinct undirected edges chosen uniformly among the `n(n-1)/2` pairs.
pub fn random_graph_with_edges<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Graph {
    assert!(n >= 2 && m <= n * (n - 1) / 2, "cannot place {m} edges on {n} nodes");
    let mut seen = HashSet::with_capacity(m);
    while seen.len() < m {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            seen.insert((a.min(b), a.max(b)));
        }
    }
    let mut edges: Vec<_> = seen.into_iter().collect();
    edges.sort_unstable();
    Graph::from_edges(n, edges).expect("generated ids are in range")
}

pub fn cycle(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).expect("ids are in range")
}

/// Entries drawn uniformly from `[lo, hi)`.
pub fn uniform_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches")
}

/// Shape of a planted-partition dataset.
#[derive(Debug, Clone)]
pub struct PlantedPartition {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Expected number of same-class neighbours per node.
    pub intra_degree: f64,
    /// Expected number of other-class neighbours per node.
    pub inter_degree: f64,
    /// Mean shift of the class-specific feature block.
    pub signal: f64,
    pub num_train: usize,
    pub num_val: usize,
    pub num_test: usize,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            num_nodes: 600,
            num_classes: 4,
            feature_dim: 32,
            intra_degree: 4.0,
            inter_degree: 1.0,
            signal: 0.6,
            num_train: 120,
            num_val: 120,
            num_test: 240,
        }
    }
}

impl PlantedPartition {
    /// [`PlantedPartition::generate`] driven by a ChaCha8 stream seeded with `seed`.
    pub fn generate_seeded(&self, seed: u64) -> Result<Dataset> {
        self.generate(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stochastic block graph whose features are a noisy class indicator,
    /// so both structure and features carry the label.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        let (n, c) = (self.num_nodes, self.num_classes);
        let labels: Vec<usize> = (0..n).map(|v| v % c).collect();
        let block = n as f64 / c as f64;
        let p_in = (self.intra_degree / (block - 1.0).max(1.0)).min(1.0);
        let p_out = (self.inter_degree / (n as f64 - block).max(1.0)).min(1.0);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if labels[i] == labels[j] { p_in } else { p_out };
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let graph = Graph::from_edges(n, edges)?;
        let d = self.feature_dim;
        let per_class = (d / c).max(1);
        let mut x = DenseMatrix::zeros(n, d);
        for v in 0..n {
            for k in 0..d {
                let noise: f64 = rng.random_range(0.0..1.0);
                let mean = if k / per_class == labels[v] { self.signal } else { 0.0 };
                x.set(v, k, (mean + noise).max(0.0));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let (t, va) = (self.num_train, self.num_val);
        let split = SplitMask::new(
            n,
            order[..t].to_vec(),
            order[t..t + va].to_vec(),
            order[t + va..(t + va + self.num_test).min(n)].to_vec(),
        )?;
        Ok(Dataset {
            graph,
            features: FeatureMatrix::new(x)?,
            labels: LabelSet::new(labels, c)?,
            split,
        })
    }
}
