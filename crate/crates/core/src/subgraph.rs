//! Subgraph sampling performed once before training: a node sampler
//! weighted by feature norms and full-graph couplings, the edge sampler it
//! induces, induced-subgraph extraction and a persistable pool.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{column_sq_norms, Graph, NormalizedAdjacency};

/// Per-node inputs of the subgraph node sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphPlanInputs {
    pub feature_norms: Vec<f64>,
    pub coupling: Vec<f64>,
    pub degrees: Vec<usize>,
}

impl SubgraphPlanInputs {
    pub fn new(graph: &Graph, adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<Self> {
        if x.rows() != adj.num_nodes() || graph.num_nodes() != adj.num_nodes() {
            return Err(Error::Shape(format!(
                "{} feature rows, {} graph nodes, {} adjacency rows",
                x.rows(),
                graph.num_nodes(),
                adj.num_nodes()
            )));
        }
        let all: Vec<usize> = (0..adj.num_nodes()).collect();
        Ok(Self {
            feature_norms: (0..x.rows()).map(|r| x.row_norm(r)).collect(),
            coupling: column_sq_norms(adj, &all),
            degrees: graph.degrees().to_vec(),
        })
    }
}

fn normalize(mut q: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = q.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    q.iter_mut().for_each(|v| *v /= total);
    Some(q)
}

/// `q̂_j ∝ √(Σ_i Â²_ij) · ‖x_j‖₂` over all nodes. Falls back to the coupling
/// alone when every feature row is zero.
pub fn subgraph_node_probs(adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<Vec<f64>> {
    let n = adj.num_nodes();
    if n == 0 {
        return Err(Error::Empty("graph"));
    }
    if x.rows() != n {
        return Err(Error::Shape(format!("{} feature rows for {n} nodes", x.rows())));
    }
    let all: Vec<usize> = (0..n).collect();
    let coupling = column_sq_norms(adj, &all);
    let weighted = coupling
        .iter()
        .enumerate()
        .map(|(j, c)| c * x.row_norm(j))
        .collect();
    if let Some(q) = normalize(weighted) {
        return Ok(q);
    }
    log::warn!("all feature rows are zero; node sampler uses couplings only");
    normalize(coupling).ok_or(Error::Empty("adjacency"))
}

/// Uniform distribution over all nodes.
pub fn uniform_node_probs(num_nodes: usize) -> Vec<f64> {
    vec![1.0 / num_nodes as f64; num_nodes]
}

/// `q_j ∝ deg(j) + 1`.
pub fn degree_node_probs(adj: &NormalizedAdjacency) -> Vec<f64> {
    let w = (0..adj.num_nodes()).map(|j| adj.row(j).0.len() as f64).collect();
    normalize(w).unwrap_or_default()
}

/// Keeps the entries of `adj` whose endpoints are both in `nodes`, renumbered
/// so that local index `k` is parent node `nodes[k]`.
pub fn extract_subgraph(adj: &NormalizedAdjacency, nodes: &[usize]) -> Result<NormalizedAdjacency> {
    if nodes.is_empty() {
        return Err(Error::Empty("node set"));
    }
    let n = adj.num_nodes();
    let mut local = vec![usize::MAX; n];
    for (k, &v) in nodes.iter().enumerate() {
        if v >= n {
            return Err(Error::InvalidArgument(format!("node {v} out of range")));
        }
        if local[v] != usize::MAX {
            return Err(Error::InvalidArgument(format!("node {v} listed twice")));
        }
        local[v] = k;
    }
    let mut offsets = Vec::with_capacity(nodes.len() + 1);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    let mut row: Vec<(usize, f64)> = Vec::new();
    for &v in nodes {
        row.clear();
        let (c, w) = adj.row(v);
        row.extend(
            c.iter()
                .zip(w)
                .filter(|(&j, _)| local[j] != usize::MAX)
                .map(|(&j, &a)| (local[j], a)),
        );
        row.sort_unstable_by_key(|e| e.0);
        for &(j, a) in &row {
            cols.push(j);
            weights.push(a);
        }
        offsets.push(cols.len());
    }
    Ok(NormalizedAdjacency::from_parts(offsets, cols, weights, adj.normalization()))
}

/// An induced subgraph with the probabilities used to reweight it.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    nodes: Vec<usize>,
    adjacency: NormalizedAdjacency,
    probs: Vec<f64>,
    sample_count: usize,
    draw_counts: Vec<u32>,
    draw_probs: Vec<f64>,
    num_draws: usize,
}

impl Subgraph {
    /// `nodes` must be sorted and distinct. `probs`/`sample_count` drive the
    /// aggregation reweighting; `draw_counts`, `draw_probs` and `num_draws`
    /// describe the draws for the loss.
    pub fn new(
        adj: &NormalizedAdjacency,
        nodes: Vec<usize>,
        probs: Vec<f64>,
        sample_count: usize,
        draw_counts: Vec<u32>,
        draw_probs: Vec<f64>,
        num_draws: usize,
    ) -> Result<Self> {
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("subgraph nodes must be sorted and distinct".into()));
        }
        let k = nodes.len();
        if probs.len() != k || draw_counts.len() != k || draw_probs.len() != k {
            return Err(Error::Shape("per-node subgraph arrays differ in length".into()));
        }
        if let Some(i) = (0..k).find(|&i| !(probs[i] > 0.0) || !(draw_probs[i] > 0.0)) {
            return Err(Error::InvalidPlan(format!(
                "subgraph node {} has zero probability",
                nodes[i]
            )));
        }
        if sample_count == 0 || num_draws == 0 {
            return Err(Error::InvalidArgument("subgraph sample counts must be positive".into()));
        }
        let adjacency = extract_subgraph(adj, &nodes)?;
        Ok(Self {
            nodes,
            adjacency,
            probs,
            sample_count,
            draw_counts,
            draw_probs,
            num_draws,
        })
    }

    /// The whole graph with a uniform distribution and one draw per node.
    pub fn full(adj: &NormalizedAdjacency) -> Result<Self> {
        let n = adj.num_nodes();
        let q = uniform_node_probs(n);
        Self::new(adj, (0..n).collect(), q.clone(), n, vec![1; n], q, n)
    }

    /// Parent ids, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Induced Â in local numbering.
    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adjacency
    }

    /// Aggregation probabilities `q̂(v)`, local order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `n_s` used in the aggregation normalizer.
    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Multiplicity of each node among the draws.
    pub fn draw_counts(&self) -> &[u32] {
        &self.draw_counts
    }

    /// Per-draw probability of each node under the sampling distribution.
    pub fn draw_probs(&self) -> &[f64] {
        &self.draw_probs
    }

    pub fn num_draws(&self) -> usize {
        self.num_draws
    }

    pub fn local_index(&self, v: usize) -> Option<usize> {
        self.nodes.binary_search(&v).ok()
    }
}

fn weighted_index(probs: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(probs)
        .map_err(|e| Error::InvalidArgument(format!("invalid sampling distribution: {e}")))
}

/// `n_s` i.i.d. node draws from `q`, deduplicated.
pub fn sample_subgraph_nodes<R: Rng + ?Sized>(
    adj: &NormalizedAdjacency,
    q: &[f64],
    n_s: usize,
    rng: &mut R,
) -> Result<Subgraph> {
    if n_s == 0 {
        return Err(Error::InvalidArgument("node sample count must be at least 1".into()));
    }
    if q.len() != adj.num_nodes() {
        return Err(Error::Shape(format!("{} probabilities for {} nodes", q.len(), adj.num_nodes())));
    }
    let dist = weighted_index(q)?;
    let mut draws: Vec<usize> = (0..n_s).map(|_| dist.sample(rng)).collect();
    draws.sort_unstable();
    let mut nodes = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for v in draws {
        if nodes.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1;
        } else {
            nodes.push(v);
            counts.push(1);
        }
    }
    let probs: Vec<f64> = nodes.iter().map(|&v| q[v]).collect();
    Subgraph::new(adj, nodes, probs.clone(), n_s, counts, probs, n_s)
}

/// Edge distribution induced by a node distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDistribution {
    edges: Vec<(usize, usize)>,
    probs: Vec<f64>,
    inclusion: Vec<f64>,
}

impl EdgeDistribution {
    /// Undirected edges, `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `q̃(v) = Σ_{e∋v} Pr(e)`; sums to 2.
    pub fn inclusion(&self) -> &[f64] {
        &self.inclusion
    }

    /// Probability that one endpoint slot of one edge draw is `v`: `q̃(v)/2`.
    pub fn endpoint_probs(&self) -> Vec<f64> {
        self.inclusion.iter().map(|p| p / 2.0).collect()
    }
}

/// `Pr(e_ij) = q_i/D_i + q_j/D_j`, with `q` renormalized over non-isolated
/// nodes so the edge probabilities sum to one.
pub fn induced_edge_probs(q: &[f64], graph: &Graph) -> Result<EdgeDistribution> {
    let n = graph.num_nodes();
    if q.len() != n {
        return Err(Error::Shape(format!("{} probabilities for {n} nodes", q.len())));
    }
    let covered: f64 = (0..n).filter(|&v| graph.degree(v) > 0).map(|v| q[v]).sum();
    if !(covered > 0.0) {
        return Err(Error::InvalidArgument(
            "no probability mass on nodes with edges".into(),
        ));
    }
    let per_edge: Vec<f64> = (0..n)
        .map(|v| match graph.degree(v) {
            0 => 0.0,
            d => q[v] / covered / d as f64,
        })
        .collect();
    let edges: Vec<(usize, usize)> = graph.edges().collect();
    let probs: Vec<f64> = edges.iter().map(|&(i, j)| per_edge[i] + per_edge[j]).collect();
    let mut inclusion = vec![0.0; n];
    for (&(i, j), &p) in edges.iter().zip(&probs) {
        inclusion[i] += p;
        inclusion[j] += p;
    }
    Ok(EdgeDistribution {
        edges,
        probs,
        inclusion,
    })
}

/// `m` i.i.d. edge draws; the subgraph is induced on their endpoints.
///
/// Aggregation uses the inclusion proxy `q̃` renormalized over the sampled
/// nodes with `n_s = |V_s|`. The loss treats the `2m` endpoint slots as draws
/// from `q̃/2`.
pub fn sample_subgraph_edges<R: Rng + ?Sized>(
    ed: &EdgeDistribution,
    adj: &NormalizedAdjacency,
    m: usize,
    rng: &mut R,
) -> Result<Subgraph> {
    if m == 0 {
        return Err(Error::InvalidArgument("edge sample count must be at least 1".into()));
    }
    if ed.inclusion.len() != adj.num_nodes() {
        return Err(Error::Shape("edge distribution belongs to another graph".into()));
    }
    let dist = weighted_index(&ed.probs)?;
    let mut ends = Vec::with_capacity(2 * m);
    for _ in 0..m {
        let (i, j) = ed.edges[dist.sample(rng)];
        ends.push(i);
        ends.push(j);
    }
    ends.sort_unstable();
    let mut nodes = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for v in ends {
        if nodes.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1;
        } else {
            nodes.push(v);
            counts.push(1);
        }
    }
    let mass: f64 = nodes.iter().map(|&v| ed.inclusion[v]).sum();
    let probs: Vec<f64> = nodes.iter().map(|&v| ed.inclusion[v] / mass).collect();
    let draw_probs: Vec<f64> = nodes.iter().map(|&v| ed.inclusion[v] / 2.0).collect();
    let k = nodes.len();
    Subgraph::new(adj, nodes, probs, k, counts, draw_probs, 2 * m)
}

/// Which subgraph sampler built a pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Node,
    Edge,
}

/// Subgraphs drawn once and cycled through during training.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphPool {
    subgraphs: Vec<Subgraph>,
    draw_distribution: Vec<f64>,
}

fn stream_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    rng
}

impl SubgraphPool {
    /// `count` node-sampled subgraphs of `n_s` draws each. Subgraph `k` uses
    /// its own RNG stream of `seed`, so the pool does not depend on the
    /// number of worker threads.
    pub fn node_sampled(
        adj: &NormalizedAdjacency,
        q: &[f64],
        n_s: usize,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        let subgraphs = (0..count)
            .into_par_iter()
            .map(|k| sample_subgraph_nodes(adj, q, n_s, &mut stream_rng(seed, k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            subgraphs,
            draw_distribution: q.to_vec(),
        })
    }

    /// `count` edge-sampled subgraphs of `m` edge draws each.
    pub fn edge_sampled(
        ed: &EdgeDistribution,
        adj: &NormalizedAdjacency,
        m: usize,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        let subgraphs = (0..count)
            .into_par_iter()
            .map(|k| sample_subgraph_edges(ed, adj, m, &mut stream_rng(seed, k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            subgraphs,
            draw_distribution: ed.endpoint_probs(),
        })
    }

    pub fn subgraphs(&self) -> &[Subgraph] {
        &self.subgraphs
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }

    /// Full-graph per-draw distribution the loss weights refer to.
    pub fn draw_distribution(&self) -> &[f64] {
        &self.draw_distribution
    }

    /// Writes `subgraphs.csv`, `nodes.csv`, `edges.csv` and `distribution.csv`
    /// under `dir`. Edges are stored once per pair with parent ids.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut meta = String::from("subgraph,sample_count,num_draws\n");
        let mut nodes = String::from("subgraph,node,prob,draw_count,draw_prob\n");
        let mut edges = String::from("subgraph,src,dst\n");
        for (s, sub) in self.subgraphs.iter().enumerate() {
            let _ = writeln!(meta, "{s},{},{}", sub.sample_count, sub.num_draws);
            for k in 0..sub.len() {
                let _ = writeln!(
                    nodes,
                    "{s},{},{},{},{}",
                    sub.nodes[k], sub.probs[k], sub.draw_counts[k], sub.draw_probs[k]
                );
                for &j in sub.adjacency.row(k).0 {
                    if j > k {
                        let _ = writeln!(edges, "{s},{},{}", sub.nodes[k], sub.nodes[j]);
                    }
                }
            }
        }
        let mut dist = String::from("node,prob\n");
        for (v, p) in self.draw_distribution.iter().enumerate() {
            let _ = writeln!(dist, "{v},{p}");
        }
        for (name, body) in [
            ("subgraphs.csv", meta),
            ("nodes.csv", nodes),
            ("edges.csv", edges),
            ("distribution.csv", dist),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Reads a pool written by [`SubgraphPool::save`]. Induced adjacencies
    /// are rebuilt from `adj` and checked against `edges.csv`.
    pub fn load(dir: impl AsRef<Path>, adj: &NormalizedAdjacency) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<(std::path::PathBuf, Vec<(usize, Vec<String>)>)> {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let rows = text
                .lines()
                .enumerate()
                .skip(1)
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| (i + 1, l.trim().split(',').map(str::to_owned).collect()))
                .collect();
            Ok((path, rows))
        };
        fn field<T: std::str::FromStr>(
            path: &Path,
            line: usize,
            row: &[String],
            k: usize,
        ) -> Result<T> {
            row.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::parse(path, line, format!("bad or missing column {}", k + 1)))
        }

        let (meta_path, meta) = read("subgraphs.csv")?;
        let mut specs = Vec::with_capacity(meta.len());
        for (line, row) in &meta {
            let s: usize = field(&meta_path, *line, row, 0)?;
            if s != specs.len() {
                return Err(Error::parse(&meta_path, *line, "subgraph ids must be consecutive"));
            }
            specs.push((
                field::<usize>(&meta_path, *line, row, 1)?,
                field::<usize>(&meta_path, *line, row, 2)?,
            ));
        }
        let mut parts: Vec<(Vec<usize>, Vec<f64>, Vec<u32>, Vec<f64>)> =
            vec![Default::default(); specs.len()];
        let (nodes_path, rows) = read("nodes.csv")?;
        for (line, row) in &rows {
            let s: usize = field(&nodes_path, *line, row, 0)?;
            let p = parts
                .get_mut(s)
                .ok_or_else(|| Error::parse(&nodes_path, *line, format!("unknown subgraph {s}")))?;
            p.0.push(field(&nodes_path, *line, row, 1)?);
            p.1.push(field(&nodes_path, *line, row, 2)?);
            p.2.push(field(&nodes_path, *line, row, 3)?);
            p.3.push(field(&nodes_path, *line, row, 4)?);
        }
        let (dist_path, rows) = read("distribution.csv")?;
        let mut draw_distribution = vec![0.0; adj.num_nodes()];
        for (line, row) in &rows {
            let v: usize = field(&dist_path, *line, row, 0)?;
            *draw_distribution
                .get_mut(v)
                .ok_or_else(|| Error::parse(&dist_path, *line, format!("node {v} out of range")))? =
                field(&dist_path, *line, row, 1)?;
        }
        let subgraphs = parts
            .into_iter()
            .zip(specs)
            .map(|((nodes, probs, counts, dprobs), (n_s, draws))| {
                Subgraph::new(adj, nodes, probs, n_s, counts, dprobs, draws)
            })
            .collect::<Result<Vec<_>>>()?;
        let (edges_path, rows) = read("edges.csv")?;
        let mut stored = vec![0usize; subgraphs.len()];
        for (line, row) in &rows {
            let s: usize = field(&edges_path, *line, row, 0)?;
            let (u, v): (usize, usize) = (
                field(&edges_path, *line, row, 1)?,
                field(&edges_path, *line, row, 2)?,
            );
            let sub = subgraphs
                .get(s)
                .ok_or_else(|| Error::parse(&edges_path, *line, format!("unknown subgraph {s}")))?;
            match (sub.local_index(u), sub.local_index(v)) {
                (Some(a), Some(b)) if sub.adjacency.weight(a, b) > 0.0 => stored[s] += 1,
                _ => {
                    return Err(Error::parse(
                        &edges_path,
                        *line,
                        format!("edge {u}-{v} is not in the induced subgraph {s}"),
                    ))
                }
            }
        }
        for (s, sub) in subgraphs.iter().enumerate() {
            let expected = (0..sub.len())
                .map(|k| sub.adjacency.row(k).0.iter().filter(|&&j| j > k).count())
                .sum::<usize>();
            if stored[s] != expected {
                return Err(Error::Dataset(format!(
                    "{}: subgraph {s} lists {} edges, the graph induces {expected}",
                    edges_path.display(),
                    stored[s]
                )));
            }
        }
        Ok(Self {
            subgraphs,
            draw_distribution,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize_adjacency;

    fn triangle() -> (Graph, NormalizedAdjacency) {
        let g = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let a = normalize_adjacency(&g);
        (g, a)
    }

    #[test]
    fn node_probs_follow_feature_norms() {
        let (_, adj) = triangle();
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]).unwrap();
        for q in subgraph_node_probs(&adj, &x).unwrap() {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = DenseMatrix::from_rows(&[vec![2.0], vec![1.0], vec![-1.0]]).unwrap();
        let q = subgraph_node_probs(&adj, &x).unwrap();
        for (got, want) in q.iter().zip([0.5, 0.25, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
        let q = subgraph_node_probs(&adj, &DenseMatrix::zeros(3, 2)).unwrap();
        assert!(q.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn edge_probs_examples() {
        let (g, _) = triangle();
        let ed = induced_edge_probs(&[1.0 / 3.0; 3], &g).unwrap();
        assert!(ed.probs().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let path = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let ed = induced_edge_probs(&[1.0 / 3.0; 3], &path).unwrap();
        assert_eq!(ed.edges(), &[(0, 1), (1, 2)]);
        for p in ed.probs() {
            assert!((p - 0.5).abs() < 1e-15);
        }
        assert!((ed.inclusion().iter().sum::<f64>() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_nodes_are_skipped() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        let ed = induced_edge_probs(&[0.25; 4], &g).unwrap();
        assert!((ed.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(ed.inclusion()[3], 0.0);
        assert!(induced_edge_probs(&[1.0], &Graph::from_edges(1, []).unwrap()).is_err());
    }

    #[test]
    fn point_mass_node_sample() {
        let (_, adj) = triangle();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sub = sample_subgraph_nodes(&adj, &[0.0, 1.0, 0.0], 5, &mut rng).unwrap();
        assert_eq!(sub.nodes(), &[1]);
        assert_eq!(sub.draw_counts(), &[5]);
        assert_eq!(sub.sample_count(), 5);
        assert!(sample_subgraph_nodes(&adj, &[1.0 / 3.0; 3], 0, &mut rng).is_err());
    }

    #[test]
    fn edge_sample_on_triangle_has_two_nodes() {
        let (g, adj) = triangle();
        let ed = induced_edge_probs(&[1.0 / 3.0; 3], &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let sub = sample_subgraph_edges(&ed, &adj, 1, &mut rng).unwrap();
            assert_eq!(sub.len(), 2);
            assert_eq!(sub.sample_count(), 2);
            assert_eq!(sub.num_draws(), 2);
            assert!((sub.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        let single = Graph::from_edges(2, [(0, 1)]).unwrap();
        let ed = induced_edge_probs(&[0.5, 0.5], &single).unwrap();
        let sub = sample_subgraph_edges(&ed, &normalize_adjacency(&single), 3, &mut rng).unwrap();
        assert_eq!(sub.nodes(), &[0, 1]);
        assert!(sample_subgraph_edges(&ed, &normalize_adjacency(&single), 0, &mut rng).is_err());
    }

    #[test]
    fn extraction() {
        let (_, adj) = triangle();
        assert_eq!(extract_subgraph(&adj, &[0, 1, 2]).unwrap(), adj);
        let one = extract_subgraph(&adj, &[2]).unwrap();
        assert_eq!(one.row(0), (&[0usize][..], &[1.0 / 3.0][..]));
        assert!(extract_subgraph(&adj, &[]).is_err());
        assert!(extract_subgraph(&adj, &[1, 1]).is_err());
        assert!(extract_subgraph(&adj, &[3]).is_err());
    }

    #[test]
    fn pool_is_seeded_and_round_trips() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]).unwrap();
        let adj = normalize_adjacency(&g);
        let q = uniform_node_probs(6);
        let a = SubgraphPool::node_sampled(&adj, &q, 3, 4, 17).unwrap();
        let b = SubgraphPool::node_sampled(&adj, &q, 3, 4, 17).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        assert_eq!(SubgraphPool::load(dir.path(), &adj).unwrap(), a);

        let ed = induced_edge_probs(&q, &g).unwrap();
        let e = SubgraphPool::edge_sampled(&ed, &adj, 2, 3, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        e.save(dir.path()).unwrap();
        assert_eq!(SubgraphPool::load(dir.path(), &adj).unwrap(), e);
    }

    #[test]
    fn corrupted_pool_edges_are_rejected() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let adj = normalize_adjacency(&g);
        let pool = SubgraphPool::node_sampled(&adj, &uniform_node_probs(4), 4, 2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        pool.save(dir.path()).unwrap();
        std::fs::write(dir.path().join("edges.csv"), "subgraph,src,dst\n0,0,3\n").unwrap();
        assert!(SubgraphPool::load(dir.path(), &adj).is_err());
    }
}
